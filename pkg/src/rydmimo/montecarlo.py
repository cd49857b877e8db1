"""Random channel generation, Monte Carlo campaigns, and classical baselines."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from scipy.constants import c as c0, k as k_B

from .signal_model import weighted_se, user_se
from .wmmse import Scenario, SolverConfig, qwmmse_solve

__all__ = [
    "ChannelModel",
    "CampaignConfig",
    "ScenarioTemplate",
    "sample_channel",
    "mutual_coupling_matrix",
    "classical_noise_covariance",
    "classical_baseline_solve",
    "build_scenario",
    "scheme_rates",
    "run_campaign",
    "SCHEME_NAMES",
]

SCHEME_NAMES = ("qSDMA-Opt", "qSDMA-NoOpt", "qFDMA-Opt", "qFDMA-NoOpt",
                "cSDMA-MC", "cSDMA-noMC")

THREADS_ENV = "RYDMIMO_THREADS"


@dataclass(frozen=True)
class ChannelModel:
    """Large-scale and small-scale fading model of the uplink channels.

    fading: "iid-rayleigh", or "constant" (unit-magnitude test hook that
    leaves only the pathloss amplitude).  pathloss: "free-space"
    (amplitude lambda/(4 pi d)) or ("exponent", n) with amplitude
    lambda/(4 pi) * d^(-n/2), d in m and a 1 m reference distance.
    """

    fading: str = "iid-rayleigh"
    distance_range: tuple = (500.0, 1500.0)
    pathloss: object = "free-space"
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.distance_range
        if not (0 < lo <= hi):
            raise ValueError("distance bounds must be positive and ordered")
        if self.fading not in ("iid-rayleigh", "constant"):
            raise ValueError(f"unknown fading model {self.fading!r}")
        if isinstance(self.pathloss, str):
            if self.pathloss != "free-space":
                raise ValueError(f"unknown pathloss model {self.pathloss!r}")
        else:
            kind, exponent = self.pathloss
            if kind != "exponent" or exponent <= 0:
                raise ValueError("pathloss must be 'free-space' or ('exponent', n>0)")


def pathloss_amplitude(model, distance, f_c):
    """Large-scale amplitude gain at the given distance and carrier."""
    lam = c0 / f_c
    if model.pathloss == "free-space":
        return lam / (4.0 * math.pi * distance)
    _, exponent = model.pathloss
    return lam / (4.0 * math.pi) * distance ** (-0.5 * exponent)


def sample_channel(model, n_r, n_t, f_c, rng):
    """One uplink channel draw: uniform distance, pathloss, small-scale fading."""
    d = rng.uniform(*model.distance_range)
    amp = pathloss_amplitude(model, d, f_c)
    if model.fading == "constant":
        return amp * np.ones((n_r, n_t), dtype=complex)
    fading = (rng.standard_normal((n_r, n_t))
              + 1j * rng.standard_normal((n_r, n_t))) / math.sqrt(2.0)
    return amp * fading


def mutual_coupling_matrix(n_r, rho=0.3, phase=0.0):
    """Symmetric nearest-neighbor coupling with geometric decay rho^|i-j|."""
    if abs(rho) >= 1.0:
        raise ValueError("coupling magnitude must be < 1")
    idx = np.arange(n_r)
    base = rho * np.exp(1j * phase)
    return base ** np.abs(idx[:, None] - idx[None, :])


def classical_noise_covariance(n_r, temperature, bandwidth, noise_figure_db=3.0):
    """Thermal noise covariance F k_B T BW I of a classical receiver array."""
    f = 10.0 ** (noise_figure_db / 10.0)
    return f * k_B * temperature * bandwidth * np.eye(n_r, dtype=complex)


def classical_baseline_solve(scenario, coupling=None, config=SolverConfig(),
                             noise_figure_db=3.0):
    """Standard WMMSE on a classical receiver array serving all users.

    The digital gains are unity and the noise is per-chain thermal
    (k_B T BW with the given noise figure).  A mutual coupling matrix, when
    supplied, is normalized to unit spectral norm (a passive network) and
    multiplies the channels; the chain noise enters after the coupling
    network and stays white.  Shaping the noise as C C_n C^H instead would
    make the coupling an invertible receive transform with provably no rate
    effect, so the degradation the coupled baseline is meant to exhibit
    requires the post-network noise model.  The LO loop is off.
    """
    n_r = scenario.n_r
    c_n = classical_noise_covariance(
        n_r, scenario.noise.temperature, scenario.band_front_ends[0].bw_if,
        noise_figure_db)
    channels = scenario.channels
    if coupling is not None:
        coupling = np.asarray(coupling, dtype=complex)
        if coupling.shape != (n_r, n_r):
            raise ValueError("coupling matrix must be N_r x N_r")
        cond = np.linalg.cond(coupling)
        if not np.isfinite(cond) or cond > 1e12:
            raise ValueError("coupling matrix must be invertible")
        coupling = coupling / np.linalg.norm(coupling, 2)
        channels = np.einsum("ij,mkjt->mkit", coupling, channels)
    classical = Scenario(
        channels=channels,
        power_budgets=scenario.power_budgets,
        weights=scenario.weights,
        band_front_ends=scenario.band_front_ends,
        noise=scenario.noise,
        atomic=scenario.atomic,
        classical_noise_cov=c_n)
    cfg = replace(config, scheme="sdma", optimize_lo=False)
    return qwmmse_solve(classical, cfg)


@dataclass(frozen=True, eq=False)
class ScenarioTemplate:
    """Everything needed to instantiate per-trial scenarios except channels."""

    atomic: object
    band_front_ends: tuple
    noise: object
    channel_model: ChannelModel
    n_r: int
    n_t: int
    num_users: int
    weights: object = 1.0


@dataclass(frozen=True)
class CampaignConfig:
    """Monte Carlo campaign: trials x power grid x schemes."""

    num_trials: int
    power_grid: tuple
    schemes: tuple = ("qSDMA-Opt", "qSDMA-NoOpt")
    solver: SolverConfig = SolverConfig()
    seed: int = 0
    noise_figure_db: float = 3.0
    coupling_rho: float = 0.3
    coupling_phase: float = 0.0

    def __post_init__(self):
        if self.num_trials < 1:
            raise ValueError("num_trials must be >= 1")
        if not len(self.power_grid):
            raise ValueError("power grid must be nonempty")
        unknown = set(self.schemes) - set(SCHEME_NAMES)
        if unknown:
            raise ValueError(f"unknown schemes: {sorted(unknown)}")


def draw_channels(template, rng):
    m_bands = len(template.band_front_ends)
    h = np.zeros((m_bands, template.num_users, template.n_r, template.n_t),
                 dtype=complex)
    for m in range(m_bands):
        f_c = template.band_front_ends[m].f_c
        for k in range(template.num_users):
            h[m, k] = sample_channel(template.channel_model, template.n_r,
                                     template.n_t, f_c, rng)
    return h


def build_scenario(template, channels, p_max):
    """Scenario with the equal per-user power rule P_{m,k} = P_max."""
    return Scenario(
        channels=channels,
        power_budgets=float(p_max),
        weights=template.weights,
        band_front_ends=template.band_front_ends,
        noise=template.noise,
        atomic=template.atomic)


def scheme_rates(state, scenario, scheme_name):
    """(WSE [bits/s/Hz], sum rate [bits/s]) under the scheme's bandwidth accounting.

    Every user of an SDMA (and classical) band occupies the full IF band;
    FDMA users occupy a 1/M share.  The weighted SE always normalizes by the
    M-fold RF bandwidth, so SDMA converts at M * BW_IF and FDMA at BW_IF.
    """
    model = _scheme_model(scheme_name)
    wse = weighted_se(state, scenario, model)
    bw = scenario.band_front_ends[0].bw_if
    m_bands = scenario.num_bands
    per_user_bw = bw / m_bands if model == "fdma" else bw
    total = 0.0
    for m in range(m_bands):
        for k in range(scenario.num_users):
            total += user_se(state, scenario, m, k, model) * per_user_bw
    return wse, total


def _scheme_model(scheme_name):
    return "fdma" if scheme_name.startswith("qFDMA") else "sdma"


def _run_single(args):
    (template, campaign, trial) = args
    channel_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=campaign.seed, spawn_key=(trial, 0)))
    channels = draw_channels(template, channel_rng)
    init_seed = np.random.SeedSequence(entropy=campaign.seed, spawn_key=(trial, 1))
    rows = []
    for p_max in campaign.power_grid:
        scenario = build_scenario(template, channels, p_max)
        coupling = mutual_coupling_matrix(
            template.n_r, campaign.coupling_rho, campaign.coupling_phase)
        for scheme_name in campaign.schemes:
            row = {"trial": trial, "power_w": float(p_max), "scheme": scheme_name}
            cfg = replace(
                campaign.solver,
                scheme=_scheme_model(scheme_name),
                optimize_lo=scheme_name.endswith("-Opt"),
                seed=np.random.SeedSequence(entropy=campaign.seed,
                                            spawn_key=(trial, 1)))
            try:
                if scheme_name.startswith("c"):
                    state = classical_baseline_solve(
                        scenario,
                        coupling if scheme_name == "cSDMA-MC" else None,
                        cfg, campaign.noise_figure_db)
                else:
                    state = qwmmse_solve(scenario, cfg)
                wse, sum_rate = scheme_rates(state, scenario, scheme_name)
                row.update(
                    wse=wse, sum_rate=sum_rate,
                    iterations=state.iterations, converged=bool(state.converged),
                    failed=False, error="")
                quantum = not scheme_name.startswith("c")
                for m in range(scenario.num_bands):
                    row[f"g_q_{m + 1}"] = (float(state.gains.g_q[m])
                                           if quantum else math.nan)
                    row[f"e_lo_{m + 1}"] = (float(state.lo.e_lo[m])
                                            if quantum else math.nan)
            except Exception as exc:  # individual trial failures never abort
                row.update(wse=math.nan, sum_rate=math.nan, iterations=0,
                           converged=False, failed=True, error=str(exc))
            rows.append(row)
    return rows


@dataclass(frozen=True)
class CampaignResult:
    trials: list
    aggregates: list
    num_failed: int


def run_campaign(campaign, template):
    """Run the full campaign and aggregate per (power, scheme) statistics.

    Channel draws are shared across schemes and power points of the same
    trial index (common random numbers), and the precoder initialization
    seed is shared across schemes, so Opt/NoOpt comparisons are paired.
    Failed trials are recorded and excluded from the aggregates.
    """
    jobs = [(template, campaign, t) for t in range(campaign.num_trials)]
    workers = int(os.environ.get(THREADS_ENV, "1"))
    if workers > 1 and campaign.num_trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_trial = list(pool.map(_run_single, jobs, chunksize=1))
    else:
        per_trial = [_run_single(j) for j in jobs]
    rows = [row for trial_rows in per_trial for row in trial_rows]

    aggregates = []
    for p_max in campaign.power_grid:
        for scheme_name in campaign.schemes:
            sel = [r for r in rows
                   if r["scheme"] == scheme_name and r["power_w"] == float(p_max)]
            ok = [r for r in sel if not r["failed"]]
            wses = np.array([r["wse"] for r in ok])
            rates = np.array([r["sum_rate"] for r in ok])
            aggregates.append({
                "power_w": float(p_max),
                "scheme": scheme_name,
                "num_trials": len(sel),
                "num_failed": len(sel) - len(ok),
                "wse_mean": float(wses.mean()) if len(ok) else math.nan,
                "wse_std": float(wses.std(ddof=1)) if len(ok) > 1 else 0.0,
                "sum_rate_mean": float(rates.mean()) if len(ok) else math.nan,
                "sum_rate_std": float(rates.std(ddof=1)) if len(ok) > 1 else 0.0,
                "iterations_mean": float(np.mean([r["iterations"] for r in ok]))
                if len(ok) else math.nan,
            })
    num_failed = sum(1 for r in rows if r["failed"])
    return CampaignResult(trials=rows, aggregates=aggregates, num_failed=num_failed)
