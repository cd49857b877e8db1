"""Alternating weighted-MMSE optimizer with joint LO-field adaptation.

Block coordinate descent on the auxiliary objective

    f_q = (1/ln 2) * sum_{m,k} alpha_{m,k} (tr(W E) - ln det W),

whose minimization is equivalent to weighted spectral-efficiency
maximization at fixed points.  One outer iteration refreshes the quantum
gains and Jacobian, updates combiners (LMMSE), weights (inverse MSE),
precoders (regularized least squares with a power bisection), and finally
takes a projected-gradient Armijo step on the LO field amplitudes.  Every
block update is an exact minimizer of f_q over its block, so the objective
is non-increasing throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import signal_model as sm
from .errors import NumericalDegeneracyError, OptimizerFailureError
from .physics import LOConfig, QuantumGains, band_gains, transconductances

_LN2 = math.log(2.0)

__all__ = [
    "Scenario",
    "TransceiverState",
    "ArmijoConfig",
    "SolverConfig",
    "mse_matrix",
    "update_combiners",
    "update_weights",
    "update_precoders",
    "objective_fq",
    "grad_fq_wrt_gq",
    "lo_gradient_step",
    "qwmmse_solve",
]


def _norm_scheme(scheme):
    s = str(scheme).lower()
    if s not in ("sdma", "fdma"):
        raise ValueError(f"unknown scheme {scheme!r} (expected SDMA or FDMA)")
    return s


def _readonly_complex(a):
    out = np.array(a, dtype=complex)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Scenario:
    """Uplink channels, budgets, priorities, and the physical receiver model.

    channels has shape (M, K, N_r, N_t); power_budgets and weights are
    (M, K).  ``classical_noise_cov`` switches the link to a classical
    receiver: unit digital gains and the given fixed noise covariance (no
    quantum front end in the loop).
    """

    channels: np.ndarray
    power_budgets: np.ndarray
    weights: np.ndarray
    band_front_ends: tuple
    noise: sm.NoiseModel
    atomic: object = None
    classical_noise_cov: np.ndarray | None = None

    def __post_init__(self):
        ch = np.array(self.channels, dtype=complex)
        if ch.ndim != 4:
            raise ValueError("channels must have shape (M, K, N_r, N_t)")
        ch.setflags(write=False)
        object.__setattr__(self, "channels", ch)
        m_bands, k_users, n_r, _ = ch.shape
        pb = np.array(self.power_budgets, dtype=float)
        if pb.shape == ():
            pb = np.full((m_bands, k_users), float(pb))
        wt = np.array(self.weights, dtype=float)
        if wt.shape == ():
            wt = np.full((m_bands, k_users), float(wt))
        if pb.shape != (m_bands, k_users) or wt.shape != (m_bands, k_users):
            raise ValueError("power_budgets and weights must have shape (M, K)")
        if np.any(pb <= 0):
            raise ValueError("power budgets must be > 0")
        if np.any(wt < 0):
            raise ValueError("user weights must be >= 0")
        pb.setflags(write=False)
        wt.setflags(write=False)
        object.__setattr__(self, "power_budgets", pb)
        object.__setattr__(self, "weights", wt)
        fes = tuple(self.band_front_ends)
        if len(fes) != m_bands:
            raise ValueError("one front end per band is required")
        object.__setattr__(self, "band_front_ends", fes)
        if self.classical_noise_cov is not None:
            cov = np.array(self.classical_noise_cov, dtype=complex)
            if cov.shape != (n_r, n_r):
                raise ValueError("classical noise covariance must be N_r x N_r")
            cov.setflags(write=False)
            object.__setattr__(self, "classical_noise_cov", cov)
            c_sig = np.ones(m_bands)
            c_q = tuple(np.zeros((n_r, n_r), dtype=complex) for _ in range(m_bands))
        else:
            if self.atomic is None:
                raise ValueError("quantum scenarios require an atomic system")
            if self.atomic.num_bands != m_bands:
                raise ValueError("atomic system and channels disagree on band count")
            c_sig = np.array([sm.signal_coefficient(fe) for fe in fes])
            c_q = tuple(sm.bbr_covariance(fe, self.noise, n_r, band_index=m)
                        for m, fe in enumerate(fes))
        c_sig.setflags(write=False)
        object.__setattr__(self, "c_sig", c_sig)
        object.__setattr__(self, "c_q", c_q)

    @property
    def num_bands(self):
        return self.channels.shape[0]

    @property
    def num_users(self):
        return self.channels.shape[1]

    @property
    def n_r(self):
        return self.channels.shape[2]

    @property
    def n_t(self):
        return self.channels.shape[3]

    @property
    def num_streams(self):
        return min(self.n_t, self.n_r)


@dataclass(frozen=True, eq=False)
class TransceiverState:
    """Precoders, combiners, MSE weights, LO configuration, and traces."""

    precoders: np.ndarray   # (M, K, N_t, S)
    combiners: np.ndarray   # (M, K, N_r, S)
    weights: np.ndarray     # (M, K, S, S)
    lo: LOConfig
    gains: QuantumGains
    objective_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    se_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gq_trace: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    lo_trace: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    converged: bool = False
    iterations: int = 0


@dataclass(frozen=True)
class ArmijoConfig:
    """Backtracking parameters of the projected LO gradient step."""

    c: float = 1e-4
    shrink: float = 0.5
    init_step_frac: float = 0.1
    max_backtracks: int = 40


@dataclass(frozen=True)
class SolverConfig:
    """Outer-loop settings of the alternating optimizer."""

    scheme: str = "sdma"
    epsilon: float = 1e-3
    max_iterations: int = 500
    bisection_tol: float = 1e-8
    armijo: ArmijoConfig = ArmijoConfig()
    e_lo_init: np.ndarray | None = None   # default 10 mV/m per band
    e_lo_min: float = 3e-3
    optimize_lo: bool = True
    seed: object = None


def _gc(state, scenario):
    return sm._link_gains(state, scenario)


def _covariance(state, scenario, scheme, m):
    if scheme == "fdma":
        return sm.band_covariance_fdma(state, scenario, m)
    return sm.received_covariance_sdma(state, scenario)


def _band_covariances(state, scenario, scheme):
    """Received covariance per band (one shared matrix for SDMA)."""
    if scheme == "fdma":
        return [sm.band_covariance_fdma(state, scenario, m)
                for m in range(scenario.num_bands)]
    r_y = sm.received_covariance_sdma(state, scenario)
    return [r_y] * scenario.num_bands


def _mse_with_cov(state, scenario, m, k, gc, r_y):
    u = state.combiners[m, k]
    cross = gc[m] * (u.conj().T @ scenario.channels[m, k] @ state.precoders[m, k])
    s = scenario.num_streams
    return (np.eye(s, dtype=complex) - cross - cross.conj().T
            + u.conj().T @ r_y @ u)


def mse_matrix(state, scenario, m, k, scheme):
    """MSE matrix E_{m,k} of the linear detector under the given scheme."""
    scheme = _norm_scheme(scheme)
    gc = _gc(state, scenario)
    r_y = _covariance(state, scenario, scheme, m)
    return _mse_with_cov(state, scenario, m, k, gc, r_y)


def _solve_psd(a, b):
    """Solve a x = b for Hermitian positive (semi)definite a, with a ridge
    fallback for numerically singular covariances."""
    try:
        return np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        ridge = 1e-12 * np.trace(a).real / a.shape[0]
        return np.linalg.solve(a + ridge * np.eye(a.shape[0]), b)


def update_combiners(state, scenario, scheme):
    """LMMSE combiners U = g C R^-1 H V (per band covariance for FDMA)."""
    scheme = _norm_scheme(scheme)
    gc = _gc(state, scenario)
    out = np.zeros_like(state.combiners)
    r_sdma = None
    for m in range(scenario.num_bands):
        r_y = _covariance(state, scenario, scheme, m) if scheme == "fdma" else \
            (r_sdma if r_sdma is not None else _covariance(state, scenario, scheme, m))
        if scheme != "fdma":
            r_sdma = r_y
        for k in range(scenario.num_users):
            hv = scenario.channels[m, k] @ state.precoders[m, k]
            out[m, k] = gc[m] * _solve_psd(r_y, hv)
    return out


def update_weights(state, scenario, scheme):
    """MSE weights W = (I - g C U^H H V)^-1."""
    _norm_scheme(scheme)
    gc = _gc(state, scenario)
    s = scenario.num_streams
    eye = np.eye(s, dtype=complex)
    out = np.zeros_like(state.weights)
    for m in range(scenario.num_bands):
        for k in range(scenario.num_users):
            a = eye - gc[m] * (state.combiners[m, k].conj().T
                               @ scenario.channels[m, k] @ state.precoders[m, k])
            try:
                out[m, k] = np.linalg.inv(a)
            except np.linalg.LinAlgError as exc:
                raise NumericalDegeneracyError(
                    f"weight update matrix is singular for user ({m}, {k})") from exc
    return out


def _quadratic_forms(state, scenario, scheme):
    """Per-band quadratic forms F (SDMA: one shared sum over all users)."""
    alpha = scenario.weights
    if scheme == "sdma":
        f = np.zeros((scenario.n_r, scenario.n_r), dtype=complex)
        for m in range(scenario.num_bands):
            for k in range(scenario.num_users):
                uw = state.combiners[m, k] @ state.weights[m, k]
                f += alpha[m, k] * (uw @ state.combiners[m, k].conj().T)
        return [f] * scenario.num_bands
    out = []
    for m in range(scenario.num_bands):
        f = np.zeros((scenario.n_r, scenario.n_r), dtype=complex)
        for k in range(scenario.num_users):
            uw = state.combiners[m, k] @ state.weights[m, k]
            f += alpha[m, k] * (uw @ state.combiners[m, k].conj().T)
        out.append(f)
    return out


def _precoder_for_user(g_quad, rhs, p_max, bisection_tol):
    """Minimize the quadratic block over one precoder subject to tr(VV^H) <= P.

    V(mu) = (g_quad + mu I)^-1 rhs with mu >= 0 from complementary
    slackness; the power is evaluated in the eigenbasis of g_quad so each
    bisection step is O(N^2).
    """
    if not np.any(rhs):
        return np.zeros_like(rhs), 0.0
    lam, basis = np.linalg.eigh(g_quad)
    lam = np.maximum(lam, 0.0)
    rt = basis.conj().T @ rhs
    row_power = np.sum(np.abs(rt) ** 2, axis=1)
    rows = [(float(l), float(r)) for l, r in zip(lam, row_power) if r > 0.0]

    def power(mu):
        total = 0.0
        for lam_i, r_i in rows:
            denom = lam_i + mu
            if denom <= 0.0:
                return math.inf
            total += r_i / (denom * denom)
        return total

    def precoder(mu):
        denom = lam + mu
        denom = np.where(denom > 0, denom, 1.0)
        return basis @ (rt / denom[:, None])

    if power(0.0) <= p_max:
        return precoder(0.0), 0.0
    hi = 1.0
    doublings = 0
    while power(hi) > p_max:
        hi *= 2.0
        doublings += 1
        if doublings > 200:
            raise OptimizerFailureError("power bisection failed to bracket the multiplier")
    lo = hi / 2.0 if doublings else 0.0
    for _ in range(400):
        if abs(power(hi) - p_max) <= bisection_tol * p_max:
            break
        mid = 0.5 * (lo + hi)
        if power(mid) > p_max:
            lo = mid
        else:
            hi = mid
    return precoder(hi), hi


def update_precoders(state, scenario, scheme, bisection_tol=1e-8):
    """First-order-optimal precoders with per-user power bisection."""
    scheme = _norm_scheme(scheme)
    gc = _gc(state, scenario)
    forms = _quadratic_forms(state, scenario, scheme)
    alpha = scenario.weights
    out = np.zeros_like(state.precoders)
    for m in range(scenario.num_bands):
        for k in range(scenario.num_users):
            h = scenario.channels[m, k]
            g_quad = gc[m] ** 2 * (h.conj().T @ forms[m] @ h)
            g_quad = 0.5 * (g_quad + g_quad.conj().T)
            rhs = alpha[m, k] * gc[m] * (h.conj().T @ state.combiners[m, k]
                                         @ state.weights[m, k])
            out[m, k], _ = _precoder_for_user(
                g_quad, rhs, scenario.power_budgets[m, k], bisection_tol)
    return out


def _logdets(weights):
    """Natural-log determinants of the (Hermitian PD) weight matrices."""
    m_bands, k_users = weights.shape[:2]
    out = np.zeros((m_bands, k_users))
    for m in range(m_bands):
        for k in range(k_users):
            w = weights[m, k]
            herm_defect = np.abs(w - w.conj().T).max()
            if herm_defect > 1e-8 * max(np.abs(w).max(), 1.0):
                raise NumericalDegeneracyError("weight matrix is not Hermitian")
            eig = np.linalg.eigvalsh(0.5 * (w + w.conj().T))
            if eig.min() <= 0:
                raise NumericalDegeneracyError("weight matrix is not positive definite")
            out[m, k] = float(np.sum(np.log(eig)))
    return out


def _objective_core(state, scenario, scheme, logdet_sum=None):
    """f_q with the per-band covariances built once; ``logdet_sum`` may carry
    the precomputed weighted sum of ln det W (constant during a line search)."""
    gc = _gc(state, scenario)
    covs = _band_covariances(state, scenario, scheme)
    if logdet_sum is None:
        logdet_sum = float(np.sum(scenario.weights * _logdets(state.weights)))
    total = -logdet_sum
    for m in range(scenario.num_bands):
        for k in range(scenario.num_users):
            alpha = scenario.weights[m, k]
            if alpha == 0.0:
                continue
            e_mk = _mse_with_cov(state, scenario, m, k, gc, covs[m])
            total += alpha * np.trace(state.weights[m, k] @ e_mk).real
    return total / _LN2


def objective_fq(state, scenario, scheme):
    """Auxiliary objective (1/ln 2) sum alpha (tr(W E) - ln det W)."""
    scheme = _norm_scheme(scheme)
    return _objective_core(state, scenario, scheme)


def grad_fq_wrt_gq(state, scenario, scheme):
    """Gradient of f_q with respect to the per-band transconductances.

    Chains tr(W dE/dg_l) with the Kronecker-delta signal term and the
    quadratic derivative of the received covariance (per-band covariance and
    the 1/M BBR share for FDMA).
    """
    scheme = _norm_scheme(scheme)
    if scenario.classical_noise_cov is not None:
        return np.zeros(scenario.num_bands)
    gc = _gc(state, scenario)
    g = np.asarray(state.gains.g_q)
    c_sig = scenario.c_sig
    alpha = scenario.weights
    m_bands = scenario.num_bands

    band_sig = [sm._band_signal(state, scenario, m) for m in range(m_bands)]
    grad = np.zeros(m_bands)
    for ell in range(m_bands):
        if scheme == "sdma":
            dr = 2.0 * g[ell] * c_sig[ell] ** 2 * (band_sig[ell] + scenario.c_q[ell])
            dr_per_band = [dr] * m_bands
        else:
            dr_per_band = []
            for m in range(m_bands):
                dr = 2.0 * g[ell] * c_sig[ell] ** 2 * (
                    (band_sig[ell] if m == ell else 0.0)
                    + scenario.c_q[ell] / m_bands)
                dr_per_band.append(dr)
        total = 0.0
        for m in range(m_bands):
            for k in range(scenario.num_users):
                if alpha[m, k] == 0.0:
                    continue
                u = state.combiners[m, k]
                de = u.conj().T @ dr_per_band[m] @ u
                if m == ell:
                    cross = c_sig[m] * (u.conj().T @ scenario.channels[m, k]
                                        @ state.precoders[m, k])
                    de = de - cross - cross.conj().T
                total += alpha[m, k] * np.trace(state.weights[m, k] @ de).real
        grad[ell] = total / _LN2
    return grad


def _objective_at_lo(state, scenario, scheme, e_lo, logdet_sum):
    """f_q re-evaluated with gains refreshed at a trial LO point."""
    lo = LOConfig(e_lo, state.lo.e_lo_min)
    g_new = band_gains(scenario.atomic, lo)
    trial = replace(state, lo=lo, gains=QuantumGains(g_new, state.gains.j_q))
    return _objective_core(trial, scenario, scheme, logdet_sum), lo


def lo_gradient_step(state, scenario, scheme, armijo=ArmijoConfig(), step_init=None):
    """Projected-gradient Armijo step on the LO field amplitudes.

    Direction -J_q^T grad_g f_q, coordinates clamped to e_lo_min; returns
    the original configuration when no backtracked step decreases f_q.
    ``step_init`` optionally warm-starts the step length (the solver passes
    the previously accepted step); the default is the configured fraction of
    the smallest LO amplitude.
    """
    lo, _ = _lo_gradient_step(state, scenario, scheme, armijo, step_init)
    return lo


def _lo_gradient_step(state, scenario, scheme, armijo, step_init=None):
    scheme = _norm_scheme(scheme)
    if scenario.classical_noise_cov is not None:
        return state.lo, None
    grad_g = grad_fq_wrt_gq(state, scenario, scheme)
    grad_a = np.asarray(state.gains.j_q).T @ grad_g
    a = state.lo.e_lo
    e_min = state.lo.e_lo_min
    at_bound = a <= e_min * (1.0 + 1e-12)
    projected = np.where(at_bound & (grad_a > 0), 0.0, grad_a)
    pg_norm2 = float(projected @ projected)
    if pg_norm2 == 0.0:
        return state.lo, None
    logdet_sum = float(np.sum(scenario.weights * _logdets(state.weights)))
    f0 = _objective_core(state, scenario, scheme, logdet_sum)
    default_step = (armijo.init_step_frac * float(a.min())
                    / max(np.abs(projected).max(), 1e-300))
    step = min(step_init, default_step) if step_init else default_step
    for _ in range(armijo.max_backtracks):
        trial = np.maximum(a - step * grad_a, e_min)
        if np.array_equal(trial, a):
            step *= armijo.shrink
            continue
        f_trial, lo_trial = _objective_at_lo(state, scenario, scheme, trial, logdet_sum)
        if f_trial <= f0 - armijo.c * step * pg_norm2:
            return lo_trial, step
        step *= armijo.shrink
    return state.lo, None


def _init_precoders(scenario, rng):
    """Complex Gaussian precoders scaled to meet each power budget exactly."""
    m_bands, k_users = scenario.num_bands, scenario.num_users
    v = np.zeros((m_bands, k_users, scenario.n_t, scenario.num_streams), dtype=complex)
    for m in range(m_bands):
        for k in range(k_users):
            x = rng.standard_normal((scenario.n_t, scenario.num_streams)) \
                + 1j * rng.standard_normal((scenario.n_t, scenario.num_streams))
            v[m, k] = x * math.sqrt(scenario.power_budgets[m, k]
                                    / np.sum(np.abs(x) ** 2))
    return v


def _hermitize(weights):
    return 0.5 * (weights + np.conj(np.swapaxes(weights, -1, -2)))


def qwmmse_solve(scenario, config=SolverConfig()):
    """Run the alternating optimizer until the weight matrices stabilize.

    Terminates when sum_{m,k} |ln det W - ln det W'| <= epsilon or at the
    iteration cap (converged flag False).  The spectral-efficiency trace is
    the weighted log-determinant of the fresh weight matrices, which equals
    the achievable weighted SE of the previous iterate at the LMMSE fixed
    point, and is non-decreasing under block coordinate descent.
    """
    scheme = _norm_scheme(config.scheme)
    classical = scenario.classical_noise_cov is not None
    rng = np.random.default_rng(config.seed)
    m_bands, k_users = scenario.num_bands, scenario.num_users
    s = scenario.num_streams

    v = _init_precoders(scenario, rng)
    u = np.zeros((m_bands, k_users, scenario.n_r, s), dtype=complex)
    w = np.broadcast_to(np.eye(s, dtype=complex),
                        (m_bands, k_users, s, s)).copy()

    if classical:
        lo = LOConfig(np.full(m_bands, 1.0), 0.0)
        gains = QuantumGains(np.ones(m_bands), np.zeros((m_bands, m_bands)))
        optimize_lo = False
    else:
        e_init = (np.full(m_bands, 10e-3) if config.e_lo_init is None
                  else np.asarray(config.e_lo_init, dtype=float))
        lo = LOConfig(e_init, config.e_lo_min)
        gains = transconductances(scenario.atomic, lo)
        optimize_lo = config.optimize_lo

    state = TransceiverState(precoders=v, combiners=u, weights=w, lo=lo, gains=gains)
    logdet_prev = np.zeros((m_bands, k_users))
    f_trace, se_trace, g_trace, a_trace = [], [], [], []
    converged = False
    iterations = 0
    gains_at = None if classical else tuple(lo.e_lo)
    step_hint = None

    for iterations in range(1, config.max_iterations + 1):
        if not classical and tuple(state.lo.e_lo) != gains_at:
            state = replace(state, gains=transconductances(scenario.atomic, state.lo))
            gains_at = tuple(state.lo.e_lo)
        state = replace(state, combiners=update_combiners(state, scenario, scheme))
        state = replace(state, weights=_hermitize(
            update_weights(state, scenario, scheme)))
        state = replace(state, precoders=update_precoders(
            state, scenario, scheme, config.bisection_tol))
        if optimize_lo:
            new_lo, accepted = _lo_gradient_step(
                state, scenario, scheme, config.armijo,
                step_init=(2.0 * step_hint if step_hint else None))
            step_hint = accepted or step_hint
            if tuple(new_lo.e_lo) != tuple(state.lo.e_lo):
                g_new = band_gains(scenario.atomic, new_lo)
                state = replace(state, lo=new_lo,
                                gains=QuantumGains(g_new, state.gains.j_q))
        logdet = _logdets(state.weights)
        se_now = float(np.sum(scenario.weights * logdet) / _LN2 / m_bands)
        f_now = objective_fq(state, scenario, scheme)
        f_trace.append(f_now)
        se_trace.append(se_now)
        g_trace.append(np.array(state.gains.g_q, dtype=float))
        a_trace.append(np.array(state.lo.e_lo, dtype=float))
        delta = float(np.abs(logdet - logdet_prev).sum())
        logdet_prev = logdet
        if delta <= config.epsilon:
            converged = True
            break

    return replace(
        state,
        objective_trace=np.asarray(f_trace),
        se_trace=np.asarray(se_trace),
        gq_trace=np.asarray(g_trace),
        lo_trace=np.asarray(a_trace),
        converged=converged,
        iterations=iterations)
