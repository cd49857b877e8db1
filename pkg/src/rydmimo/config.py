"""Experiment configuration: YAML parsing, validation, and defaults.

Angular frequencies accept either a plain number (rad/s) or a string of the
form "2pi*X" with X in Hz (e.g. "2pi*8.08e6"); powers accept watts or
"X dBm" strings.  Unknown keys are rejected so typos fail at parse time.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field

import numpy as np
import yaml

from .montecarlo import CampaignConfig, ChannelModel, ScenarioTemplate
from .physics import AtomicSystem
from .signal_model import BandFrontEnd, NoiseModel, current_divider, tia_noise_variance
from .wmmse import ArmijoConfig, SolverConfig

__all__ = [
    "ExperimentConfig",
    "parse_config",
    "parse_config_dict",
    "default_config_dict",
    "parse_angular",
    "parse_power",
    "config_hash",
]

_EA0 = 8.4783536255e-30  # atomic unit of electric dipole moment [C*m]

_TWO_PI_RE = re.compile(r"^\s*2\s*\*?\s*pi\s*[*x×]\s*([-+0-9.eE]+)\s*(hz|khz|mhz|ghz)?\s*$",
                        re.IGNORECASE)
_DBM_RE = re.compile(r"^\s*([-+0-9.eE]+)\s*dBm\s*$", re.IGNORECASE)
_UNIT_SCALE = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9, None: 1.0}


def parse_angular(value):
    """Angular frequency in rad/s from a number or a "2pi*<Hz>" string."""
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        match = _TWO_PI_RE.match(value)
        if match:
            scale = _UNIT_SCALE[match.group(2).lower() if match.group(2) else None]
            return 2.0 * math.pi * float(match.group(1)) * scale
        try:
            return float(value)
        except ValueError:
            pass
    raise ValueError(f"cannot parse angular frequency from {value!r}")


def parse_power(value):
    """Power in watts from a number (W) or an "X dBm" string."""
    if isinstance(value, (int, float)):
        if value <= 0:
            raise ValueError("power must be > 0 W")
        return float(value)
    if isinstance(value, str):
        match = _DBM_RE.match(value)
        if match:
            return 10.0 ** (float(match.group(1)) / 10.0 - 3.0)
        try:
            return parse_power(float(value))
        except ValueError:
            pass
    raise ValueError(f"cannot parse power from {value!r}")


def _require_keys(block, allowed, context):
    unknown = set(block) - set(allowed)
    if unknown:
        raise ValueError(f"unknown keys in {context}: {sorted(unknown)}")


def _get(block, key, default=None, required=False, context=""):
    if key in block:
        return block[key]
    if required:
        raise ValueError(f"missing required key {key!r} in {context}")
    return default


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Fully validated experiment description."""

    atomic: AtomicSystem
    band_front_ends: tuple
    noise: NoiseModel
    channel_model: ChannelModel
    n_r: int
    n_t: int
    num_users: int
    weights: object
    solver: SolverConfig
    campaign: CampaignConfig
    map_grid: dict
    seed: int
    out_dir: str
    raw: dict = field(repr=False, default_factory=dict)

    def template(self):
        return ScenarioTemplate(
            atomic=self.atomic, band_front_ends=self.band_front_ends,
            noise=self.noise, channel_model=self.channel_model,
            n_r=self.n_r, n_t=self.n_t, num_users=self.num_users,
            weights=self.weights)

    def to_dict(self):
        """Canonical plain-type dictionary (round-trips through parse)."""
        return json.loads(json.dumps(self.raw))


def default_config_dict():
    """Default dual-band experiment configuration.

    The atomic and front-end numbers follow the reference cesium dual-band
    receiver setup (probe/control Rabi frequencies and detunings, decay
    rates, vapor density, cell length, TIA constants, 100 kHz IF).  The
    dipole moments, probe wavelength, photocurrent scale, and pathloss law
    are not fixed by that setup; the values below are documented defaults of
    this implementation and can be overridden freely.
    """
    return {
        "seed": 1,
        "out_dir": "results",
        "atomic": {
            "num_bands": 2,
            "omega_p": "2pi*8.08e6",
            "omega_c": "2pi*2.05e6",
            "delta_p": "2pi*20",
            "delta_c": "2pi*-30",
            "delta_rf": ["2pi*10", "2pi*20"],
            "gamma": ["2pi*5.2e6", "2pi*3.9e3", "2pi*1.7e3", "2pi*1.6e3"],
            "mu_rf_ea0": [2500.0, 4000.0],
            "mu_12": 2.6e-29,
            "n0": 4.89e16,
            "lambda_p": 852.35e-9,
            "cell_length": 0.02,
            "i_ph0": 1.0e-6,
            "temperature": 300.0,
        },
        "lo": {"e_lo_init": [10e-3, 10e-3], "e_lo_min": 3e-3},
        "bands": [
            {"f_c": 6.938e9, "bandwidth": 100e3, "bw_if": 100e3,
             "v_ref": 1e-3, "r_t": 10e3},
            {"f_c": 31.793e9, "bandwidth": 100e3, "bw_if": 100e3,
             "v_ref": 1e-3, "r_t": 10e3},
        ],
        "noise": {
            "zeta": 1.0,
            "correlation": "identity",
            "tia": {"v_n": 2.8e-9, "i_n": 1.8e-12, "r_s": 1e3,
                    "z_in": 60.0, "z_out": 50.0},
        },
        "channel": {
            "n_r": 5, "n_t": 4, "k_users": 3,
            "fading": "iid-rayleigh",
            "distance_range": [500.0, 1500.0],
            "pathloss": "free-space",
        },
        "weights": 1.0,
        "optimizer": {
            "scheme": "sdma",
            "epsilon": 1e-3,
            "max_iterations": 500,
            "bisection_tol": 1e-8,
            "optimize_lo": True,
            "armijo": {"c": 1e-4, "shrink": 0.5, "init_step_frac": 0.1,
                       "max_backtracks": 40},
        },
        "campaign": {
            "num_trials": 100,
            "power_grid": ["10 dBm"],
            "schemes": ["qSDMA-Opt", "qSDMA-NoOpt"],
            "noise_figure_db": 3.0,
            "coupling_rho": 0.3,
        },
        "map": {"e_lo_low": 3e-3, "e_lo_high": 100e-3, "points": 30},
    }


def _parse_atomic(block):
    allowed = ("num_bands", "omega_p", "omega_c", "delta_p", "delta_c",
               "delta_rf", "gamma", "mu_rf", "mu_rf_ea0", "mu_12", "n0",
               "lambda_p", "cell_length", "i_ph0", "temperature")
    _require_keys(block, allowed, "atomic")
    if ("mu_rf" in block) == ("mu_rf_ea0" in block):
        raise ValueError("atomic block needs exactly one of mu_rf (C*m) or mu_rf_ea0")
    if "mu_rf" in block:
        mu_rf = [float(v) for v in block["mu_rf"]]
    else:
        mu_rf = [float(v) * _EA0 for v in block["mu_rf_ea0"]]
    return AtomicSystem(
        num_bands=int(_get(block, "num_bands", required=True, context="atomic")),
        omega_p=parse_angular(_get(block, "omega_p", required=True, context="atomic")),
        omega_c=parse_angular(_get(block, "omega_c", required=True, context="atomic")),
        delta_p=parse_angular(_get(block, "delta_p", 0.0)),
        delta_c=parse_angular(_get(block, "delta_c", 0.0)),
        delta_rf=[parse_angular(v) for v in
                  _get(block, "delta_rf", required=True, context="atomic")],
        gamma=[parse_angular(v) for v in
               _get(block, "gamma", required=True, context="atomic")],
        mu_rf=mu_rf,
        mu_12=float(_get(block, "mu_12", required=True, context="atomic")),
        n0=float(_get(block, "n0", required=True, context="atomic")),
        lambda_p=float(_get(block, "lambda_p", required=True, context="atomic")),
        cell_length=float(_get(block, "cell_length", required=True, context="atomic")),
        i_ph0=float(_get(block, "i_ph0", required=True, context="atomic")),
        temperature=float(_get(block, "temperature", required=True, context="atomic")),
    )


def _parse_bands(blocks, cell_length, tia):
    fes = []
    for i, b in enumerate(blocks):
        _require_keys(b, ("f_c", "bandwidth", "bw_if", "v_ref", "r_t", "k_c"),
                      f"bands[{i}]")
        k_c = b.get("k_c")
        if k_c is None:
            k_c = current_divider(tia["r_s"], tia["z_in"])
        fes.append(BandFrontEnd(
            f_c=float(b["f_c"]), bandwidth=float(b["bandwidth"]),
            v_ref=float(b["v_ref"]), r_t=float(b["r_t"]), k_c=float(k_c),
            cell_length=cell_length, bw_if=float(b["bw_if"])))
    return tuple(fes)


def _parse_noise(block, bands, temperature):
    allowed = ("sigma_e2", "zeta", "correlation", "array_spacing", "tia", "c_hat")
    _require_keys(block, allowed, "noise")
    tia = dict(block.get("tia") or {})
    if tia:
        _require_keys(tia, ("v_n", "i_n", "r_s", "z_in", "z_out"), "noise.tia")
    sigma_e2 = block.get("sigma_e2")
    if sigma_e2 is None:
        if not tia:
            raise ValueError("noise block needs sigma_e2 or a tia block to derive it")
        b0 = bands[0]
        sigma_e2 = tia_noise_variance(
            v_n=float(tia["v_n"]), i_n=float(tia["i_n"]), r_t=b0.r_t,
            r_s=float(tia["r_s"]), bw_if=b0.bw_if, v_ref=b0.v_ref,
            temperature=temperature)
    c_hat = block.get("c_hat")
    return NoiseModel(
        sigma_e2=float(sigma_e2),
        temperature=temperature,
        zeta=float(block.get("zeta", 1.0)),
        correlation_kind=block.get("correlation", "identity"),
        c_hat=tuple(np.asarray(c, dtype=complex) for c in c_hat) if c_hat else None,
        array_spacing=float(block.get("array_spacing", 0.0)),
    ), tia


def _parse_channel(block):
    _require_keys(block, ("n_r", "n_t", "k_users", "fading", "distance_range",
                          "pathloss", "pathloss_exponent"), "channel")
    pathloss = block.get("pathloss", "free-space")
    if pathloss == "exponent":
        pathloss = ("exponent", float(block["pathloss_exponent"]))
    model = ChannelModel(
        fading=block.get("fading", "iid-rayleigh"),
        distance_range=tuple(float(v) for v in
                             block.get("distance_range", (500.0, 1500.0))),
        pathloss=pathloss)
    return model, int(block["n_r"]), int(block["n_t"]), int(block["k_users"])


def _parse_solver(block, lo_block, num_bands):
    _require_keys(block, ("scheme", "epsilon", "max_iterations", "bisection_tol",
                          "optimize_lo", "armijo"), "optimizer")
    armijo_block = dict(block.get("armijo") or {})
    _require_keys(armijo_block, ("c", "shrink", "init_step_frac", "max_backtracks"),
                  "optimizer.armijo")
    armijo = ArmijoConfig(
        c=float(armijo_block.get("c", 1e-4)),
        shrink=float(armijo_block.get("shrink", 0.5)),
        init_step_frac=float(armijo_block.get("init_step_frac", 0.1)),
        max_backtracks=int(armijo_block.get("max_backtracks", 40)))
    _require_keys(lo_block, ("e_lo_init", "e_lo_min"), "lo")
    e_lo_init = lo_block.get("e_lo_init")
    if e_lo_init is not None:
        e_lo_init = np.asarray([float(v) for v in e_lo_init])
        if e_lo_init.size != num_bands:
            raise ValueError("lo.e_lo_init must have one entry per band")
    return SolverConfig(
        scheme=block.get("scheme", "sdma"),
        epsilon=float(block.get("epsilon", 1e-3)),
        max_iterations=int(block.get("max_iterations", 500)),
        bisection_tol=float(block.get("bisection_tol", 1e-8)),
        armijo=armijo,
        e_lo_init=e_lo_init,
        e_lo_min=float(lo_block.get("e_lo_min", 3e-3)),
        optimize_lo=bool(block.get("optimize_lo", True)))


def parse_config_dict(raw):
    """Validate a configuration dictionary into an ExperimentConfig."""
    if not isinstance(raw, dict):
        raise ValueError("configuration must be a mapping")
    allowed = ("seed", "out_dir", "atomic", "lo", "bands", "noise", "channel",
               "weights", "optimizer", "campaign", "map")
    _require_keys(raw, allowed, "top level")
    atomic = _parse_atomic(dict(_get(raw, "atomic", required=True, context="config")))
    band_blocks = _get(raw, "bands", required=True, context="config")
    if len(band_blocks) != atomic.num_bands:
        raise ValueError("number of band blocks must match atomic.num_bands")
    noise_block = dict(_get(raw, "noise", required=True, context="config"))
    tia = dict(noise_block.get("tia") or {})
    bands = _parse_bands([dict(b) for b in band_blocks], atomic.cell_length, tia)
    noise, tia = _parse_noise(noise_block, bands, atomic.temperature)
    channel_model, n_r, n_t, k_users = _parse_channel(
        dict(_get(raw, "channel", required=True, context="config")))
    weights = raw.get("weights", 1.0)
    if not isinstance(weights, (int, float)):
        weights = np.asarray(weights, dtype=float)
    solver = _parse_solver(dict(raw.get("optimizer") or {}),
                           dict(raw.get("lo") or {}), atomic.num_bands)

    campaign_block = dict(raw.get("campaign") or {})
    _require_keys(campaign_block, ("num_trials", "power_grid", "schemes",
                                   "noise_figure_db", "coupling_rho",
                                   "coupling_phase"), "campaign")
    campaign = CampaignConfig(
        num_trials=int(campaign_block.get("num_trials", 1)),
        power_grid=tuple(parse_power(p) for p in
                         campaign_block.get("power_grid", [0.01])),
        schemes=tuple(campaign_block.get("schemes",
                                         ["qSDMA-Opt", "qSDMA-NoOpt"])),
        solver=solver,
        seed=int(raw.get("seed", 0)),
        noise_figure_db=float(campaign_block.get("noise_figure_db", 3.0)),
        coupling_rho=float(campaign_block.get("coupling_rho", 0.3)),
        coupling_phase=float(campaign_block.get("coupling_phase", 0.0)))

    map_block = dict(raw.get("map") or {})
    _require_keys(map_block, ("e_lo_low", "e_lo_high", "points"), "map")
    map_grid = {
        "e_lo_low": float(map_block.get("e_lo_low", 3e-3)),
        "e_lo_high": float(map_block.get("e_lo_high", 100e-3)),
        "points": int(map_block.get("points", 30)),
    }
    if map_grid["points"] < 2 or map_grid["e_lo_low"] >= map_grid["e_lo_high"]:
        raise ValueError("map grid must have points >= 2 and e_lo_low < e_lo_high")

    return ExperimentConfig(
        atomic=atomic, band_front_ends=bands, noise=noise,
        channel_model=channel_model, n_r=n_r, n_t=n_t, num_users=k_users,
        weights=weights, solver=solver, campaign=campaign, map_grid=map_grid,
        seed=int(raw.get("seed", 0)), out_dir=str(raw.get("out_dir", "results")),
        raw=raw)


def parse_config(path):
    """Parse a YAML configuration file."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    return parse_config_dict(raw)


def dump_config(raw, path):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(raw, fh, sort_keys=False)


def config_hash(raw):
    """Stable hash of the raw configuration for run metadata."""
    canon = json.dumps(raw, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def apply_overrides(raw, overrides):
    """Apply dotted key=value overrides (values parsed as YAML scalars)."""
    out = json.loads(json.dumps(raw))
    for item in overrides or ():
        if "=" not in item:
            raise ValueError(f"override {item!r} must look like key.path=value")
        key, value = item.split("=", 1)
        target = out
        parts = key.split(".")
        for part in parts[:-1]:
            part = int(part) if part.lstrip("-").isdigit() else part
            target = target[part]
        leaf = parts[-1]
        leaf = int(leaf) if leaf.lstrip("-").isdigit() else leaf
        target[leaf] = yaml.safe_load(value)
    return out
