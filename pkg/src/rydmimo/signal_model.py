"""Per-band signal conversion, noise covariances, and spectral efficiency.

The digital receiver output is dimensionless: an incident signal of rooted
power sqrt(P) in band m appears scaled by g_q[m] * c_sig[m], where c_sig is
the front-end conversion coefficient (ADC reference, transimpedance stage,
cell length, and the sqrt(8*pi*eta0/lambda_c^2) power-to-field conversion).
Noise consists of a dimensionless electronic variance sigma_e^2 plus the
blackbody-radiation covariance of each band referred through the same
conversion chain.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from scipy.constants import c as c0, k as k_B, mu_0

_ETA0 = mu_0 * c0  # vacuum wave impedance [ohm]
_LN2 = math.log(2.0)

__all__ = [
    "BandFrontEnd",
    "NoiseModel",
    "signal_coefficient",
    "bbr_covariance",
    "isotropic_sinc_correlation",
    "total_noise_covariance",
    "received_covariance_sdma",
    "band_covariance_fdma",
    "user_se",
    "user_se_sdma",
    "user_se_fdma",
    "weighted_se",
    "tia_noise_variance",
    "current_divider",
]


@dataclass(frozen=True)
class BandFrontEnd:
    """RF/IF and electronic front-end constants of one band.

    f_c, bandwidth, bw_if in Hz; v_ref in V; r_t in ohm; k_c dimensionless;
    cell_length in m.  Effective reception requires bandwidth <= bw_if.
    """

    f_c: float
    bandwidth: float
    v_ref: float
    r_t: float
    k_c: float
    cell_length: float
    bw_if: float

    def __post_init__(self):
        for name in ("f_c", "bandwidth", "v_ref", "r_t", "k_c", "cell_length", "bw_if"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be finite and > 0")
        if self.bandwidth > self.bw_if * (1 + 1e-12):
            raise ValueError("band bandwidth must not exceed the IF bandwidth")

    @property
    def lambda_c(self):
        """Carrier wavelength c0 / f_c [m]."""
        return c0 / self.f_c


def isotropic_sinc_correlation(n_r, spacing, lambda_c):
    """Spatial correlation sinc(2*pi*d/lambda) of an isotropic noise field.

    Uniform linear array with element distance ``spacing``; unit diagonal.
    """
    idx = np.arange(n_r)
    d = np.abs(idx[:, None] - idx[None, :]) * spacing
    # np.sinc(x) = sin(pi x)/(pi x), so the argument 2 d / lambda gives
    # sin(2 pi d / lambda) / (2 pi d / lambda).
    return np.sinc(2.0 * d / lambda_c).astype(complex)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Electronic noise variance plus the blackbody-radiation model.

    ``correlation_kind`` selects how the normalized BBR correlation matrices
    are produced: "identity", "isotropic-sinc" (uses ``array_spacing``), or
    "custom" (per-band matrices supplied in ``c_hat``).  ``zeta`` is the BBR
    coherence factor applied as a scalar to the whole matrix; either one
    number for all bands or a per-band table.
    """

    sigma_e2: float
    temperature: float
    zeta: object = 1.0
    correlation_kind: str = "identity"
    c_hat: tuple | None = None
    array_spacing: float = 0.0

    def __post_init__(self):
        if self.sigma_e2 < 0 or not np.isfinite(self.sigma_e2):
            raise ValueError("sigma_e2 must be finite and >= 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        zeta = np.atleast_1d(np.asarray(self.zeta, dtype=float))
        if np.any(zeta <= 0):
            raise ValueError("zeta must be > 0")
        if self.correlation_kind not in ("identity", "isotropic-sinc", "custom"):
            raise ValueError(f"unknown correlation_kind {self.correlation_kind!r}")
        if self.correlation_kind == "custom":
            if not self.c_hat:
                raise ValueError("custom correlation requires c_hat matrices")
            mats = tuple(np.asarray(c, dtype=complex) for c in self.c_hat)
            for c in mats:
                _check_unit_diag_psd(c)
            object.__setattr__(self, "c_hat", mats)
        if self.correlation_kind == "isotropic-sinc" and self.array_spacing <= 0:
            raise ValueError("isotropic-sinc correlation requires array_spacing > 0")

    def correlation(self, band_index, n_r, lambda_c):
        """Normalized BBR correlation matrix of one band (unit diagonal)."""
        if self.correlation_kind == "identity":
            return np.eye(n_r, dtype=complex)
        if self.correlation_kind == "isotropic-sinc":
            return isotropic_sinc_correlation(n_r, self.array_spacing, lambda_c)
        c = self.c_hat[band_index]
        if c.shape != (n_r, n_r):
            raise ValueError("custom correlation matrix has wrong shape")
        return c

    def zeta_for_band(self, band_index):
        zeta = np.atleast_1d(np.asarray(self.zeta, dtype=float))
        return float(zeta[band_index]) if zeta.size > 1 else float(zeta[0])


def _check_unit_diag_psd(c):
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError("correlation matrix must be square")
    if np.abs(c - c.conj().T).max() > 1e-12:
        raise ValueError("correlation matrix must be Hermitian")
    if np.abs(np.diag(c) - 1.0).max() > 1e-12:
        raise ValueError("correlation matrix must have unit diagonal")
    if np.linalg.eigvalsh(c).min() < -1e-10 * c.shape[0]:
        raise ValueError("correlation matrix must be positive semidefinite")


def current_divider(r_s, z_in):
    """Default current-dividing coefficient K_c = R_s / (R_s + Z_in)."""
    return r_s / (r_s + z_in)


def tia_noise_variance(v_n, i_n, r_t, r_s, bw_if, v_ref, temperature=300.0,
                       z_in=None, z_out=None):
    """Approximate dimensionless electronic noise variance of the TIA chain.

    Standard transimpedance noise budget referred to the ADC input: input
    current noise through R_T, input voltage noise with noise gain
    (1 + R_T/R_s), and the thermal noise of the feedback resistor, integrated
    over the IF bandwidth and normalized by (2 V_ref)^2.  Amplifier
    input/output impedances are accepted for interface completeness; this
    simple budget does not use them.
    """
    density = ((i_n * r_t) ** 2
               + (v_n * (1.0 + r_t / r_s)) ** 2
               + 4.0 * k_B * temperature * r_t)
    return density * bw_if / (2.0 * v_ref) ** 2


def signal_coefficient(front_end):
    """Signal conversion coefficient C_sig [ohm/sqrt(W)] of one band.

    C_sig = 1/(2 V_ref) * R_T K_c * L * sqrt(8 pi eta0 / lambda_c^2); the
    reciprocal rooted reference power of the band is g_q * C_sig.
    """
    return (front_end.r_t * front_end.k_c * front_end.cell_length
            / (2.0 * front_end.v_ref)
            * math.sqrt(8.0 * math.pi * _ETA0 / front_end.lambda_c ** 2))


def bbr_covariance(front_end, noise, n_r, band_index=0):
    """Blackbody-radiation noise covariance (4/3) k_B T BW zeta C_hat [W].

    The scalar prefactor is the per-axis BBR field variance
    16*pi*eta0*k_B*T/(3*lambda^2) referred through the squared
    power-to-field coefficient 8*pi*eta0/lambda^2 (giving 2 k_B T / 3 per Hz
    regardless of wavelength) and doubled for the image sideband.
    ``band_index`` selects the per-band correlation matrix / coherence entry
    when those are band-specific.
    """
    scalar = (4.0 / 3.0) * k_B * noise.temperature * front_end.bandwidth \
        * noise.zeta_for_band(band_index)
    c_hat = noise.correlation(band_index, n_r, front_end.lambda_c)
    return scalar * c_hat


def total_noise_covariance(gains, c_sig, c_q, sigma_e2, n_r=None):
    """Total receiver noise covariance sigma_e^2 I + sum_m (g_m C_m)^2 C_q,m."""
    g = np.asarray(getattr(gains, "g_q", gains), dtype=float)
    c_sig = np.asarray(c_sig, dtype=float)
    if g.shape != c_sig.shape or len(c_q) != g.size:
        raise ValueError("inconsistent number of bands")
    if n_r is None:
        if not len(c_q):
            raise ValueError("n_r required when no bands are present")
        n_r = np.asarray(c_q[0]).shape[0]
    cov = sigma_e2 * np.eye(n_r, dtype=complex)
    for m in range(g.size):
        cov = cov + (g[m] * c_sig[m]) ** 2 * np.asarray(c_q[m])
    return cov


# ---------------------------------------------------------------------------
# Received-signal covariances and spectral efficiency.  These take the
# transceiver state / scenario objects defined in the wmmse module but only
# touch their public attributes, so the covariance layer stays import-free.
# ---------------------------------------------------------------------------

def _link_gains(state, scenario):
    """Per-band digital link gains g_q[m] * C_sig[m] (unity for classical)."""
    if scenario.classical_noise_cov is not None:
        return np.ones(scenario.num_bands)
    return np.asarray(state.gains.g_q) * scenario.c_sig


def _noise_cov(state, scenario):
    if scenario.classical_noise_cov is not None:
        return scenario.classical_noise_cov
    return total_noise_covariance(
        state.gains, scenario.c_sig, scenario.c_q, scenario.noise.sigma_e2)


def _band_signal(state, scenario, m):
    """sum_k H_{m,k} V_{m,k} V^H H^H of one band."""
    n_r = scenario.n_r
    out = np.zeros((n_r, n_r), dtype=complex)
    for k in range(scenario.num_users):
        hv = scenario.channels[m, k] @ state.precoders[m, k]
        out += hv @ hv.conj().T
    return out


def received_covariance_sdma(state, scenario):
    """Covariance of the received vector: noise plus all bands' signals."""
    gc = _link_gains(state, scenario)
    cov = _noise_cov(state, scenario).astype(complex, copy=True)
    for m in range(scenario.num_bands):
        cov += gc[m] ** 2 * _band_signal(state, scenario, m)
    return cov


def band_covariance_fdma(state, scenario, m):
    """Per-band received covariance C_tot/M + (g C)^2 sum_k H V V^H H^H."""
    gc = _link_gains(state, scenario)
    return (_noise_cov(state, scenario) / scenario.num_bands
            + gc[m] ** 2 * _band_signal(state, scenario, m))


def _se_from_covariances(r_intf, sig, n_r):
    """log2 det(I + R^-1 S) with a ridge fallback for singular R."""
    cond = np.linalg.cond(r_intf)
    if not np.isfinite(cond) or cond > 1e12:
        ridge = 1e-12 * np.trace(r_intf).real / n_r
        warnings.warn("singular interference covariance; ridge regularization applied",
                      RuntimeWarning, stacklevel=3)
        r_intf = r_intf + ridge * np.eye(n_r)
    _, ld1 = np.linalg.slogdet(r_intf + sig)
    _, ld0 = np.linalg.slogdet(r_intf)
    return max((ld1 - ld0) / _LN2, 0.0)


def user_se(state, scenario, m, k, scheme):
    """Achievable SE [bits/s/Hz] of user (m, k) under the given scheme."""
    gc = _link_gains(state, scenario)
    hv = scenario.channels[m, k] @ state.precoders[m, k]
    sig = gc[m] ** 2 * (hv @ hv.conj().T)
    if str(scheme).lower() == "fdma":
        r_y = band_covariance_fdma(state, scenario, m)
    else:
        r_y = received_covariance_sdma(state, scenario)
    return _se_from_covariances(r_y - sig, sig, scenario.n_r)


def user_se_sdma(state, scenario, m, k):
    return user_se(state, scenario, m, k, "sdma")


def user_se_fdma(state, scenario, m, k):
    return user_se(state, scenario, m, k, "fdma")


def weighted_se(state, scenario, scheme):
    """Weighted spectral efficiency (1/M) sum_{m,k} alpha_{m,k} SE_{m,k}."""
    total = 0.0
    for m in range(scenario.num_bands):
        for k in range(scenario.num_users):
            alpha = scenario.weights[m, k]
            if alpha == 0.0:
                continue
            total += alpha * user_se(state, scenario, m, k, scheme)
    return total / scenario.num_bands
