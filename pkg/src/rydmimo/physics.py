"""Multi-band atomic ladder model: steady states, transconductances, Jacobians.

The receiver is an (M+3)-level ladder: ground |1>, intermediate |2>, a first
Rydberg level |3>, and one further Rydberg level |m+3> per RF band m.  The
density matrix evolves under

    drho/dt = -i [H, rho] + L[rho],

with H the rotating-frame Hamiltonian (angular-frequency units) and L the
decay Lindbladian.  Vectorizing (column stacking) turns the steady-state
condition into a homogeneous linear system A0 x = 0, which is reduced to a
nonsingular system by splitting off the trace direction.  All first and
second derivatives with respect to the LO Rabi frequencies are obtained from
the same LU factorization, which makes the transconductance Jacobian exact
(no finite differences anywhere in the production path).

Sign convention: with the master equation written as above, the steady-state
probe coherence rho_21 has a *negative* imaginary part in absorbing media
(the two-level limit gives Im rho_21 = -Omega_p*gamma_2*w/(4*Delta^2+gamma_2^2)).
The optical readout quantities (transmission, photocurrent, transconductance)
therefore use the absorption-positive part  -Im rho_21 >= 0, so that the
probe transmission lies in [0, 1] and the transconductances are positive with
interior maxima over the LO field plane.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from weakref import WeakKeyDictionary

import numpy as np
import scipy.linalg

from scipy.constants import epsilon_0, hbar

from .errors import DegenerateOperatingPointError, ModelInconsistencyError

__all__ = [
    "AtomicSystem",
    "LOConfig",
    "SteadyStateSolution",
    "QuantumGains",
    "build_hamiltonian",
    "build_generator",
    "reduce_generator",
    "solve_steady_state",
    "transconductances",
    "probe_transmission",
]

# Condition-number gate for the reduced steady-state solve.
_COND_LIMIT = 1e14

# Readout sign: -Im(rho_21) is the absorptive part of the probe coherence
# under this master-equation convention (see module docstring).
_ABSORPTION_SIGN = -1.0


def _readonly(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class AtomicSystem:
    """All quantum and vapor parameters of the (M+3)-level ladder.

    Frequencies, detunings and decay rates are angular [rad/s]; dipole
    moments in C*m; n0 in m^-3; lambda_p and cell_length in m; i_ph0 in A
    (photocurrent the detector would read at unit probe transmission);
    temperature in K.  Detunings may have any sign; magnitudes must be
    nonnegative (zero is allowed so that decoupled / absorber-free limits
    remain constructible).
    """

    num_bands: int
    omega_p: float
    omega_c: float
    delta_p: float
    delta_c: float
    delta_rf: np.ndarray
    gamma: np.ndarray
    mu_rf: np.ndarray
    mu_12: float
    n0: float
    lambda_p: float
    cell_length: float
    i_ph0: float
    temperature: float

    def __post_init__(self):
        m = int(self.num_bands)
        if m < 1:
            raise ValueError("num_bands must be >= 1")
        object.__setattr__(self, "num_bands", m)
        object.__setattr__(self, "delta_rf", _readonly(self.delta_rf))
        object.__setattr__(self, "gamma", _readonly(self.gamma))
        object.__setattr__(self, "mu_rf", _readonly(self.mu_rf))
        if self.delta_rf.shape != (m,):
            raise ValueError(f"delta_rf must have length {m}")
        if self.gamma.shape != (m + 2,):
            raise ValueError(f"gamma must have length {m + 2} (levels 2..{m + 3})")
        if self.mu_rf.shape != (m,):
            raise ValueError(f"mu_rf must have length {m}")
        scalars = {
            "omega_p": self.omega_p,
            "omega_c": self.omega_c,
            "mu_12": self.mu_12,
            "n0": self.n0,
            "i_ph0": self.i_ph0,
        }
        for name, value in scalars.items():
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0")
        for name, value in (("lambda_p", self.lambda_p),
                            ("cell_length", self.cell_length),
                            ("temperature", self.temperature)):
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be finite and > 0")
        if np.any(self.gamma < 0) or np.any(self.mu_rf < 0):
            raise ValueError("decay rates and dipole moments must be >= 0")
        if not (np.all(np.isfinite(self.delta_rf)) and np.all(np.isfinite(self.gamma))
                and np.all(np.isfinite(self.mu_rf))):
            raise ValueError("atomic parameters must be finite")

    @property
    def num_levels(self):
        return self.num_bands + 3

    @property
    def k_p(self):
        """Probe wavenumber 2*pi/lambda_p [1/m]."""
        return 2.0 * math.pi / self.lambda_p

    def lo_rabi(self, e_lo):
        """LO Rabi frequencies mu_rf * E_LO / (2*hbar) [rad/s].

        The factor 2 matches the mu/(2*hbar) conversion used throughout the
        transconductance chain, keeping analytic E-field derivatives and
        finite differences of the same quantity consistent.
        """
        return np.asarray(e_lo, dtype=float) * self.mu_rf / (2.0 * hbar)


@dataclass(frozen=True, eq=False)
class LOConfig:
    """Per-band LO field amplitudes [V/m] with a common lower bound."""

    e_lo: np.ndarray
    e_lo_min: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "e_lo", _readonly(self.e_lo))
        if self.e_lo.ndim != 1 or self.e_lo.size < 1:
            raise ValueError("e_lo must be a nonempty vector")
        if self.e_lo_min < 0 or not np.isfinite(self.e_lo_min):
            raise ValueError("e_lo_min must be finite and >= 0")
        if np.any(self.e_lo < self.e_lo_min - 1e-30):
            raise ValueError("every LO amplitude must be >= e_lo_min")

    @property
    def num_bands(self):
        return self.e_lo.size


@dataclass(frozen=True, eq=False)
class SteadyStateSolution:
    """Steady-state density matrix and its LO-Rabi derivatives.

    ``d_rho21`` and ``d2_rho21`` are derivatives of the (2,1) coherence with
    respect to the LO Rabi frequencies (not the E-fields); ``residual`` is
    the infinity norm of A0_hat @ vec(rho) with A0_hat the generator scaled
    by its largest entry magnitude, i.e. a dimensionless defect.
    """

    rho: np.ndarray
    z: np.ndarray
    rho21: complex
    d_rho21: np.ndarray
    d2_rho21: np.ndarray
    residual: float


@dataclass(frozen=True, eq=False)
class QuantumGains:
    """Per-band transconductances g_q [S] and Jacobian d g_q / d E_LO [S*m/V]."""

    g_q: np.ndarray
    j_q: np.ndarray


def build_hamiltonian(system, omega_rf):
    """Rotating-frame ladder Hamiltonian for RF Rabi frequencies ``omega_rf``.

    Couplings: probe on |1>-|2>, control on |2>-|3>, band m on |3>-|m+3>
    with matrix element conj(omega_rf[m])/2 above the diagonal.  Diagonal
    entries carry cumulative detunings -(Dp), -(Dp+Dc),
    -(Dp+Dc+sum_{j<=m} Drf_j).  Hermitian whenever probe/control Rabi
    frequencies are real.
    """
    omega_rf = np.asarray(omega_rf, dtype=complex)
    if omega_rf.shape != (system.num_bands,):
        raise ValueError(f"omega_rf must have shape ({system.num_bands},)")
    n = system.num_levels
    h = np.zeros((n, n), dtype=complex)
    h[0, 1] = h[1, 0] = 0.5 * system.omega_p
    h[1, 2] = h[2, 1] = 0.5 * system.omega_c
    h[1, 1] = -system.delta_p
    h[2, 2] = -(system.delta_p + system.delta_c)
    cum = system.delta_p + system.delta_c
    for m in range(system.num_bands):
        cum += system.delta_rf[m]
        h[2, m + 3] = 0.5 * np.conj(omega_rf[m])
        h[m + 3, 2] = 0.5 * omega_rf[m]
        h[m + 3, m + 3] = -cum
    return h


def build_generator(system, hmat):
    """Vectorized steady-state generator A0 for the master equation.

    A0 = -i (I (x) H - H^T (x) I) - (1/2)(Gamma (x) I + I (x) Gamma)
    plus the decay-feeding entries routing population |2>->|1>, |3>->|2>,
    and |m+3>->|1>.  Column-stacking vec convention; A0 annihilates the
    trace functional by construction.
    """
    n = system.num_levels
    hmat = np.asarray(hmat, dtype=complex)
    if hmat.shape != (n, n):
        raise ValueError(f"Hamiltonian must have shape ({n}, {n})")
    eye = np.eye(n)
    a0 = -1j * (np.kron(eye, hmat) - np.kron(hmat.T, eye))
    gam = np.diag(np.concatenate(([0.0], system.gamma)))
    a0 -= 0.5 * (np.kron(gam, eye) + np.kron(eye, gam))
    gamma = system.gamma
    a0[0, n + 1] += gamma[0]                    # gamma_2: |2> -> |1>
    a0[n + 1, 2 * n + 2] += gamma[1]            # gamma_3: |3> -> |2>
    for m in range(system.num_bands):
        a0[0, (m + 3) * n + (m + 3)] += gamma[m + 2]   # |m+3> -> |1>
    return a0


@lru_cache(maxsize=16)
def _completion_matrix(n):
    """Orthogonal Q whose first column is the normalized vectorized identity.

    Householder reflection mapping e_0 to u, hence deterministic; the
    remaining columns are an (arbitrary but fixed) orthonormal completion.
    """
    p = n * n
    u = np.zeros(p)
    u[:: n + 1] = 1.0 / math.sqrt(n)
    v = u.copy()
    v[0] -= 1.0
    q = np.eye(p) - (2.0 / (v @ v)) * np.outer(v, v)
    q.setflags(write=False)
    return q


def reduce_generator(a0):
    """Split the singular generator into the nonsingular blocks (Q, C0, w0).

    Q^T A0 Q = [[0, 0], [w0, C0]] with Q orthogonal and Q[:, 0] the
    normalized vectorized identity.  The top row must vanish (trace
    preservation); a relative defect above 1e-8 raises
    ModelInconsistencyError since it signals a mis-built generator.
    """
    a0 = np.asarray(a0)
    p = a0.shape[0]
    if a0.ndim != 2 or a0.shape != (p, p):
        raise ValueError("A0 must be square")
    n = math.isqrt(p)
    if n * n != p:
        raise ValueError("A0 size must be a perfect square")
    q = _completion_matrix(n)
    t = q.T @ a0 @ q
    scale = max(np.abs(a0).max(), 1.0)
    if np.abs(t[0, :]).max() > 1e-8 * scale:
        raise ModelInconsistencyError(
            "generator does not preserve the trace (top row of Q^T A0 Q is nonzero)")
    return q, t[1:, 1:].copy(), t[1:, 0].copy()


class _ReducedModel:
    """Per-system cache of the reduced generator and its LO-Rabi derivatives.

    The generator is affine in the LO Rabi frequencies, so the reduced
    blocks at any operating point are C0(w) = C_base + sum_m w_m C_m (and
    likewise w0), with constant matrices computed once per system.
    """

    def __init__(self, system):
        n = system.num_levels
        h_base = build_hamiltonian(system, np.zeros(system.num_bands))
        a_base = build_generator(system, h_base)
        q = _completion_matrix(n)
        self.n = n
        self.sqrt_n = math.sqrt(n)
        self.q_row2 = q[1, :].copy()          # recovers rho_21 from [1/sqrt(n); z]
        self.q = q
        t = q.T @ a_base @ q
        self.t_base = t
        self.a_base_max = max(np.abs(a_base).max(), 1e-300)
        self.t_deriv = []
        self.a_deriv = []
        eye = np.eye(n)
        for m in range(system.num_bands):
            d = np.zeros((n, n), dtype=complex)
            d[2, m + 3] = 0.5
            d[m + 3, 2] = 0.5
            da = -1j * (np.kron(eye, d) - np.kron(d.T, eye))
            self.a_deriv.append(da)
            self.t_deriv.append(q.T @ da @ q)

    def solve(self, omega_lo, second_order=True):
        """Steady state and derivatives at LO Rabi frequencies ``omega_lo``."""
        omega_lo = np.asarray(omega_lo, dtype=float)
        mm = omega_lo.size
        # One fixed scale per solve keeps the reduced system O(1) without
        # breaking the linearity the derivative formulas rely on.
        scale = max(self.a_base_max, 0.5 * np.abs(omega_lo).max(initial=0.0))
        t = self.t_base.copy()
        for m in range(mm):
            t += omega_lo[m] * self.t_deriv[m]
        t /= scale
        c0 = t[1:, 1:]
        w0 = t[1:, 0]
        anorm = np.abs(c0).sum(axis=0).max()
        with warnings.catch_warnings():
            # An exactly singular factorization is handled by the rcond gate.
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(c0, check_finite=False)
        rcond = scipy.linalg.lapack.zgecon(lu[0], anorm)[0]
        if not np.isfinite(rcond) or rcond <= 0 or 1.0 / rcond > _COND_LIMIT:
            raise DegenerateOperatingPointError(
                f"reduced generator condition estimate {np.inf if rcond <= 0 else 1.0 / rcond:.3e} "
                f"exceeds {_COND_LIMIT:.1e}")
        z = scipy.linalg.lu_solve(lu, -w0 / self.sqrt_n, check_finite=False)

        dc = [self.t_deriv[m][1:, 1:] / scale for m in range(mm)]
        dw = [self.t_deriv[m][1:, 0] / scale for m in range(mm)]
        dz = [scipy.linalg.lu_solve(lu, -(dc[m] @ z + dw[m] / self.sqrt_n),
                                    check_finite=False)
              for m in range(mm)]
        d2z = None
        if second_order:
            # C0^-1 (dw_m/sqrt(n) + dC_m z) = -dz_m, reused via the stored LU.
            inner = [scipy.linalg.lu_solve(lu, dw[m] / self.sqrt_n + dc[m] @ z,
                                           check_finite=False)
                     for m in range(mm)]
            d2z = np.empty((mm, mm, z.size), dtype=complex)
            for m in range(mm):
                for k in range(mm):
                    rhs = dc[k] @ inner[m] - dc[m] @ dz[k]
                    d2z[m, k] = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
        return scale, z, dz, d2z


_MODEL_CACHE: "WeakKeyDictionary[AtomicSystem, _ReducedModel]" = WeakKeyDictionary()


def _model_for(system):
    model = _MODEL_CACHE.get(system)
    if model is None:
        model = _ReducedModel(system)
        _MODEL_CACHE[system] = model
    return model


def solve_steady_state(system, lo, *, second_order=True):
    """Steady-state density matrix and LO-Rabi derivatives of rho_21.

    Solves the reduced system C0 z + w0/sqrt(M+3) = 0, recovers
    rho = unvec(Q [1/sqrt(M+3); z]), and propagates first (and optionally
    second) derivatives with respect to the LO Rabi frequencies through the
    same factorization.
    """
    if lo.num_bands != system.num_bands:
        raise ValueError("LO configuration and system disagree on the number of bands")
    model = _model_for(system)
    omega_lo = system.lo_rabi(lo.e_lo)
    scale, z, dz, d2z = model.solve(omega_lo, second_order=second_order)
    n = model.n
    x = model.q @ np.concatenate(([1.0 / model.sqrt_n], z))
    rho = x.reshape(n, n, order="F")
    q_row = model.q_row2[1:]
    d_rho21 = np.array([q_row @ dz[m] for m in range(system.num_bands)])
    if d2z is not None:
        d2_rho21 = d2z @ q_row
    else:
        d2_rho21 = None
    # Dimensionless residual of the full (scaled) generator at the solution.
    a_full = model.t_base.copy()
    for m in range(system.num_bands):
        a_full += omega_lo[m] * model.t_deriv[m]
    residual = float(np.abs((a_full / scale) @ (model.q.T @ x)).max())
    return SteadyStateSolution(
        rho=rho, z=z, rho21=complex(x[1]), d_rho21=d_rho21,
        d2_rho21=d2_rho21, residual=residual)


def _beta(system):
    """Probe absorption prefactor 2 k_p N0 mu_12^2 / (eps0 hbar Omega_p) [1/m]."""
    if system.omega_p <= 0:
        raise ValueError("probe Rabi frequency must be > 0 for optical readout")
    return (2.0 * system.k_p * system.n0 * system.mu_12 ** 2
            / (epsilon_0 * hbar * system.omega_p))


def _transmission(system, rho21):
    """Beer-Lambert probe intensity transmission from the (2,1) coherence."""
    absorb = _ABSORPTION_SIGN * np.imag(rho21)
    return math.exp(-_beta(system) * system.cell_length * absorb)


def probe_transmission(system, lo):
    """Probe light transmission coefficient T_p in [0, 1].

    T_p = exp(-2 k_p L N0 mu_12^2 / (eps0 hbar Omega_p) * a21) with a21 the
    absorption-positive part of the steady-state (2,1) coherence.  The
    functional form is the standard susceptibility/Beer-Lambert model (the
    receiver response plots constrain only its monotone behavior).
    """
    sol = solve_steady_state(system, lo, second_order=False)
    return _transmission(system, sol.rho21)


def band_gains(system, lo):
    """Transconductance vector only (no Jacobian); cheap line-search path."""
    sol = solve_steady_state(system, lo, second_order=False)
    return _gains_from_solution(system, sol, jacobian=False)[0]


def _gains_from_solution(system, sol, jacobian=True):
    beta = _beta(system)
    t_p = _transmission(system, sol.rho21)
    i_ph = system.i_ph0 * t_p
    conv = system.mu_rf / (2.0 * hbar)
    da = _ABSORPTION_SIGN * np.imag(sol.d_rho21)
    g = i_ph * beta * da * conv
    if not jacobian:
        return g, None
    d2a = _ABSORPTION_SIGN * np.imag(sol.d2_rho21)
    slope = da * conv
    j = (i_ph * beta * d2a * np.outer(conv, conv)
         - i_ph * system.cell_length * beta ** 2 * np.outer(slope, slope))
    return g, j


def transconductances(system, lo):
    """Quantum transconductances g_q and the Jacobian J_q = d g_q / d E_LO.

    g_q[m] = I_ph * beta * a'_m * mu_rf[m]/(2 hbar), with beta the probe
    absorption prefactor, a'_m the absorption-positive LO-Rabi derivative of
    the (2,1) coherence, and I_ph = i_ph0 * T_p the zero-signal photocurrent
    at the operating point.  J_q combines the second-derivative term with
    the photocurrent chain-rule term (factor L and squared prefactor); both
    terms are symmetric in the band indices.
    """
    sol = solve_steady_state(system, lo, second_order=True)
    g, j = _gains_from_solution(system, sol, jacobian=True)
    return QuantumGains(g_q=_readonly(g), j_q=_readonly(j))
