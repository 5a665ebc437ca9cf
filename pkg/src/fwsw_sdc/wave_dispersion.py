"""Semi-discrete dispersion relation for the acoustic-advection system.

For the plane wave exp(i*kappa*x) the system reduces to

    d/dt (u, p) = A_fast (u, p) + A_slow (u, p),
    A_fast = -s * c_s * [[0, 1], [1, 0]],   A_slow = -s * U * I,

where ``s`` is ``i*kappa`` or the symbol of a finite-difference stencil. A
time integrator maps (u, p)^n to Z (u, p)^n, and frequencies follow from
det(z*I - Z) = 0 with z = exp(-i*omega*dt).
"""
import enum
import logging
from dataclasses import dataclass

import numpy as np

from .linalg_core import mat_inverse
from .pde_problems import Stencil1D
from .quadrature import make_rule
from .sdc_engine import UpdateMode

log = logging.getLogger(__name__)


class Scheme(enum.Enum):
    FWSW_SDC = "sdc"
    MIDPOINT = "midpoint"
    BDF2 = "bdf2"


@dataclass(frozen=True)
class SpatialSymbol:
    """Replacement for ``i*kappa``: exact, or a centred stencil of given order on spacing ``dx``."""

    order: int = None
    dx: float = None

    @classmethod
    def exact(cls):
        return cls()

    @classmethod
    def centered(cls, order, dx):
        return cls(order, dx)

    def __call__(self, kappa):
        if self.order is None:
            return 1j * np.asarray(kappa, dtype=float)
        return Stencil1D.centered(self.order).symbol(kappa, self.dx)


@dataclass(frozen=True)
class WaveParams:
    U: float
    c_s: float
    kappa: float
    dt: float
    spatial_symbol: SpatialSymbol = SpatialSymbol()

    def __post_init__(self):
        if not (self.c_s > self.U >= 0.0):
            raise ValueError("need c_s > U >= 0")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")

    def operators(self):
        s = complex(self.spatial_symbol(self.kappa))
        a_fast = -s * self.c_s * np.array([[0.0, 1.0], [1.0, 0.0]])
        a_slow = -s * self.U * np.eye(2)
        return a_fast, a_slow


def build_update_matrix(p, rule, K, update_mode=UpdateMode.QUADRATURE):
    """2x2 amplification matrix of one fwsw-SDC step with ``K`` sweeps."""
    if K < 1:
        raise ValueError("K must be at least 1")
    update_mode = UpdateMode(update_mode)
    a_fast, a_slow = p.operators()
    M = rule.M
    dt = p.dt
    pre = dt * (np.kron(rule.Qfast, a_fast) + np.kron(rule.Qslow, a_slow))
    L = np.eye(2 * M) - pre
    R = dt * np.kron(rule.Q, a_fast + a_slow) - pre
    L_inv = mat_inverse(L)
    E = L_inv @ R

    Z = np.empty((2, 2), dtype=complex)
    for col, x0 in enumerate(np.eye(2)):
        X0 = np.kron(np.ones(M), x0)
        U = X0.astype(complex)
        for _ in range(K):
            U = E @ U + L_inv @ X0
        if update_mode is UpdateMode.LAST_NODE:
            Z[:, col] = U[-2:]
        else:
            Z[:, col] = x0 + dt * np.kron(rule.q_end, a_fast + a_slow) @ U
    return Z


def midpoint_update_matrix(p):
    a_fast, a_slow = p.operators()
    A = p.dt * (a_fast + a_slow)
    return mat_inverse(np.eye(2) - 0.5 * A) @ (np.eye(2) + 0.5 * A)


def _omega_from_z(z, dt):
    z = np.asarray(z, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        om = 1j * np.log(z) / dt
    return np.where(z == 0, complex(0.0, -np.inf), om)


def solve_dispersion(Z, dt):
    """Frequencies ``(omega1, omega2)`` solving ``det(exp(-i*omega*dt) I - Z) = 0``."""
    Z = np.asarray(Z)
    if Z.shape != (2, 2):
        raise ValueError("Z must be 2x2")
    tr = Z[0, 0] + Z[1, 1]
    det = Z[0, 0] * Z[1, 1] - Z[0, 1] * Z[1, 0]
    disc = np.sqrt(complex(tr * tr - 4.0 * det))
    # avoid cancellation: take the larger root first, the other via Vieta
    z1 = 0.5 * (tr + disc) if abs(tr + disc) >= abs(tr - disc) else 0.5 * (tr - disc)
    z2 = det / z1 if z1 != 0 else 0.5 * (tr - disc)
    om = _omega_from_z([z1, z2], dt)
    return complex(om[0]), complex(om[1])


def bdf2_branch_roots(p):
    """Principal roots z of BDF-2 for the two acoustic branches (U + c_s, U - c_s)."""
    s = complex(p.spatial_symbol(p.kappa))
    roots = []
    for speed in (p.U + p.c_s, p.U - p.c_s):
        mu = -s * speed * p.dt
        roots.append((2.0 + np.sqrt(1.0 + 2.0 * mu)) / (3.0 - 2.0 * mu))
    return np.array(roots)


@dataclass
class DispersionCurve:
    kappas: np.ndarray
    omega: np.ndarray  # (2, n); branch 0 tracks U + c_s, branch 1 tracks U - c_s
    dt: float
    wrapped: np.ndarray  # (2, n) principal log differs from the branch-continuous one
    ambiguous: np.ndarray  # (n,) roots too close to tell apart

    @property
    def phase_speed(self):
        return self.omega.real / self.kappas

    @property
    def amplification(self):
        """Per-step amplitude |z| = exp(Im(omega) dt)."""
        return np.exp(self.omega.imag * self.dt)

    @property
    def amplification_unit(self):
        """exp(Im(omega)), i.e. amplitude change over unit time."""
        return np.exp(self.omega.imag)


def _roots_for(p, rule, K, scheme, update_mode):
    if scheme is Scheme.BDF2:
        return bdf2_branch_roots(p)
    if scheme is Scheme.MIDPOINT:
        Z = midpoint_update_matrix(p)
    else:
        Z = build_update_matrix(p, rule, K, update_mode)
    om = solve_dispersion(Z, p.dt)
    return np.exp(-1j * np.array(om) * p.dt)


def sweep_curve(kappas, U, c_s, dt, rule=None, K=3, scheme=Scheme.FWSW_SDC,
                spatial_symbol=SpatialSymbol(), update_mode=UpdateMode.QUADRATURE):
    """Dispersion curve over increasing ``kappas`` with branches tracked by continuity."""
    scheme = Scheme(scheme)
    kappas = np.asarray(kappas, dtype=float)
    if np.any(kappas <= 0) or np.any(np.diff(kappas) <= 0):
        raise ValueError("kappas must be positive and strictly increasing")
    if rule is None:
        rule = make_rule("radau", 3)

    n = len(kappas)
    zs = np.empty((2, n), dtype=complex)
    ambiguous = np.zeros(n, dtype=bool)
    prev = None
    for i, kappa in enumerate(kappas):
        p = WaveParams(U, c_s, kappa, dt, spatial_symbol)
        z = _roots_for(p, rule, K, scheme, update_mode)
        if prev is None:
            exact = np.exp(-1j * np.array([U + c_s, U - c_s]) * kappa * dt)
            ref = exact
        else:
            ref = prev
        keep = abs(z[0] - ref[0]) + abs(z[1] - ref[1])
        swap = abs(z[1] - ref[0]) + abs(z[0] - ref[1])
        if swap < keep:
            z = z[::-1]
        if abs(z[0] - z[1]) < 1e-12:
            ambiguous[i] = True
            log.warning("branches indistinguishable at kappa=%g", kappa)
        zs[:, i] = z
        prev = z

    omega = _omega_from_z(zs, dt)
    wrapped = np.zeros((2, n), dtype=bool)
    for b in range(2):
        phase = -np.angle(zs[b])
        unwrapped = np.unwrap(phase)
        wrapped[b] = np.abs(unwrapped - phase) > 1e-9
    return DispersionCurve(kappas, omega, dt, wrapped, ambiguous)


def max_phase_speed_error(curve, U, c_s):
    """Largest relative phase-speed error over both branches (unwrapped points only)."""
    exact = np.array([U + c_s, U - c_s])[:, None]
    err = np.abs(curve.phase_speed - exact) / np.abs(exact)
    return float(np.max(err[~curve.wrapped]))
