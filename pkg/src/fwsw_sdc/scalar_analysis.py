"""Matrix analysis of fwsw-SDC for u' = i*(lambda_fast + lambda_slow)*u.

Sweeps on this problem are the Richardson iteration

    L U^{k+1} = U0 + R U^k,
    L = I - dt*(i*lf*Qfast + i*ls*Qslow),
    R = dt*(i*(lf+ls)*Q - i*lf*Qfast - i*ls*Qslow),

so everything (error propagation, stability function) follows from L and R.
"""
from dataclasses import dataclass

import numpy as np

from .linalg_core import inf_norm, mat_inverse, spectral_radius
from .quadrature import NodeFamily, lebesgue_constant, make_rule
from .sdc_engine import LinearSplitSystem

STABILITY_THRESHOLD = 1.0 + 1e-8


@dataclass(frozen=True)
class ScalarParams:
    lambda_fast: float
    lambda_slow: float
    dt: float = 1.0

    def __post_init__(self):
        if not all(np.isfinite([self.lambda_fast, self.lambda_slow, self.dt])):
            raise ValueError("scalar parameters must be finite")

    @property
    def lam(self):
        return self.lambda_fast + self.lambda_slow


@dataclass(frozen=True)
class IterationMatrices:
    L: np.ndarray
    R: np.ndarray
    E: np.ndarray
    L_inv: np.ndarray


@dataclass
class StabilityGrid:
    axis_fast: np.ndarray
    axis_slow: np.ndarray
    modulus: np.ndarray  # shape (len(axis_fast), len(axis_slow))
    mask_nonsense: np.ndarray

    @property
    def stable(self):
        return self.modulus <= STABILITY_THRESHOLD


class ScalarTestSystem(LinearSplitSystem):
    """The scalar problem as a 1x1 complex split system for the SDC engine."""

    def __init__(self, lambda_fast, lambda_slow):
        super().__init__([[1j * lambda_fast]], [[1j * lambda_slow]])
        self.lambda_fast = lambda_fast
        self.lambda_slow = lambda_slow

    def solve_implicit(self, alpha, rhs, guess=None, tol=None):
        return rhs / (1.0 - 1j * alpha * self.lambda_fast), 0


def build_matrices(p, rule):
    M = rule.M
    dt = p.dt
    pre = dt * (1j * p.lambda_fast * rule.Qfast + 1j * p.lambda_slow * rule.Qslow)
    L = np.eye(M) - pre
    R = dt * 1j * p.lam * rule.Q - pre
    L_inv = mat_inverse(L)
    return IterationMatrices(L=L, R=R, E=L_inv @ R, L_inv=L_inv)


def stiff_limit_matrix(rule):
    """Error propagation matrix ``I - Qfast^{-1} Q`` for lambda_fast -> infinity.

    For rules with a node at the step start (Lobatto) ``Qfast`` is singular;
    that node is a pure copy of u0 and carries no error, so the limit is
    taken on the remaining nodes.
    """
    Qf = np.asarray(rule.Qfast)
    Q = np.asarray(rule.Q)
    if rule.dtau[0] == 0.0:
        Qf = Qf[1:, 1:]
        Q = Q[1:, 1:]
    return np.eye(Qf.shape[0]) - mat_inverse(Qf) @ Q


def _sweep_operator(mats, K):
    """``E^K + sum_{j<K} E^j L^{-1}`` applied to the vector of ones."""
    M = mats.E.shape[0]
    ones = np.ones(M)
    acc = np.zeros(M, dtype=complex)
    v = mats.L_inv @ ones
    for _ in range(K):
        acc += v
        v = mats.E @ v
    return np.linalg.matrix_power(mats.E, K) @ ones + acc


def stability_function(p, rule, K):
    """Amplification factor of one fwsw-SDC step with ``K`` sweeps."""
    if K < 1:
        raise ValueError("K must be at least 1")
    mats = build_matrices(p, rule)
    return complex(1.0 + 1j * p.lam * p.dt * (rule.q_end @ _sweep_operator(mats, K)))


def collocation_stability_function(p, rule):
    """Amplification factor of the underlying collocation method."""
    M = rule.M
    z = 1j * p.lam * p.dt
    stages = mat_inverse(np.eye(M) - z * rule.Q) @ np.ones(M)
    return complex(1.0 + z * (rule.q_end @ stages))


def stability_modulus(rule, K, dt_lambda_fast, dt_lambda_slow):
    """|R| for arrays of normalised frequencies (dt = 1), evaluated by running
    the sweeps on all points at once.

    Since ``L`` is lower triangular, each sweep is a vectorised forward
    substitution; the result agrees with :func:`stability_function`.
    """
    lf, ls = np.broadcast_arrays(np.asarray(dt_lambda_fast, float), np.asarray(dt_lambda_slow, float))
    shape = lf.shape
    lf = lf.ravel()
    ls = ls.ravel()
    lam = lf + ls
    M = rule.M
    Qf, Qs, Q = rule.Qfast, rule.Qslow, rule.Q
    # L[m, j] per point, lower triangular
    pre = 1j * (lf[:, None, None] * Qf[None] + ls[:, None, None] * Qs[None])
    L = np.eye(M)[None] - pre
    R = 1j * lam[:, None, None] * Q[None] - pre
    U = np.ones((lf.size, M), dtype=complex)
    for _ in range(K):
        rhs = 1.0 + np.einsum("pmj,pj->pm", R, U)
        new = np.empty_like(U)
        for m in range(M):
            s = rhs[:, m] - np.einsum("pj,pj->p", L[:, m, :m], new[:, :m])
            new[:, m] = s / L[:, m, m]
        U = new
    Rval = 1.0 + 1j * lam * (U @ rule.q_end)
    return np.abs(Rval).reshape(shape)


def scan_stability(rule, K, fast_range=(0.0, 12.0), slow_range=(0.0, 5.0), resolution=400):
    """|R| on a rectangular grid of (dt*lambda_fast, dt*lambda_slow) with dt = 1."""
    if isinstance(resolution, int):
        resolution = (resolution, resolution)
    if fast_range[1] <= fast_range[0] or slow_range[1] <= slow_range[0]:
        raise ValueError("ranges must be increasing")
    if min(fast_range[0], slow_range[0]) < 0:
        raise ValueError("ranges must be non-negative")
    axis_fast = np.linspace(fast_range[0], fast_range[1], resolution[0])
    axis_slow = np.linspace(slow_range[0], slow_range[1], resolution[1])
    LF, LS = np.meshgrid(axis_fast, axis_slow, indexing="ij")
    modulus = np.empty(LF.shape)
    for i in range(len(axis_fast)):  # row-wise keeps the memory bounded
        modulus[i] = stability_modulus(rule, K, LF[i], LS[i])
    return StabilityGrid(axis_fast, axis_slow, modulus, LF < LS)


@dataclass(frozen=True)
class NormBound:
    lhs: float
    rhs: float
    holds: bool
    lebesgue: float
    quadratic_coefficient: float


def verify_norm_bound(p, rule, halvings=8):
    """Check ``||E||_inf <= dt*(Lambda_M + |lf| + |ls|) + C*dt^2``.

    ``C`` is measured: ``g(h) = ||E(h)|| - h*(Lambda_M + |lf| + |ls|)`` is
    evaluated for ``h = dt/2, dt/4, ...`` and ``g(h)/h^2`` is extrapolated to
    ``h -> 0`` (Richardson, first order in ``h``). The largest of the sampled
    and extrapolated quotients is used, and never a negative one.
    """
    s = p.dt * (abs(p.lambda_fast) + abs(p.lambda_slow))
    if not s < 1.0:
        raise ValueError("bound requires dt*(|lambda_fast| + |lambda_slow|) < 1")
    lam_M = lebesgue_constant(rule)
    slope = lam_M + abs(p.lambda_fast) + abs(p.lambda_slow)

    def g(h):
        mats = build_matrices(ScalarParams(p.lambda_fast, p.lambda_slow, h), rule)
        return inf_norm(mats.E) - h * slope

    hs = p.dt * 0.5 ** np.arange(1, halvings + 1)
    quot = np.array([g(h) / h**2 for h in hs])
    extrapolated = 2.0 * quot[-1] - quot[-2]
    C = max(0.0, float(np.max(quot)), float(extrapolated))
    lhs = inf_norm(build_matrices(p, rule).E)
    rhs = p.dt * slope + C * p.dt**2
    return NormBound(lhs=lhs, rhs=rhs, holds=bool(lhs <= rhs), lebesgue=lam_M, quadratic_coefficient=C)


def stiff_limit_table(M_values, lambda_fast_values=(50.0, 100.0), lambda_slow=1.0, dt=1.0,
                      family=NodeFamily.RADAU_RIGHT):
    """Spectral radius and inf-norm of E for the stiff limit and finite lambda_fast."""
    rows = []
    for M in M_values:
        rule = make_rule(family, M)
        E = stiff_limit_matrix(rule)
        rows.append({"M": M, "lambda_fast": float("inf"),
                     "spectral_radius": spectral_radius(E), "inf_norm": inf_norm(E)})
        for lf in lambda_fast_values:
            E = build_matrices(ScalarParams(lf, lambda_slow, dt), rule).E
            rows.append({"M": M, "lambda_fast": float(lf),
                         "spectral_radius": spectral_radius(E), "inf_norm": inf_norm(E)})
    return rows
