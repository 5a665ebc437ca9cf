"""Fast-wave slow-wave SDC sweeps for split right-hand sides f = f_fast + f_slow.

The fast part is integrated with implicit Euler between neighbouring nodes,
the slow part with explicit Euler, and the quadrature of the previous
iterate supplies the correction.
"""
import enum
from dataclasses import dataclass, field

import numpy as np

from .linalg_core import GmresConfig, LinearOperator, gmres_solve, mat_inverse
from .quadrature import QuadratureRule


class ImplicitSolveError(RuntimeError):
    """An implicit solve inside a sweep failed."""

    def __init__(self, message, node=None, sweep=None):
        where = []
        if sweep is not None:
            where.append(f"sweep {sweep}")
        if node is not None:
            where.append(f"node {node}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.node = node
        self.sweep = sweep


class SplitSystem:
    """Right-hand side split into a fast (implicit) and a slow (explicit) part.

    Subclasses implement :meth:`eval_fast`, :meth:`eval_slow` and
    :meth:`solve_implicit`. States are flat numpy vectors of length
    ``dimension``.
    """

    dimension = None

    def eval_fast(self, u):
        raise NotImplementedError

    def eval_slow(self, u):
        raise NotImplementedError

    def eval(self, u):
        return self.eval_fast(u) + self.eval_slow(u)

    def solve_implicit(self, alpha, rhs, guess=None, tol=None):
        """Solve ``u - alpha * f_fast(u) = rhs``.

        Returns ``(u, iterations)``; ``iterations`` is the number of inner
        solver iterations spent (0 for direct solves).
        """
        raise NotImplementedError


class LinearSplitSystem(SplitSystem):
    """Dense linear system ``u' = (A_fast + A_slow) u`` (real or complex)."""

    def __init__(self, a_fast, a_slow):
        self.a_fast = np.atleast_2d(np.asarray(a_fast))
        self.a_slow = np.atleast_2d(np.asarray(a_slow))
        if self.a_fast.shape != self.a_slow.shape:
            raise ValueError("fast and slow matrices differ in shape")
        self.dimension = self.a_fast.shape[0]
        self._inverse_cache = {}

    @property
    def matrix(self):
        return self.a_fast + self.a_slow

    def eval_fast(self, u):
        return self.a_fast @ u

    def eval_slow(self, u):
        return self.a_slow @ u

    def solve_implicit(self, alpha, rhs, guess=None, tol=None):
        inv = self._inverse_cache.get(alpha)
        if inv is None:
            inv = mat_inverse(np.eye(self.dimension) - alpha * self.a_fast)
            self._inverse_cache[alpha] = inv
        return inv @ rhs, 0


class UpdateMode(enum.Enum):
    QUADRATURE = "quadrature"
    LAST_NODE = "last-node"


@dataclass
class SdcConfig:
    rule: QuadratureRule
    K: int = 3
    residual_tol: float = None
    update_mode: UpdateMode = UpdateMode.QUADRATURE
    inner_tol_factor: float = 0.1
    inner_tol_floor: float = 1e-5
    # compare the residual with the stage magnitude before scaling it into a
    # relative solver tolerance; False uses the absolute residual as is
    relative_inner_tol: bool = True

    def __post_init__(self):
        self.update_mode = UpdateMode(self.update_mode)
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not 0.0 < self.inner_tol_factor <= 1.0:
            raise ValueError("inner_tol_factor must lie in (0, 1]")
        if self.update_mode is UpdateMode.LAST_NODE and not self.rule.right_endpoint_is_node:
            raise ValueError("last-node update needs a rule whose last node is the step end")


@dataclass
class SweepState:
    u0: np.ndarray
    U: np.ndarray  # (M, n) stage values
    k: int = 0
    residual_norm: float = float("inf")
    inner_iterations: int = 0
    implicit_solves: int = 0
    sweep_iterations: list = field(default_factory=list)  # inner iterations per sweep
    residual_history: list = field(default_factory=list)
    F_fast: np.ndarray = None
    F_slow: np.ndarray = None
    residual_vectors: np.ndarray = None  # (M, n) per-node residuals, set by residual()

    @property
    def M(self):
        return self.U.shape[0]


def initialize(u0, M):
    """Copy ``u0`` into every stage."""
    u0 = np.asarray(u0)
    U = np.repeat(u0[np.newaxis, ...], M, axis=0)
    return SweepState(u0=u0.copy(), U=U)


def _ensure_tendencies(state, sys):
    if state.F_fast is None:
        state.F_fast = np.array([sys.eval_fast(u) for u in state.U])
        state.F_slow = np.array([sys.eval_slow(u) for u in state.U])


def _node_sum(weights, F):
    """Contract quadrature weights (matrix or vector) with the node axis of ``F``."""
    return (weights @ F.reshape(F.shape[0], -1)).reshape(np.shape(weights)[:-1] + F.shape[1:])


def residual(state, sys, cfg, dt):
    """Per-node residuals ``u0 + dt*sum_j Q[m, j] f(U_j) - U_m``.

    Also stores the max-norm over nodes and components in
    ``state.residual_norm``.
    """
    _ensure_tendencies(state, sys)
    F = state.F_fast + state.F_slow
    r = state.u0[np.newaxis, ...] + dt * _node_sum(cfg.rule.Q, F) - state.U
    state.residual_vectors = r
    state.residual_norm = float(np.max(np.abs(r))) if r.size else 0.0
    return r


def inner_tolerance(state, cfg, sys=None):
    """Tolerance handed to the implicit solver during the next sweep.

    The floor is used for the first sweep; afterwards ``inner_tol_factor``
    times the last residual, never below the floor. The solver tolerance is
    relative, so by default the residual is divided by the largest stage
    entry first, both measured in the variables the solver works in (see
    ``solver_scale`` on the system).
    """
    if state.k == 0 or not np.isfinite(state.residual_norm):
        return cfg.inner_tol_floor
    r = state.residual_norm
    if cfg.relative_inner_tol:
        weight = getattr(sys, "solver_scale", None)
        if weight is None:
            num = r
            den = float(np.max(np.abs(state.U))) if state.U.size else 0.0
        else:
            num = float(np.max(np.abs(state.residual_vectors / weight)))
            den = float(np.max(np.abs(state.U / weight)))
        r = num / den if den > 0.0 else num
    return max(cfg.inner_tol_factor * r, cfg.inner_tol_floor)


def sweep(state, sys, cfg, dt):
    """One node-to-node IMEX sweep; returns the new state (input is not modified)."""
    _ensure_tendencies(state, sys)
    rule = cfg.rule
    M = rule.M
    dtau = rule.dtau * (dt / rule.dt)
    F_old = state.F_fast + state.F_slow
    integrals = dt * _node_sum(rule.S, F_old)

    tol = inner_tolerance(state, cfg, sys)

    U_new = np.empty_like(state.U)
    Ff_new = np.empty_like(state.F_fast)
    Fs_new = np.empty_like(state.F_slow)
    iters = 0
    solves = 0
    u_prev = state.u0
    for m in range(M):
        rhs = u_prev - dtau[m] * state.F_fast[m] + integrals[m]
        if m > 0:
            rhs = rhs + dtau[m] * (Fs_new[m - 1] - state.F_slow[m - 1])
        if dtau[m] == 0.0:
            u = rhs
        else:
            try:
                u, n_it = sys.solve_implicit(dtau[m], rhs, guess=state.U[m], tol=tol)
            except Exception as exc:  # noqa: BLE001 - rewrapped with location
                raise ImplicitSolveError(str(exc), node=m + 1, sweep=state.k + 1) from exc
            iters += n_it
            solves += 1
        U_new[m] = u
        Ff_new[m] = sys.eval_fast(u)
        Fs_new[m] = sys.eval_slow(u)
        u_prev = u

    new = SweepState(
        u0=state.u0,
        U=U_new,
        k=state.k + 1,
        inner_iterations=state.inner_iterations + iters,
        implicit_solves=state.implicit_solves + solves,
        sweep_iterations=state.sweep_iterations + [iters],
        residual_history=list(state.residual_history),
        F_fast=Ff_new,
        F_slow=Fs_new,
    )
    residual(new, sys, cfg, dt)
    new.residual_history.append(new.residual_norm)
    return new


@dataclass
class StepResult:
    u: np.ndarray
    sweeps: int
    inner_iterations: int
    implicit_solves: int
    sweep_iterations: list
    residuals: list
    stages: np.ndarray


def end_update(state, cfg, dt):
    if cfg.update_mode is UpdateMode.LAST_NODE:
        return state.U[-1].copy()
    F = state.F_fast + state.F_slow
    return state.u0 + dt * _node_sum(cfg.rule.q_end, F)


def step(u0, sys, cfg, dt):
    """Advance ``u0`` by one step of length ``dt``.

    Sweeps until ``cfg.K`` sweeps are done or the residual drops to
    ``cfg.residual_tol``.
    """
    state = initialize(u0, cfg.rule.M)
    residual(state, sys, cfg, dt)
    state.residual_history.append(state.residual_norm)
    state.k = 0
    while state.k < cfg.K:
        if cfg.residual_tol is not None and state.residual_norm <= cfg.residual_tol:
            break
        state = sweep(state, sys, cfg, dt)
    return StepResult(
        u=end_update(state, cfg, dt),
        sweeps=state.k,
        inner_iterations=state.inner_iterations,
        implicit_solves=state.implicit_solves,
        sweep_iterations=state.sweep_iterations,
        residuals=state.residual_history,
        stages=state.U,
    )


def integrate(u0, sys, cfg, dt, n_steps, callback=None):
    """Run ``n_steps`` SDC steps; returns the final state and accumulated counters."""
    u = np.asarray(u0)
    totals = {"implicit_solves": 0, "inner_iterations": 0,
              "sweep_iterations": np.zeros(cfg.K, dtype=int), "sweep_counts": np.zeros(cfg.K, dtype=int)}
    for n in range(n_steps):
        res = step(u, sys, cfg, dt)
        u = res.u
        totals["implicit_solves"] += res.implicit_solves
        totals["inner_iterations"] += res.inner_iterations
        for k, its in enumerate(res.sweep_iterations):
            totals["sweep_iterations"][k] += its
            totals["sweep_counts"][k] += 1
        if callback is not None:
            callback(n + 1, u, res)
    return u, totals


def solve_collocation(u0, sys, rule, dt, gmres_cfg=None):
    """Stages of the collocation solution ``(I - dt Q kron A) U = U0`` for a linear system.

    Dense systems (anything exposing ``matrix``) are solved directly; others
    go through GMRES on the matrix-free Kronecker operator.
    """
    u0 = np.asarray(u0)
    M = rule.M
    n = u0.size
    U0 = np.tile(u0, M)
    if hasattr(sys, "matrix"):
        A = np.asarray(sys.matrix)
        big = np.eye(M * n) - dt * np.kron(rule.Q, A)
        return (mat_inverse(big) @ U0).reshape(M, n)

    Q = rule.Q

    def apply(x):
        X = x.reshape(M, n)
        F = np.array([sys.eval(xm) for xm in X])
        return (X - dt * (Q @ F)).ravel()

    op = LinearOperator(M * n, apply)
    res = gmres_solve(op, U0, U0.copy(), gmres_cfg or GmresConfig(tolerance=1e-12, max_iters=100000))
    if not res.converged:
        raise ImplicitSolveError(f"collocation GMRES did not converge (rel. residual {res.residual:.2e})")
    return res.solution.reshape(M, n)
