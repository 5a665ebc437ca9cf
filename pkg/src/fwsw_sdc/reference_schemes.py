"""Second-order comparators that treat the whole right-hand side implicitly:
the implicit midpoint rule (identical to DIRK(2) and, for linear problems,
to the trapezoidal rule) and BDF-2."""
import enum

import numpy as np

from .linalg_core import GmresConfig, LinearOperator, gmres_solve
from .sdc_engine import ImplicitSolveError


class Scheme(enum.Enum):
    MIDPOINT = "midpoint"
    BDF2 = "bdf2"


def _solve_full(sys, beta, rhs, guess, tol):
    """Solve ``u - beta*f(u) = rhs``; uses the system's own solver when it has one."""
    if hasattr(sys, "solve_full"):
        return sys.solve_full(beta, rhs, guess=guess, tol=tol)
    op = LinearOperator(rhs.size, lambda v: v - beta * sys.eval(v))
    res = gmres_solve(op, rhs, guess, GmresConfig(tolerance=tol or 1e-5))
    if not res.converged:
        raise ImplicitSolveError(f"GMRES did not converge (rel. residual {res.residual:.2e})")
    return res.solution, res.iterations


def midpoint_step(u_n, sys, dt, tol=None):
    """``(I - dt/2 A) u_{n+1} = (I + dt/2 A) u_n``; returns ``(u_{n+1}, iterations)``."""
    rhs = u_n + 0.5 * dt * sys.eval(u_n)
    return _solve_full(sys, 0.5 * dt, rhs, u_n, tol)


def bdf2_step(u_n, u_nm1, sys, dt, tol=None):
    """``(3/2 I - dt A) u_{n+1} = 2 u_n - u_{n-1}/2``; returns ``(u_{n+1}, iterations)``."""
    rhs = (4.0 * u_n - u_nm1) / 3.0
    return _solve_full(sys, 2.0 * dt / 3.0, rhs, u_n, tol)


class LinearStepper:
    """Runs midpoint or BDF-2 trajectories; BDF-2 starts with one midpoint step."""

    def __init__(self, scheme, sys, dt, tol=None):
        self.scheme = Scheme(scheme)
        self.sys = sys
        self.dt = dt
        self.tol = tol
        self.solves = 0
        self.iterations = 0

    def _count(self, result):
        u, its = result
        self.solves += 1
        self.iterations += its
        return u

    def run(self, u0, n_steps, callback=None):
        """Advance ``n_steps``; ``callback(k, u)`` is called after step ``k``."""
        u = np.asarray(u0)
        u_prev = None
        for k in range(n_steps):
            if self.scheme is Scheme.MIDPOINT or u_prev is None:
                u_new = self._count(midpoint_step(u, self.sys, self.dt, self.tol))
            else:
                u_new = self._count(bdf2_step(u, u_prev, self.sys, self.dt, self.tol))
            u_prev, u = u, u_new
            if callback is not None:
                callback(k + 1, u)
        return u
