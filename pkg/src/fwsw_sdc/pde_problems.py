"""Finite-difference split systems: 1-D acoustic-advection and 2-D linearised
Boussinesq, plus their initial data and exact solutions."""
from dataclasses import dataclass, field, replace

import numpy as np

from .linalg_core import GmresConfig, LinearOperator, gmres_solve
from .sdc_engine import ImplicitSolveError, SplitSystem


def fd_weights(offsets, derivative_order=1):
    """Finite-difference weights at 0 for the given integer (or real) offsets.

    Fornberg's recursion; weights are for unit grid spacing.
    """
    x = np.asarray(offsets, dtype=float)
    if len(np.unique(x)) != len(x):
        raise ValueError(f"duplicate offsets in {list(offsets)}")
    n = len(x)
    if n < derivative_order + 1:
        raise ValueError("need at least derivative_order + 1 offsets")
    m_max = derivative_order
    c = np.zeros((n, m_max + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = x[0]
    for i in range(1, n):
        mn = min(i, m_max)
        c2 = 1.0
        c5 = c4
        c4 = x[i]
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, derivative_order]


@dataclass(frozen=True)
class Stencil1D:
    offsets: tuple
    weights: np.ndarray
    order: int
    bias: str = "centered"

    @classmethod
    def centered(cls, order):
        if order % 2:
            raise ValueError("centred first-derivative stencils have even order")
        half = order // 2
        offsets = tuple(range(-half, half + 1))
        return cls(offsets, fd_weights(offsets), order, "centered")

    @classmethod
    def upwind(cls, order, velocity_sign=1):
        """Upwind-biased stencil of odd ``order`` for a velocity of the given sign."""
        if order % 2 == 0:
            raise ValueError("upwind stencils have odd order")
        half = (order + 1) // 2
        offsets = tuple(range(-half, half)) if velocity_sign >= 0 else tuple(range(-half + 1, half + 1))
        return cls(offsets, fd_weights(offsets), order, "upwind")

    def symbol(self, kappa, dx):
        """Fourier symbol: the factor replacing ``i*kappa`` for the mode exp(i*kappa*x)."""
        kappa = np.asarray(kappa, dtype=float)
        o = np.asarray(self.offsets, dtype=float)
        return np.exp(1j * np.multiply.outer(kappa * dx, o)) @ self.weights / dx

    def apply_periodic(self, u, dx, axis=-1):
        out = np.zeros_like(u, dtype=np.result_type(u, float))
        for o, w in zip(self.offsets, self.weights):
            if w != 0.0:
                out += w * np.roll(u, -o, axis=axis)
        return out / dx


def _gmres_solve_shifted(apply_f, alpha, rhs, guess, tol, cfg, scale=None):
    """GMRES for ``u - alpha*f(u) = rhs``.

    With ``scale`` the unknown is written as ``u = scale * y`` and the
    equations are divided by ``scale``, so the relative residual is measured
    in the norm weighted by ``1/scale``.
    """
    cfg = replace(cfg, tolerance=tol if tol is not None else cfg.tolerance)
    if scale is None:
        op = LinearOperator(rhs.size, lambda v: v - alpha * apply_f(v))
        res = gmres_solve(op, rhs, guess, cfg)
        solution = res.solution
    else:
        op = LinearOperator(rhs.size, lambda y: y - alpha * apply_f(scale * y) / scale)
        res = gmres_solve(op, rhs / scale, None if guess is None else guess / scale, cfg)
        solution = scale * res.solution
    if not res.converged:
        raise ImplicitSolveError(
            f"GMRES stopped after {res.iterations} iterations at relative residual {res.residual:.2e}")
    return solution, res.iterations


class _SolverMixin:
    """GMRES-backed implicit solves for systems exposing ``eval_fast``/``eval``."""

    gmres: GmresConfig
    solver_scale = None

    def solve_implicit(self, alpha, rhs, guess=None, tol=None):
        if alpha == 0.0:
            return np.array(rhs, copy=True), 0
        return _gmres_solve_shifted(self.eval_fast, alpha, rhs, guess, tol, self.gmres, self.solver_scale)

    def solve_full(self, beta, rhs, guess=None, tol=None):
        """Solve ``u - beta*(f_fast + f_slow)(u) = rhs``."""
        if beta == 0.0:
            return np.array(rhs, copy=True), 0
        return _gmres_solve_shifted(self.eval, beta, rhs, guess, tol, self.gmres, self.solver_scale)


# ---------------------------------------------------------------------------
# 1-D acoustic-advection


@dataclass
class AcousticAdvectionState:
    u: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        if self.u.shape != self.p.shape:
            raise ValueError("u and p must have equal length")

    def to_vector(self):
        return np.concatenate((self.u, self.p))

    @classmethod
    def from_vector(cls, v):
        n = v.size // 2
        return cls(v[:n].copy(), v[n:].copy())


class AcousticAdvectionSystem(_SolverMixin, SplitSystem):
    """Periodic ``u_t + U u_x + c_s p_x = 0``, ``p_t + U p_x + c_s u_x = 0`` on [0, length).

    Acoustic coupling (fast) uses a centred stencil, advection (slow) an
    upwind one. ``solver="gmres"`` solves implicit systems matrix-free;
    ``solver="direct"`` solves them exactly in Fourier space, which is
    possible because every operator is circulant.
    """

    def __init__(self, N, U=0.1, c_s=1.0, length=1.0, acoustic_order=6, advection_order=5,
                 solver="gmres", gmres=GmresConfig()):
        self.N = N
        self.U = U
        self.c_s = c_s
        self.length = length
        self.dx = length / N
        self.acoustic = Stencil1D.centered(acoustic_order)
        self.advection = Stencil1D.upwind(advection_order, 1 if U >= 0 else -1)
        width = max(max(abs(o) for o in s.offsets) for s in (self.acoustic, self.advection))
        if N < 2 * width + 1:
            raise ValueError(f"N={N} is smaller than the stencil width")
        if solver not in ("gmres", "direct"):
            raise ValueError(f"unknown solver {solver!r}")
        self.solver = solver
        self.gmres = gmres
        self.dimension = 2 * N
        kappa = 2.0 * np.pi * np.fft.fftfreq(N, d=self.dx)
        self._sym_ac = self.acoustic.symbol(kappa, self.dx)
        self._sym_adv = self.advection.symbol(kappa, self.dx)

    @property
    def x(self):
        return np.arange(self.N) * self.dx

    def eval_fast(self, v):
        u, p = v[:self.N], v[self.N:]
        D = self.acoustic.apply_periodic
        return -self.c_s * np.concatenate((D(p, self.dx), D(u, self.dx)))

    def eval_slow(self, v):
        u, p = v[:self.N], v[self.N:]
        D = self.advection.apply_periodic
        return -self.U * np.concatenate((D(u, self.dx), D(p, self.dx)))

    def _fourier_solve(self, alpha, rhs, with_slow):
        r1 = np.fft.fft(rhs[:self.N])
        r2 = np.fft.fft(rhs[self.N:])
        a = 1.0 + (alpha * self.U * self._sym_adv if with_slow else 0.0)
        b = alpha * self.c_s * self._sym_ac
        det = a * a - b * b
        x1 = (a * r1 - b * r2) / det
        x2 = (a * r2 - b * r1) / det
        out = np.concatenate((np.fft.ifft(x1), np.fft.ifft(x2)))
        return out.real if np.isrealobj(rhs) else out

    def solve_implicit(self, alpha, rhs, guess=None, tol=None):
        if self.solver == "direct":
            return self._fourier_solve(alpha, rhs, False), 0
        return super().solve_implicit(alpha, rhs, guess, tol)

    def solve_full(self, beta, rhs, guess=None, tol=None):
        if self.solver == "direct":
            return self._fourier_solve(beta, rhs, True), 0
        return super().solve_full(beta, rhs, guess, tol)


def acoustic_advection_system(N, U=0.1, c_s=1.0, **kwargs):
    return AcousticAdvectionSystem(N, U, c_s, **kwargs)


def standing_profile(x, waves=3):
    """Initial pressure ``sin(2 pi x) + sin(2 pi waves x)`` of the convergence test.

    Both terms are periodic on [0, 1] for integer ``waves``; a half-integer
    number of waves would put a kink into the periodic extension, and the
    error near that kink would limit the observable order.
    """
    x = np.asarray(x, dtype=float)
    return np.sin(2.0 * np.pi * x) + np.sin(2.0 * np.pi * waves * x)


def exact_acoustic_advection(p0, U, c_s, t, x, length=1.0):
    """Exact periodic solution for ``u(x, 0) = 0``, ``p(x, 0) = p0(x)``."""
    x = np.asarray(x, dtype=float)
    right = p0(np.mod(x - (U + c_s) * t, length))
    left = p0(np.mod(x - (U - c_s) * t, length))
    return 0.5 * (right - left), 0.5 * (right + left)


MULTISCALE_SIGMA = 0.1
MULTISCALE_X_SLOW = 0.75
MULTISCALE_X_FAST = 0.25
MULTISCALE_K = 7.2 * np.pi


def _periodic_offset(x, x0, length=1.0):
    return np.mod(x - x0 + 0.5 * length, length) - 0.5 * length


def slow_packet(x, center=MULTISCALE_X_SLOW, sigma=MULTISCALE_SIGMA):
    d = _periodic_offset(np.asarray(x, float), center)
    return np.exp(-(d / sigma) ** 2)


def fast_packet(x, center=MULTISCALE_X_FAST, sigma=MULTISCALE_SIGMA, k=MULTISCALE_K):
    d = _periodic_offset(np.asarray(x, float), center)
    return np.exp(-(d / sigma) ** 2) * np.cos(k * d / sigma)


def multiscale_initial_data(N):
    """Gaussian plus modulated Gaussian with ``u = p`` (purely right-moving)."""
    x = np.arange(N) / N
    p = slow_packet(x) + fast_packet(x)
    return AcousticAdvectionState(p.copy(), p)


# ---------------------------------------------------------------------------
# 2-D linearised Boussinesq


@dataclass(frozen=True)
class BoussinesqParams:
    U: float = 20.0
    c_s: float = 300.0
    N_buoy: float = 0.01
    Lx: float = 300e3
    Lz: float = 10e3
    Nx: int = 300
    Nz: int = 30  # interior rows; the two wall rows are stored in addition
    x_left: float = -150e3
    acoustic_order: int = 4
    advection_order: int = 5
    gmres: GmresConfig = field(default_factory=GmresConfig)

    def __post_init__(self):
        for name in ("c_s", "N_buoy", "Lx", "Lz", "Nx", "Nz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def dx(self):
        return self.Lx / self.Nx

    @property
    def dz(self):
        return self.Lz / (self.Nz + 1)

    @property
    def rows(self):
        return self.Nz + 2

    @property
    def x(self):
        return self.x_left + np.arange(self.Nx) * self.dx

    @property
    def z(self):
        return np.arange(self.rows) * self.dz


@dataclass
class BoussinesqState:
    u: np.ndarray
    w: np.ndarray
    b: np.ndarray
    p: np.ndarray

    def to_vector(self):
        return np.stack((self.u, self.w, self.b, self.p)).ravel()

    @classmethod
    def from_vector(cls, v, params):
        f = v.reshape(4, params.Nx, params.rows)
        return cls(*(a.copy() for a in f))


class BoussinesqSystem(_SolverMixin, SplitSystem):
    """Channel periodic in x with rigid lids at z = 0 and z = Lz.

    Fields are stored as ``(4, Nx, Nz + 2)`` arrays (u, w, b, p) including
    the wall rows. Vertical derivatives use ghost rows: ``w`` is extended
    antisymmetrically about each wall (so ``w = 0`` there), ``u, b, p``
    symmetrically. The ``w`` tendency is zero on the wall rows.

    The fast operator is skew-adjoint in the energy norm
    ``u^2 + w^2 + b^2/N^2 + p^2/c_s^2`` but far from normal in the plain
    Euclidean one, where restarted GMRES stagnates. Implicit solves are
    therefore done in the scaled variables ``(u, w, b/N, p/c_s)``.
    """

    def __init__(self, params=BoussinesqParams()):
        self.params = params
        self.gmres = params.gmres
        self.dimension = 4 * params.Nx * params.rows
        self.dx = params.dx
        self.dz = params.dz
        self.centered = Stencil1D.centered(params.acoustic_order)
        self.upwind = Stencil1D.upwind(params.advection_order, 1 if params.U >= 0 else -1)
        self.ghost = max(abs(o) for o in self.centered.offsets)
        n = params.Nx * params.rows
        self.solver_scale = np.repeat([1.0, 1.0, params.N_buoy, params.c_s], n)
        if params.Nz + 2 < 2 * self.ghost + 1 or params.Nx < 2 * max(abs(o) for o in self.upwind.offsets) + 1:
            raise ValueError("grid is too small for the stencils")

    def _fields(self, v):
        return v.reshape(4, self.params.Nx, self.params.rows)

    def _dz(self, f, parity):
        g = self.ghost
        below = parity * f[:, g:0:-1]
        above = parity * f[:, -2:-g - 2:-1]
        ext = np.concatenate((below, f, above), axis=1)
        n = f.shape[1]
        out = np.zeros(f.shape, dtype=np.result_type(f, float))
        for o, w in zip(self.centered.offsets, self.centered.weights):
            if w != 0.0:
                out += w * ext[:, g + o:g + o + n]
        return out / self.dz

    def eval_fast(self, v):
        u, w, b, p = self._fields(v)
        P = self.params
        Dx = self.centered.apply_periodic
        out = np.empty((4,) + u.shape, dtype=np.result_type(v, float))
        out[0] = -Dx(p, self.dx, axis=0)
        out[1] = b - self._dz(p, 1.0)
        out[2] = -P.N_buoy**2 * w
        out[3] = -P.c_s**2 * (Dx(u, self.dx, axis=0) + self._dz(w, -1.0))
        out[1, :, 0] = 0.0
        out[1, :, -1] = 0.0
        return out.ravel()

    def eval_slow(self, v):
        f = self._fields(v)
        out = -self.params.U * self.upwind.apply_periodic(f, self.dx, axis=1)
        out[1, :, 0] = 0.0
        out[1, :, -1] = 0.0
        return out.ravel()


def boussinesq_system(params=BoussinesqParams()):
    return BoussinesqSystem(params)


def buoyancy_perturbation(x, z, d_theta=0.01, H=10e3, a=5e3, x0=-50e3):
    return d_theta * np.sin(np.pi * z / H) / (1.0 + (x - x0) ** 2 / a**2)


def gravity_wave_initial_data(params=BoussinesqParams(), d_theta=0.01, a=5e3, x0=-50e3):
    X, Z = np.meshgrid(params.x, params.z, indexing="ij")
    b = buoyancy_perturbation(X, Z, d_theta, params.Lz, a, x0)
    zero = np.zeros_like(b)
    return BoussinesqState(zero.copy(), zero.copy(), b, zero.copy())


def buoyancy_cross_section(state, params, height=5e3):
    """Buoyancy at ``height`` by linear interpolation between grid rows."""
    z = params.z
    j = int(np.clip(np.searchsorted(z, height) - 1, 0, len(z) - 2))
    t = (height - z[j]) / (z[j + 1] - z[j])
    return (1.0 - t) * state.b[:, j] + t * state.b[:, j + 1]
