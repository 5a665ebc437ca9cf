"""Small dense linear algebra and a restarted GMRES solver.

Collocation-scale matrices (a handful of nodes, possibly Kronecker-expanded
by a 2x2 block) are handled densely; PDE-scale implicit systems are only
ever touched through a matrix-free :class:`LinearOperator`.
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when elimination meets a (numerically) zero pivot."""

    def __init__(self, pivot_index, pivot_value):
        super().__init__(
            f"matrix is numerically singular at pivot {pivot_index} "
            f"(|pivot| = {pivot_value:.3e})"
        )
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value


class GmresBreakdown(RuntimeError):
    """Arnoldi produced a zero vector before the residual target was met."""


def _as_matrix(a):
    a = np.asarray(a)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def mat_inverse(a, pivot_tol=1e-14):
    """Invert a square matrix by Gauss-Jordan elimination with partial pivoting.

    A pivot is rejected when its modulus falls below ``pivot_tol`` times the
    largest entry of ``a``.
    """
    a = _as_matrix(a)
    n, m = a.shape
    if n != m:
        raise ValueError(f"matrix must be square, got {a.shape}")
    dtype = np.result_type(a.dtype, np.float64)
    work = np.array(a, dtype=dtype)
    inv = np.eye(n, dtype=dtype)
    scale = np.max(np.abs(work)) if n else 0.0
    if n and scale == 0.0:
        raise SingularMatrixError(0, 0.0)

    for col in range(n):
        piv = col + int(np.argmax(np.abs(work[col:, col])))
        if abs(work[piv, col]) <= pivot_tol * scale:
            raise SingularMatrixError(col, abs(work[piv, col]))
        if piv != col:
            work[[col, piv]] = work[[piv, col]]
            inv[[col, piv]] = inv[[piv, col]]
        p = work[col, col]
        work[col] /= p
        inv[col] /= p
        factors = work[:, col].copy()
        factors[col] = 0.0
        work -= np.outer(factors, work[col])
        inv -= np.outer(factors, inv[col])
    return inv


def inf_norm(a):
    """Maximum absolute row sum."""
    a = np.atleast_2d(np.asarray(a))
    if a.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(a), axis=1)))


def spectral_radius(a):
    """Largest eigenvalue modulus of a square matrix."""
    a = _as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got {a.shape}")
    if a.shape[0] == 0:
        return 0.0
    eig = np.linalg.eigvals(a)
    return float(np.max(np.abs(eig)))


@dataclass(frozen=True)
class LinearOperator:
    """Matrix-free linear map on vectors of length ``dimension``."""

    dimension: int
    apply: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        return self.apply(x)

    @classmethod
    def from_matrix(cls, a):
        a = np.asarray(a)
        return cls(a.shape[0], lambda x: a @ x)


@dataclass(frozen=True)
class GmresConfig:
    tolerance: float = 1e-5
    restart: int = 10
    max_iters: int = 10000

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("GMRES tolerance must be positive")
        if self.restart < 1:
            raise ValueError("GMRES restart length must be >= 1")
        if self.max_iters < 1:
            raise ValueError("GMRES max_iters must be >= 1")


@dataclass
class GmresResult:
    solution: np.ndarray
    iterations: int
    residual: float  # relative, measured from an explicit op application
    converged: bool

    def __iter__(self):
        # allows ``x, its = gmres_solve(...)``
        yield self.solution
        yield self.iterations


def _givens(a, b):
    """Return (c, s) with [[c, s], [-conj(s), c]] @ [a, b] = [r, 0], c real."""
    if b == 0:
        return 1.0, 0.0
    if a == 0:
        return 0.0, np.conj(b) / abs(b)
    aa = abs(a)
    nrm = np.hypot(aa, abs(b))
    c = aa / nrm
    s = (a / aa) * np.conj(b) / nrm
    return c, s


def gmres_solve(op, rhs, x0=None, cfg=GmresConfig()):
    """Restarted GMRES(m) with modified Gram-Schmidt plus one re-orthogonalisation.

    Stops once ``||rhs - op(x)|| <= cfg.tolerance * ||rhs||``. The returned
    iteration count includes every Arnoldi step over all restart cycles.
    Raises :class:`GmresBreakdown` if the Krylov space becomes invariant
    without reaching the tolerance (only possible for singular operators).
    """
    rhs = np.asarray(rhs)
    n = rhs.shape[0]
    if op.dimension != n:
        raise ValueError(f"operator dimension {op.dimension} != len(rhs) {n}")
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=np.result_type(rhs, x0))
    if x.shape != rhs.shape:
        raise ValueError("x0 and rhs have different shapes")
    dtype = np.result_type(x.dtype, rhs.dtype, np.float64)
    x = x.astype(dtype, copy=False)

    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return GmresResult(np.zeros_like(x), 0, 0.0, True)
    target = cfg.tolerance * bnorm

    r = rhs - op(x)
    rnorm = np.linalg.norm(r)
    iters = 0
    m = cfg.restart
    while rnorm > target and iters < cfg.max_iters:
        V = np.zeros((m + 1, n), dtype=dtype)
        H = np.zeros((m + 1, m), dtype=dtype)
        cs = np.zeros(m)
        sn = np.zeros(m, dtype=dtype)
        g = np.zeros(m + 1, dtype=dtype)
        g[0] = rnorm
        V[0] = r / rnorm
        j_done = 0
        breakdown = False
        for j in range(m):
            w = op(V[j])
            iters += 1
            for _ in range(2):
                for i in range(j + 1):
                    h = np.vdot(V[i], w)
                    H[i, j] += h
                    w = w - h * V[i]
            hn = np.linalg.norm(w)
            H[j + 1, j] = hn
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -np.conj(sn[i]) * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            c, s = _givens(H[j, j], H[j + 1, j])
            cs[j], sn[j] = c, s
            H[j, j] = c * H[j, j] + s * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -np.conj(s) * g[j]
            g[j] = c * g[j]
            j_done = j + 1
            if abs(g[j + 1]) <= target or iters >= cfg.max_iters:
                break
            if hn <= 1e-14 * max(abs(H[j, j]), 1.0):
                breakdown = True
                break
            V[j + 1] = w / hn

        diag = np.abs(np.diagonal(H)[:j_done])
        if np.any(diag <= 1e-14 * max(float(diag.max()), 1e-300)):
            raise GmresBreakdown(f"singular Hessenberg system after {iters} iterations")
        y = np.zeros(j_done, dtype=dtype)
        for i in range(j_done - 1, -1, -1):
            y[i] = (g[i] - H[i, i + 1:j_done] @ y[i + 1:]) / H[i, i]
        x = x + y @ V[:j_done]
        r = rhs - op(x)
        rnorm = np.linalg.norm(r)
        if breakdown and rnorm > target:
            raise GmresBreakdown(
                f"Arnoldi breakdown after {iters} iterations, "
                f"relative residual {rnorm / bnorm:.3e}"
            )

    return GmresResult(x, iters, float(rnorm / bnorm), bool(rnorm <= target))
