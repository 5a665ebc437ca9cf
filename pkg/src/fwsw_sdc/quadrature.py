"""Collocation nodes and the quadrature matrices used by the SDC sweeps.

All matrices are stored divided by the step length, so ``Q[m, j]`` is
``(1/dt) * int_{t_start}^{tau_m} l_j(s) ds`` and is independent of ``dt``.
"""
import enum
import math
from dataclasses import dataclass

import numpy as np


class NodeFamily(enum.Enum):
    RADAU_RIGHT = "radau"
    LOBATTO = "lobatto"
    LEGENDRE = "legendre"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(f.value for f in cls)
            raise ValueError(f"unknown node family {value!r} (expected one of {names})") from None

    def exactness_degree(self, M):
        """Highest monomial degree the end-point weights integrate exactly."""
        return {NodeFamily.RADAU_RIGHT: 2 * M - 2,
                NodeFamily.LOBATTO: 2 * M - 3,
                NodeFamily.LEGENDRE: 2 * M - 1}[self]


def legendre(n, x):
    """Return ``(P_n(x), P_n'(x))`` via the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    p_prev = np.ones_like(x)
    if n == 0:
        return p_prev, np.zeros_like(x)
    p = x.copy()
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    # derivative from (x^2 - 1) P_n' = n (x P_n - P_{n-1}); endpoints separately
    with np.errstate(divide="ignore", invalid="ignore"):
        dp = n * (x * p - p_prev) / (x * x - 1.0)
    ends = np.abs(x) == 1.0
    if np.any(ends):
        dp = np.where(ends, np.sign(x) ** (n + 1) * n * (n + 1) / 2.0, dp)
    return p, dp


def _legendre_second_derivative(n, x):
    p, dp = legendre(n, x)
    return (2.0 * x * dp - n * (n + 1) * p) / (1.0 - x * x)


def _interior_roots(func, count, tol=1e-15):
    """All ``count`` simple roots of ``func`` in (-1, 1).

    Brackets by sign changes on a Chebyshev-clustered grid, then runs a
    Newton iteration safeguarded by bisection.
    """
    if count == 0:
        return np.empty(0)
    samples = max(200, 40 * count)
    grid = -np.cos(np.linspace(0.0, np.pi, samples + 1))[1:-1]
    vals, _ = func(grid)
    brackets = []
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            brackets.append((grid[i], grid[i]))
        elif vals[i] * vals[i + 1] < 0.0:
            brackets.append((grid[i], grid[i + 1]))
    if len(brackets) != count:
        raise ArithmeticError(f"found {len(brackets)} root brackets, expected {count}")

    lo = np.array([b[0] for b in brackets])
    hi = np.array([b[1] for b in brackets])
    flo = func(lo)[0]
    x = 0.5 * (lo + hi)
    active = lo != hi
    x[~active] = lo[~active]
    # Newton on all brackets at once, falling back to bisection outside them
    for _ in range(200):
        if not active.any():
            break
        fx, dfx = func(x[active])
        idx = np.flatnonzero(active)
        exact = fx == 0.0
        same = (fx < 0.0) == (flo[idx] < 0.0)
        lo[idx[same]] = x[idx[same]]
        flo[idx[same]] = fx[same]
        hi[idx[~same]] = x[idx[~same]]
        with np.errstate(divide="ignore", invalid="ignore"):
            x_new = x[idx] - fx / dfx
        outside = ~((lo[idx] < x_new) & (x_new < hi[idx]))
        x_new[outside] = 0.5 * (lo[idx] + hi[idx])[outside]
        done = exact | (np.abs(x_new - x[idx]) <= tol * np.maximum(1.0, np.abs(x[idx])))
        done |= hi[idx] - lo[idx] <= tol
        x[idx[~exact]] = x_new[~exact]
        active[idx[done]] = False
    return np.sort(x)


def reference_nodes(family, M):
    """Nodes of the requested family on [-1, 1]."""
    family = NodeFamily.parse(family)
    if M < 1:
        raise ValueError("need at least one node")
    if family is NodeFamily.LEGENDRE:
        return _interior_roots(lambda x: legendre(M, x), M)
    if family is NodeFamily.RADAU_RIGHT:
        # P_M - P_{M-1} vanishes at x = 1; the other M-1 roots are interior
        def f(x):
            p1, d1 = legendre(M, x)
            p0, d0 = legendre(M - 1, x)
            return p1 - p0, d1 - d0

        return np.append(_interior_roots(f, M - 1), 1.0)
    if M < 2:
        raise ValueError("Gauss-Lobatto nodes need M >= 2")

    def f(x):
        _, d = legendre(M - 1, x)
        return d, _legendre_second_derivative(M - 1, x)

    return np.concatenate(([-1.0], _interior_roots(f, M - 2), [1.0]))


def gauss_legendre(n):
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    x = reference_nodes(NodeFamily.LEGENDRE, n)
    _, dp = legendre(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    return x, w


def make_nodes(family, M, t_start=0.0, t_end=1.0):
    """Collocation nodes of ``family`` mapped affinely onto ``[t_start, t_end]``."""
    if not t_end > t_start:
        raise ValueError("t_end must exceed t_start")
    x = reference_nodes(family, M)
    nodes = t_start + 0.5 * (x + 1.0) * (t_end - t_start)
    # pin endpoints exactly
    nodes[np.isclose(x, 1.0, rtol=0, atol=1e-15)] = t_end
    nodes[np.isclose(x, -1.0, rtol=0, atol=1e-15)] = t_start
    return nodes


def lagrange_basis(nodes, x):
    """Matrix ``B[i, j] = l_j(x_i)`` of the Lagrange basis on ``nodes``."""
    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    M = len(nodes)
    eye = np.eye(M, dtype=bool)
    denom = np.where(eye, 1.0, nodes[:, None] - nodes[None, :])
    factors = np.where(eye, 1.0, (x[:, None, None] - nodes[None, None, :]) / denom)
    return np.prod(factors, axis=2)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    family: NodeFamily
    M: int
    t_start: float
    t_end: float
    taus: np.ndarray
    dtau: np.ndarray
    Q: np.ndarray
    S: np.ndarray
    Qfast: np.ndarray
    Qslow: np.ndarray
    q_end: np.ndarray

    @property
    def dt(self):
        return self.t_end - self.t_start

    @property
    def right_endpoint_is_node(self):
        return abs(self.taus[-1] - self.t_end) <= 1e-14 * max(1.0, abs(self.t_end))

    @property
    def nodes_unit(self):
        """Node positions mapped to [0, 1]."""
        return (self.taus - self.t_start) / self.dt


def make_rule(family=NodeFamily.RADAU_RIGHT, M=3, t_start=0.0, t_end=1.0):
    """Build nodes, integration matrices and end-point weights for one step.

    The Lagrange integrals have polynomial integrands of degree ``M - 1`` and
    are evaluated exactly with an embedded Gauss-Legendre rule.
    """
    family = NodeFamily.parse(family)
    taus = make_nodes(family, M, t_start, t_end)
    dt = t_end - t_start
    c = (taus - t_start) / dt  # nodes on [0, 1]

    gx, gw = gauss_legendre(math.ceil(M / 2) + 1)
    Q = np.zeros((M, M))
    for m in range(M):
        # int_0^{c_m} l_j(s) ds
        s = 0.5 * c[m] * (gx + 1.0)
        Q[m] = 0.5 * c[m] * (gw @ lagrange_basis(c, s))
    s = 0.5 * (gx + 1.0)
    q_end = 0.5 * (gw @ lagrange_basis(c, s))

    S = Q.copy()
    S[1:] -= Q[:-1]

    dtau = np.diff(np.concatenate(([t_start], taus)))
    dtau_unit = dtau / dt
    Qfast = np.tril(np.tile(dtau_unit, (M, 1)))
    # explicit part: the step tau_{j} -> tau_{j+1} uses f_slow(u_j) with weight dtau_{j+1}
    Qslow = np.zeros((M, M))
    for m in range(M):
        Qslow[m, :m] = dtau_unit[1:m + 1]

    for arr in (taus, dtau, Q, S, Qfast, Qslow, q_end):
        arr.setflags(write=False)
    return QuadratureRule(family, M, float(t_start), float(t_end), taus, dtau,
                          Q, S, Qfast, Qslow, q_end)


def lebesgue_constant(rule, samples=201, refinements=5):
    """Lebesgue constant of the rule's nodes on [-1, 1].

    Between neighbouring nodes every basis polynomial keeps its sign, so the
    Lebesgue function is a smooth polynomial there. Each such interval is
    sampled and the best sample is refined on successively finer local grids.
    """
    x_nodes = 2.0 * rule.nodes_unit - 1.0
    edges = np.unique(np.concatenate(([-1.0], x_nodes, [1.0])))
    best = 1.0  # value at any node
    for a, b in zip(edges[:-1], edges[1:]):
        lo, hi = a, b
        for _ in range(refinements + 1):
            x = np.linspace(lo, hi, samples)
            vals = np.sum(np.abs(lagrange_basis(x_nodes, x)), axis=1)
            i = int(np.argmax(vals))
            best = max(best, float(vals[i]))
            h = x[1] - x[0]
            lo, hi = max(a, x[i] - h), min(b, x[i] + h)
    return best
