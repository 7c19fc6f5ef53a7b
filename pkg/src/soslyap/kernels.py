"""Semi-separable kernel operators parameterized by Gram matrices.

An operator here is a triple (M, K1, K2) of polynomials acting on
functions over [0, 1] by

    (P w)(x) = M(x) w(x) + int_0^x K1(x, y) w(y) dy + int_x^1 K2(x, y) w(y) dy.

The positive cone used throughout the package is parameterized by a single
symmetric Gram matrix U split into blocks against the monomial vectors
Z1(x) (univariate, degree <= d1) and Z2(x, y) (bivariate, total degree
<= d2):

    M(x)     = Z1(x)' U11 Z1(x)
    K1(x, y) = Z1(x)' U12 Z2(x, y) + Z2(y, x)' U31 Z1(y)
               + int_0^y Z2(t, x)' U33 Z2(t, y) dt
               + int_y^x Z2(t, x)' U32 Z2(t, y) dt
               + int_x^1 Z2(t, x)' U22 Z2(t, y) dt
    K2(x, y) = Z1(x)' U13 Z2(x, y) + Z2(y, x)' U21 Z1(y)
               + int_0^x Z2(t, x)' U33 Z2(t, y) dt
               + int_x^y Z2(t, x)' U23 Z2(t, y) dt
               + int_y^1 Z2(t, x)' U22 Z2(t, y) dt

If U - diag(eps*I, 0, 0) is positive semidefinite the induced operator
satisfies <P w, w> >= eps ||w||^2, since the quadratic form equals
int v' U v with v = (Z1 w, int_0^x Z2 w, int_x^1 Z2 w) and |Z1(x)|^2 >= 1.
K1 and K2 are adjoint halves of one kernel: K1(x, y) = K2(y, x).

Gram entries may be floats (a concrete certificate) or affine expressions
in decision variables (while compiling a feasibility problem); the same
construction code serves both.

Discretization uses composite Simpson rules on a uniform grid.  For
self-adjoint triples the collocation matrix is weight-symmetrized so the
discrete quadratic form w' W A w is exactly symmetric; this keeps Lyapunov
evaluations and inverse iterations well behaved without changing the
fourth-order accuracy of the rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .affine import LinExpr
from .polynomials import Coeff, MonomialBasis, Poly

DEFAULT_GRID_SIZE = 257


class MNotPositive(ValueError):
    """Multiplier M vanishes or goes negative on [0, 1]."""


class SeriesDiverging(RuntimeError):
    """Neumann iteration residual grew for three consecutive terms."""


def gram_block_sizes(d1: int, d2: int) -> tuple[int, int, int]:
    """(n1, n2, n): sizes of Z1, Z2 and the full Gram matrix n1 + 2*n2."""
    n1 = d1 + 1
    n2 = (d2 + 1) * (d2 + 2) // 2
    return n1, n2, n1 + 2 * n2


def z2_exponents(d2: int) -> list[tuple[int, int]]:
    """Exponent pairs of the bivariate monomial vector, graded lex order."""
    return list(MonomialBasis(("s1", "s2"), d2).exponents)


@dataclass(frozen=True)
class KernelTriple:
    """Multiplier M(x) plus lower kernel K1(x, y) and upper kernel K2(x, y)."""

    m: Poly
    k1: Poly
    k2: Poly
    d1: int
    d2: int
    epsilon: float

    def is_self_adjoint(self, tol: float = 1e-12) -> bool:
        swap = self.k2.rename({"x": "y", "y": "x"})
        return (self.k1 - swap).approx_zero(tol * max(1.0, self.k1.max_abs_coeff()))

    def is_numeric(self) -> bool:
        polys = (self.m, self.k1, self.k2)
        return all(
            isinstance(c, (int, float)) for p in polys for c in p.terms.values()
        )

    def instantiate(self, values) -> "KernelTriple":
        """Resolve affine coefficients against solved variable values."""

        def resolve(c: Coeff) -> float:
            return c.instantiate(values) if isinstance(c, LinExpr) else float(c)

        return KernelTriple(
            self.m.map_coeffs(resolve),
            self.k1.map_coeffs(resolve),
            self.k2.map_coeffs(resolve),
            self.d1,
            self.d2,
            self.epsilon,
        )


@dataclass(frozen=True)
class GramCertificate:
    """Numeric Gram matrix witnessing membership of a triple in the cone."""

    u: np.ndarray
    d1: int
    d2: int
    epsilon: float

    def __post_init__(self) -> None:
        _, _, n = gram_block_sizes(self.d1, self.d2)
        if self.u.shape != (n, n):
            raise ValueError(f"Gram matrix must be {n}x{n}, got {self.u.shape}")
        if not np.allclose(self.u, self.u.T, atol=1e-12):
            raise ValueError("Gram matrix must be symmetric")

    def shift_diagonal(self) -> np.ndarray:
        n1, _, n = gram_block_sizes(self.d1, self.d2)
        d = np.zeros(n)
        d[:n1] = self.epsilon
        return d

    def min_shifted_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.u - np.diag(self.shift_diagonal()))[0])


def _merge(acc: dict, key: tuple[int, int], contribs: list) -> None:
    acc.setdefault(key, []).append(contribs)


def _finalize(parts: list) -> Coeff:
    """Sum (scale, entry) contribution pairs without quadratic LinExpr churn."""
    const = 0.0
    lin: dict[int, float] = {}
    for scale, entry in parts:
        if isinstance(entry, LinExpr):
            const += scale * entry.const
            for k, v in entry.coeffs.items():
                lin[k] = lin.get(k, 0.0) + scale * v
        else:
            const += scale * entry
    if lin:
        return LinExpr(lin, const)
    return const


def triple_from_gram(
    entry: Callable[[int, int], Coeff],
    d1: int,
    d2: int,
    epsilon: float,
    weight: Poly | None = None,
) -> KernelTriple:
    """Build (M, K1, K2) from a symmetric Gram entry accessor.

    ``entry(i, j)`` must return the (i, j) element of the full Gram matrix;
    it is the caller's responsibility that entry(i, j) == entry(j, i).

    ``weight`` is an optional univariate window g >= 0 on [0, 1]; the
    induced quadratic functional is then int_0^1 g(t) v(t)' U v(t) dt, so
    the multiplier and cross terms pick up g at their pointwise argument
    and the segment integrals carry g inside.  Positive-on-an-interval
    certificates combine one unweighted piece with one weighted by x(1-x).
    """
    n1, n2, _ = gram_block_sizes(d1, d2)
    z2 = z2_exponents(d2)
    o2, o3 = n1, n1 + n2  # block offsets: Z1 | lower part | upper part
    if weight is None:
        wterms = [(0, 1.0)]
    else:
        if weight.vars not in ((), ("x",)):
            raise ValueError("weight must be univariate in x")
        wterms = [(ex[0] if ex else 0, float(c)) for ex, c in weight.terms.items()]

    # M(x) = g(x) Z1' U11 Z1
    m_acc: dict[tuple[int, int], list] = {}
    for i in range(n1):
        for j in range(n1):
            e = entry(i, j)
            for r, g in wterms:
                _merge(m_acc, (i + j + r, 0), (g, e))

    k1_acc: dict[tuple[int, int], list] = {}
    k2_acc: dict[tuple[int, int], list] = {}

    # Cross terms between Z1 w and the two partial integrals; the weight
    # rides on the Z1 argument (the outer integration variable).
    for i in range(n1):
        for a, (p, q) in enumerate(z2):
            e12 = entry(i, o2 + a)
            e13 = entry(i, o3 + a)
            for r, g in wterms:
                # K1: g(x) Z1(x)' U12 Z2(x,y)   and   g(y) Z2(y,x)' U31 Z1(y)
                _merge(k1_acc, (i + p + r, q), (g, e12))
                _merge(k1_acc, (q, i + p + r), (g, e13))
                # K2: g(x) Z1(x)' U13 Z2(x,y)   and   g(y) Z2(y,x)' U21 Z1(y)
                _merge(k2_acc, (i + p + r, q), (g, e13))
                _merge(k2_acc, (q, i + p + r), (g, e12))

    # Integral terms: products g(t) Z2(t,x)' U Z2(t,y) integrated in t over
    # the segments [0,y], [y,x], [x,1] for K1 and [0,x], [x,y], [y,1] for K2.
    for a, (p1, q1) in enumerate(z2):
        for b, (p2, q2) in enumerate(z2):
            e22 = entry(o2 + a, o2 + b)
            e23 = entry(o2 + a, o3 + b)
            e32 = entry(o3 + a, o2 + b)
            e33 = entry(o3 + a, o3 + b)
            for r, g in wterms:
                pp = p1 + p2 + r + 1
                inv = g / pp
                # K1 += U33 * int_0^y : y^pp / pp
                _merge(k1_acc, (q1, q2 + pp), (inv, e33))
                # K1 += U32 * int_y^x : (x^pp - y^pp) / pp
                _merge(k1_acc, (q1 + pp, q2), (inv, e32))
                _merge(k1_acc, (q1, q2 + pp), (-inv, e32))
                # K1 += U22 * int_x^1 : (1 - x^pp) / pp
                _merge(k1_acc, (q1, q2), (inv, e22))
                _merge(k1_acc, (q1 + pp, q2), (-inv, e22))
                # K2 += U33 * int_0^x : x^pp / pp
                _merge(k2_acc, (q1 + pp, q2), (inv, e33))
                # K2 += U23 * int_x^y : (y^pp - x^pp) / pp
                _merge(k2_acc, (q1, q2 + pp), (inv, e23))
                _merge(k2_acc, (q1 + pp, q2), (-inv, e23))
                # K2 += U22 * int_y^1 : (1 - y^pp) / pp
                _merge(k2_acc, (q1, q2), (inv, e22))
                _merge(k2_acc, (q1, q2 + pp), (-inv, e22))

    def collapse(acc: dict, univariate: bool) -> Poly:
        terms = {}
        for (ex, ey), parts in acc.items():
            c = _finalize(parts)
            terms[(ex,) if univariate else (ex, ey)] = c
        return Poly(("x",) if univariate else ("x", "y"), terms)

    m = collapse(m_acc, univariate=True)
    return KernelTriple(m, collapse(k1_acc, False), collapse(k2_acc, False), d1, d2, epsilon)


def build_from_gram(cert: GramCertificate) -> KernelTriple:
    """Numeric triple induced by a Gram certificate."""
    u = cert.u
    return triple_from_gram(lambda i, j: float(u[i, j]), cert.d1, cert.d2, cert.epsilon)


def identity_triple(epsilon: float = 1.0) -> KernelTriple:
    return KernelTriple(
        Poly.constant(1.0), Poly.zero(), Poly.zero(), 0, 0, epsilon
    )


# ----------------------------------------------------------------------
# quadrature and discretization
# ----------------------------------------------------------------------


def uniform_grid(n: int) -> np.ndarray:
    if n < 3 or n % 2 == 0:
        raise ValueError("grid size must be odd and >= 3 for Simpson rules")
    return np.linspace(0.0, 1.0, n)


def simpson_weights(n: int) -> np.ndarray:
    """Composite Simpson weights over the full interval, n odd."""
    h = 1.0 / (n - 1)
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def _prefix_weight_rows(n: int) -> np.ndarray:
    """Row i holds quadrature weights for int_0^{x_i} on nodes 0..n-1.

    Even rows use composite Simpson; odd rows >= 3 close with a 3/8 panel;
    row 1 integrates the quadratic through nodes 0, 1, 2 over the first
    subinterval.  All rows are fourth order.
    """
    h = 1.0 / (n - 1)
    rows = np.zeros((n, n))
    for i in range(1, n):
        if i == 1:
            rows[1, :3] = np.array([5.0, 8.0, -1.0]) * (h / 12.0)
        elif i % 2 == 0:
            w = np.ones(i + 1)
            w[1:-1:2] = 4.0
            w[2:-1:2] = 2.0
            rows[i, : i + 1] = w * (h / 3.0)
        else:
            head = i - 3
            if head:
                w = np.ones(head + 1)
                w[1:-1:2] = 4.0
                w[2:-1:2] = 2.0
                rows[i, : head + 1] = w * (h / 3.0)
            rows[i, head : i + 1] += np.array([1.0, 3.0, 3.0, 1.0]) * (3.0 * h / 8.0)
    return rows


@dataclass
class DiscreteOperator:
    """Collocation matrix for a kernel triple on a uniform grid."""

    grid: np.ndarray
    weights: np.ndarray
    matrix: np.ndarray
    residual: float | None = None
    series_terms: int | None = None

    def apply(self, w: np.ndarray) -> np.ndarray:
        return self.matrix @ w

    def quadratic_form(self, w: np.ndarray) -> float:
        """Quadrature approximation of <P w, w>."""
        return float(w @ (self.weights * (self.matrix @ w)))

    def inner(self, v: np.ndarray, w: np.ndarray) -> float:
        return float(v @ (self.weights * w))

    def norm(self, w: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(w, w), 0.0)))


def discretize(tri: KernelTriple, n: int = DEFAULT_GRID_SIZE) -> DiscreteOperator:
    if not tri.is_numeric():
        raise TypeError("cannot discretize a triple with unresolved coefficients")
    grid = uniform_grid(n)
    weights = simpson_weights(n)
    x = grid[:, None]
    y = grid[None, :]
    low = _prefix_weight_rows(n)
    upp = low[::-1, ::-1].copy()  # mirror: int_{x_i}^1 == int_0^{1-x_i} reversed
    a = np.diag(tri.m.eval_grid({"x": grid}) * np.ones_like(grid))
    if not tri.k1.is_zero():
        a = a + tri.k1.eval_grid({"x": x, "y": y}) * low
    if not tri.k2.is_zero():
        a = a + tri.k2.eval_grid({"x": x, "y": y}) * upp
    if tri.is_self_adjoint():
        # exact weight symmetry: W A = A' W
        a = 0.5 * (a + (a.T * weights[:, None]) / weights[None, :])
    return DiscreteOperator(grid, weights, a)


def apply_triple(
    tri: KernelTriple, samples: np.ndarray, n: int | None = None
) -> np.ndarray:
    op = discretize(tri, n if n is not None else len(samples))
    if len(samples) != len(op.grid):
        raise ValueError("sample count must match grid size")
    return op.apply(samples)


def apply_to_poly(tri: KernelTriple, w: Poly) -> Poly:
    """Exact image P w for polynomial input; w must be univariate in x."""
    if any(v != "x" for v in w.vars):
        raise ValueError("input must be a polynomial in x")
    wy = w.rename({"x": "y"})
    x = Poly.variable("x")
    out = tri.m * w
    out = out + (tri.k1 * wy).integrate("y", 0.0, x)
    out = out + (tri.k2 * wy).integrate("y", x, 1.0)
    return out


def quadratic_form_poly(tri: KernelTriple, w: Poly) -> float:
    """Exact <P w, w> for polynomial input."""
    val = (apply_to_poly(tri, w) * w).integrate("x", 0.0, 1.0)
    return float(val.coefficient((), ()))


# ----------------------------------------------------------------------
# Neumann-series inversion
# ----------------------------------------------------------------------

DEFAULT_PROBES: tuple[Callable[[np.ndarray], np.ndarray], ...] = (
    lambda x: np.sin(np.pi * x),
    lambda x: np.sin(5.0 * np.pi * x) / (x + 1.0),
    lambda x: x * x * (1.0 - x),
    lambda x: np.cos(2.0 * np.pi * x),
)


@dataclass(frozen=True)
class InversePreconditions:
    """Advisory report on the sufficient conditions for series convergence."""

    m_min: float
    kernel_bound: float
    epsilon: float

    @property
    def m_positive(self) -> bool:
        return self.m_min > 0.0

    @property
    def kernels_below_epsilon(self) -> bool:
        return self.kernel_bound < self.epsilon

    @property
    def all_satisfied(self) -> bool:
        return self.m_positive and self.kernels_below_epsilon


def check_inverse_preconditions(
    tri: KernelTriple, samples: int = 101
) -> InversePreconditions:
    """Sample the sufficient (and conservative) convergence conditions."""
    xs = np.linspace(0.0, 1.0, 10 * samples + 1)
    m_min = float(tri.m.eval_grid({"x": xs}).min())
    g = np.linspace(0.0, 1.0, samples)
    xx = g[:, None] * np.ones((1, samples))
    yy = np.ones((samples, 1)) * g[None, :]
    bound = 0.0
    for k in (tri.k1, tri.k2):
        if not k.is_zero():
            bound = max(bound, float(np.abs(k.eval_grid({"x": xx, "y": yy})).max()))
    return InversePreconditions(m_min, bound, tri.epsilon)


def neumann_inverse(
    tri: KernelTriple,
    order: int = 10,
    tol: float = 0.0,
    n: int = DEFAULT_GRID_SIZE,
    return_history: bool = False,
):
    """Approximate inverse of the discretized operator by a Neumann series.

    Splits P = T + S with T the multiplier part; the inverse is accumulated
    as sum_k (-T^{-1} S)^k T^{-1} up to ``order`` terms, stopping early once
    the probe residual ||P P_K^{-1} w - w|| / ||w|| drops below ``tol``.
    """
    op = discretize(tri, n)
    m_vals = tri.m.eval_grid({"x": op.grid}) * np.ones_like(op.grid)
    if m_vals.min() <= 0.0:
        raise MNotPositive(f"min M on grid = {m_vals.min():.3e}")
    t_inv = 1.0 / m_vals
    s = op.matrix - np.diag(m_vals)

    probes = np.stack([p(op.grid) for p in DEFAULT_PROBES], axis=1)
    probe_norms = np.array([op.norm(probes[:, j]) for j in range(probes.shape[1])])

    def residual_of(b: np.ndarray) -> float:
        r = op.matrix @ (b @ probes) - probes
        vals = [op.norm(r[:, j]) / probe_norms[j] for j in range(probes.shape[1])]
        return float(max(vals))

    b = np.diag(t_inv)
    term = b.copy()
    history = [residual_of(b)]
    step = -(t_inv[:, None] * s)
    increases = 0
    used = 0
    for k in range(1, order + 1):
        term = step @ term
        b = b + term
        used = k
        history.append(residual_of(b))
        if history[-1] > history[-2]:
            increases += 1
            if increases >= 3:
                raise SeriesDiverging(
                    f"residual rose for 3 consecutive terms (last {history[-1]:.3e})"
                )
        else:
            increases = 0
        if tol > 0.0 and history[-1] <= tol:
            break
    inv = DiscreteOperator(op.grid, op.weights, b, residual=history[-1], series_terms=used)
    if return_history:
        return inv, history
    return inv


def inversion_demo_certificate() -> GramCertificate:
    """A concrete member of the degree-(2, 2) cone with margin eps = 2.

    Built so the conservative convergence conditions hold with room to
    spare: the multiplier stays above 2.5 while both kernels remain well
    below the margin, giving a contraction factor around 0.15.
    """
    n1, n2, n = gram_block_sizes(2, 2)
    u = np.zeros((n, n))
    u[:n1, :n1] = 2.5 * np.eye(n1)
    u[n1 : n1 + n2, n1 : n1 + n2] = 0.02 * np.eye(n2)
    u[n1 + n2 :, n1 + n2 :] = 0.02 * np.eye(n2)
    u[:n1, n1 : n1 + n2] = 0.005
    u[:n1, n1 + n2 :] = -0.005
    u = 0.5 * (u + u.T)
    return GramCertificate(u, 2, 2, 2.0)
