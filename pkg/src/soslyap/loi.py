"""Images of a kernel triple under the Lyapunov operator inequalities.

For the plant A w = a w_xx + b w_x + c w and a self-adjoint operator P
given by a triple (M, K1, K2), integration by parts turns the bilinear
quantity <A w, P w> + <w, P A w> into a boundary-plus-bulk quadratic form.
The two maps below tabulate that form's coefficients; both are linear in
the triple, so they accept affine-coefficient triples while compiling
feasibility problems as well as numeric ones.

``m_eps_map`` treats the primal quantity d/dt <w, P w> along solutions;
``n_eps_map`` is its dual counterpart for d/dt <v, P^{-1} v> used by
boundary feedback synthesis.  In both, the diffusion term -2 int a M w_x^2
is relaxed through a Poincare inequality with the sharp constant ``mu`` of
the boundary class (pi^2/4 when only w(0) = 0 is available, pi^2 when both
ends are pinned), which is where the -2 mu alpha eps corrections originate.

Sign convention: along classical solutions with the boundary terms
cancelled, d/dt <w, Pw> <= q0_11 w(1)^2 + 2 w(1) int q0_12 w
+ int q0_22 w^2 + int int_0^x q1 w w + int int_x^1 q2 w w
+ w_x(0) int q3 w, and analogously for the dual tuple.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .kernels import KernelTriple
from .polynomials import Coeff, Poly
from .systems import PdeSystem

MU_LEFT_PINNED = math.pi**2 / 4.0
MU_BOTH_PINNED = math.pi**2


def poincare_constant(bc: str) -> float:
    return MU_BOTH_PINNED if bc == "dirichlet" else MU_LEFT_PINNED


@dataclass(frozen=True)
class QTuple:
    """Primal image: boundary scalars q0_11, terminal-trace kernel q0_12,
    bulk density q0_22, interaction kernels q1/q2, and the w_x(0) trace q3."""

    q0_11: Coeff
    q0_12: Poly
    q0_22: Poly
    q1: Poly
    q2: Poly
    q3: Poly


@dataclass(frozen=True)
class TTuple:
    """Dual image; t3 and t4 weight w(0)^2 and w(0) w_x(0)."""

    t0_11: Coeff
    t0_12: Poly
    t0_22: Poly
    t1: Poly
    t2: Poly
    t3: Coeff
    t4: Coeff


def _at(p: Poly, x0: float) -> Coeff:
    return p.evaluate({"x": x0}) if p.vars else p.coefficient((), ())


def _trace_first_arg(k: Poly, x0: float) -> Poly:
    """k(x0, s) as a polynomial in x."""
    return k.partial_eval({"x": x0}).rename({"y": "x"})


def m_eps_map(
    tri: KernelTriple, sys: PdeSystem, eps: float, mu: float | None = None
) -> QTuple:
    """Primal Lyapunov image of a triple for the given plant.

    ``mu`` defaults to the sharp Poincare constant of the plant's boundary
    class; ``eps`` is the coercivity margin of the triple being tested.
    """
    if mu is None:
        mu = poincare_constant(sys.bc)
    a, b, c = sys.a, sys.b, sys.c
    m, k1, k2 = tri.m, tri.k1, tri.k2
    ax = a.differentiate("x")

    a1 = float(_at(a, 1.0))
    ax1 = float(_at(ax, 1.0))
    b1 = float(_at(b, 1.0))
    a0 = float(_at(a, 0.0))

    q0_11 = (b1 - ax1) * _at(m, 1.0) - a1 * _at(m.differentiate("x"), 1.0)
    q0_12 = _trace_first_arg(k1, 1.0) * (b1 - ax1) - _trace_first_arg(
        k1.differentiate("x"), 1.0
    ) * a1

    bulk = ((a * m).differentiate("x") - b * m).differentiate("x") + (m * c) * 2.0
    diag = ((a * (k1 - k2)).differentiate("x") * 2.0).diagonal("y", "x")
    q0_22 = bulk + diag - Poly.constant(2.0 * mu * sys.alpha * eps)

    ay = a.rename({"x": "y"})
    by = b.rename({"x": "y"})
    cy = c.rename({"x": "y"})

    def image_first(k: Poly) -> Poly:
        return ((a * k).differentiate("x") - b * k).differentiate("x") + c * k

    def image_second(k: Poly) -> Poly:
        return ((ay * k).differentiate("y") - by * k).differentiate("y") + cy * k

    q1 = image_first(k1) + image_second(k1)
    q2 = image_first(k2) + image_second(k2)
    q3 = _trace_first_arg(k2, 0.0) * (-2.0 * a0)
    return QTuple(q0_11, q0_12, q0_22, q1, q2, q3)


def n_eps_map(
    tri: KernelTriple, sys: PdeSystem, eps: float, mu: float = MU_LEFT_PINNED
) -> TTuple:
    """Dual Lyapunov image, used by the feedback synthesis route.

    Unlike the primal map, second derivatives act on the kernels directly
    and the plant coefficients multiply from outside; the w(0) traces t3,
    t4 appear because the dual state is not pinned at the left end.
    """
    a, b, c = sys.a, sys.b, sys.c
    m, k1, k2 = tri.m, tri.k1, tri.k2
    ax = a.differentiate("x")
    axx = ax.differentiate("x")
    bx = b.differentiate("x")

    a1 = float(_at(a, 1.0))
    ax1 = float(_at(ax, 1.0))
    b1 = float(_at(b, 1.0))
    a0 = float(_at(a, 0.0))
    ax0 = float(_at(ax, 0.0))
    b0 = float(_at(b, 0.0))

    mx = m.differentiate("x")
    t0_11 = -a1 * _at(mx, 1.0) + (b1 - ax1) * _at(m, 1.0)
    t0_12 = _trace_first_arg(k1.differentiate("x"), 1.0) * (-a1)

    bracket = mx.differentiate("x") + ((k1 - k2).differentiate("x") * 2.0).diagonal(
        "y", "x"
    )
    t0_22 = (
        (axx - bx) * m
        + b * mx
        + (m * c) * 2.0
        + a * bracket
        - Poly.constant(2.0 * mu * sys.alpha * eps)
    )

    ay = a.rename({"x": "y"})
    by = b.rename({"x": "y"})
    cy = c.rename({"x": "y"})

    def image(k: Poly) -> Poly:
        kx = k.differentiate("x")
        ky = k.differentiate("y")
        return (
            a * kx.differentiate("x")
            + b * kx
            + c * k
            + ay * ky.differentiate("y")
            + by * ky
            + cy * k
        )

    t1 = image(k1)
    t2 = image(k2)
    t3 = ax0 * _at(m, 0.0) - a0 * _at(mx, 0.0) - b0 * _at(m, 0.0) + 2.0 * mu * sys.alpha * eps
    t4 = -2.0 * a0 * _at(m, 0.0)
    return TTuple(t0_11, t0_12, t0_22, t1, t2, t3, t4)
