"""Scalar parabolic PDE models on the unit interval.

The class of plants handled throughout:

    w_t = a(x) w_xx + b(x) w_x + c(x) w,      x in (0, 1)

with polynomial coefficients, under one of two boundary configurations:

* ``mixed``: w(0) = 0 and an actuated/measured Neumann end w_x(1) = u(t)
  (u = 0 for open-loop analysis);
* ``dirichlet``: w(0) = w(1) = 0.

``alpha`` is a certified uniform lower bound on the diffusion coefficient;
when not supplied it is computed exactly from the critical points of a.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .polynomials import Poly

Boundary = Literal["mixed", "dirichlet"]


class InvalidSystem(ValueError):
    """Coefficients violate the standing assumptions (e.g. a not positive)."""


def _exact_min_on_unit_interval(p: Poly) -> float:
    """Minimum of a univariate polynomial over [0, 1] via critical points."""
    deg = p.total_degree()
    if deg <= 0:
        return float(p.coefficient((), ()))
    coeffs_desc = [float(p.coefficient(("x",), (k,))) for k in range(deg, -1, -1)]
    dcoeffs = np.polyder(np.array(coeffs_desc))
    candidates = [0.0, 1.0]
    if len(dcoeffs):
        for r in np.roots(dcoeffs):
            if abs(r.imag) < 1e-10 and -1e-12 <= r.real <= 1.0 + 1e-12:
                candidates.append(min(max(float(r.real), 0.0), 1.0))
    return min(float(p.evaluate({"x": t})) for t in candidates)


def _as_poly(p) -> Poly:
    if isinstance(p, Poly):
        return p
    if np.isscalar(p):
        return Poly.constant(float(p))
    return Poly.from_coeffs("x", [float(v) for v in p])


@dataclass(frozen=True)
class PdeSystem:
    """Parabolic plant with polynomial coefficients a, b, c in x."""

    a: Poly
    b: Poly
    c: Poly
    bc: Boundary = "mixed"
    alpha: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        for name in ("a", "b", "c"):
            p = _as_poly(getattr(self, name))
            if any(v != "x" for v in p.vars):
                raise InvalidSystem(f"coefficient {name} must be univariate in x")
            object.__setattr__(self, name, p)
        if self.bc not in ("mixed", "dirichlet"):
            raise InvalidSystem(f"unknown boundary configuration {self.bc!r}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", _exact_min_on_unit_interval(self.a))
        if self.alpha <= 0.0:
            raise InvalidSystem(
                f"diffusion must be uniformly positive; min a = {self.alpha:.6g}"
            )

    def shifted(self, lam: float) -> "PdeSystem":
        """Same plant with reaction coefficient c + lam."""
        return replace(self, c=self.c + float(lam))

    def coeff_lists(self) -> dict[str, list[float]]:
        out = {}
        for name in ("a", "b", "c"):
            p: Poly = getattr(self, name)
            deg = max(p.total_degree(), 0)
            out[name] = [float(p.coefficient(("x",), (k,))) for k in range(deg + 1)]
        return out

    def describe(self) -> str:
        ls = self.coeff_lists()
        return (
            f"a={ls['a']} b={ls['b']} c={ls['c']} bc={self.bc} alpha={self.alpha:.6g}"
        )


def heat_system(lam: float = 0.0, bc: Boundary = "mixed") -> PdeSystem:
    """Constant-coefficient reaction-diffusion plant a=1, b=0, c=lam."""
    return PdeSystem(Poly.constant(1.0), Poly.zero(), Poly.constant(float(lam)), bc)


def cubic_diffusion_system(lam: float = 0.0, bc: Boundary = "mixed") -> PdeSystem:
    """Variable-coefficient benchmark plant with cubic diffusion profile.

    a = x^3 - x^2 + 2, b = 3x^2 - 2x, c = -0.5x^3 + 1.3x^2 - 1.5x + 0.7 + lam.
    """
    a = Poly.from_coeffs("x", [2.0, 0.0, -1.0, 1.0])
    b = Poly.from_coeffs("x", [0.0, -2.0, 3.0])
    c = Poly.from_coeffs("x", [0.7 + float(lam), -1.5, 1.3, -0.5])
    return PdeSystem(a, b, c, bc)
