"""Affine expressions in scalar decision variables.

Every operator map in this package is linear in the multiplier/kernel triple,
so compiling a feasibility problem only ever needs scalars of the form
``c0 + sum_i c_i * v_i`` where ``v_i`` are entries of Gram matrix blocks.
:class:`LinExpr` implements exactly that, with the small arithmetic protocol
:mod:`soslyap.polynomials` expects of a coefficient (float add/mul, negation,
``is_negligible``), plus instantiation against a solved variable vector.

Products of two genuinely affine expressions are refused: the maps are
affine by construction, so such a product appearing at runtime is a bug in
the caller, not a modeling feature.
"""

from __future__ import annotations

from typing import Iterator, Mapping, Union

import numpy as np

Scalar = Union[float, "LinExpr"]


class NonAffineProduct(TypeError):
    """Raised on LinExpr * LinExpr with both sides non-constant."""


class LinExpr:
    """Affine combination of decision variables identified by integer ids."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs: Mapping[int, float] | None = None, const: float = 0.0):
        self.coeffs: dict[int, float] = dict(coeffs) if coeffs else {}
        self.const = float(const)

    @staticmethod
    def var(vid: int) -> "LinExpr":
        return LinExpr({vid: 1.0})

    @staticmethod
    def lift(x: Scalar) -> "LinExpr":
        return x if isinstance(x, LinExpr) else LinExpr(const=float(x))

    # -- protocol used by Poly ----------------------------------------

    def is_negligible(self, tol: float) -> bool:
        return abs(self.const) <= tol and all(
            abs(c) <= tol for c in self.coeffs.values()
        )

    def max_abs(self) -> float:
        return max(abs(self.const), *(abs(c) for c in self.coeffs.values()), 0.0)

    def is_constant(self) -> bool:
        return not self.coeffs

    def __add__(self, other: Scalar) -> "LinExpr":
        o = LinExpr.lift(other)
        out = dict(self.coeffs)
        for k, v in o.coeffs.items():
            out[k] = out.get(k, 0.0) + v
        return LinExpr(out, self.const + o.const)

    __radd__ = __add__

    def __neg__(self) -> "LinExpr":
        return LinExpr({k: -v for k, v in self.coeffs.items()}, -self.const)

    def __sub__(self, other: Scalar) -> "LinExpr":
        return self + (-LinExpr.lift(other))

    def __rsub__(self, other: Scalar) -> "LinExpr":
        return (-self) + other

    def __mul__(self, other: Scalar) -> "LinExpr":
        if isinstance(other, LinExpr):
            if other.is_constant():
                other = other.const
            elif self.is_constant():
                return other * self.const
            else:
                raise NonAffineProduct(
                    "product of two non-constant affine expressions"
                )
        f = float(other)
        return LinExpr({k: v * f for k, v in self.coeffs.items()}, self.const * f)

    __rmul__ = __mul__

    def __truediv__(self, other: float) -> "LinExpr":
        return self * (1.0 / float(other))

    def instantiate(self, values: Mapping[int, float] | np.ndarray) -> float:
        """Numeric value given an id -> value mapping or a dense vector."""
        acc = self.const
        for k, v in self.coeffs.items():
            acc += v * values[k]
        return acc

    def variables(self) -> Iterator[int]:
        return iter(self.coeffs)

    def __repr__(self) -> str:
        bits = [f"{self.const:.6g}"] if self.const else []
        bits += [f"{c:+.6g}*v{k}" for k, c in sorted(self.coeffs.items())]
        return "LinExpr(" + (" ".join(bits) or "0") + ")"


class VariablePool:
    """Allocates globally unique scalar variable ids."""

    __slots__ = ("_next",)

    def __init__(self) -> None:
        self._next = 0

    def fresh(self, count: int = 1) -> range:
        start = self._next
        self._next += count
        return range(start, self._next)

    @property
    def allocated(self) -> int:
        return self._next
