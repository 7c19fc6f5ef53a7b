"""Sparse multivariate polynomials over duck-typed scalar coefficients.

This module is the symbolic substrate for the whole package: multiplier and
kernel functions, their images under the various operator maps, and every
equality constraint handed to the semidefinite backend are represented as
:class:`Poly` values in at most three variables.

Coefficients are ordinarily ``float``, but any scalar type implementing
``__add__``/``__radd__``, ``__mul__``/``__rmul__`` (by float), ``__neg__``
and ``is_negligible(tol)`` participates transparently.  The affine
expressions used while compiling feasibility problems (see
:mod:`soslyap.affine`) rely on this to flow through polynomial arithmetic,
differentiation and definite integration without a parallel code path.

Conventions
-----------
* Variables are referred to by name; the canonical variable order is the
  sorted tuple of names actually occurring with a nonzero exponent.
* A term maps an exponent tuple (aligned with ``vars``) to its coefficient.
* Canonical form drops coefficients within ``COEFF_TOL`` of zero and prunes
  variables that no longer occur, so structural equality is meaningful.

Contents: :class:`Poly`, :class:`MonomialBasis`, :func:`coefficients_in`,
and the :class:`BasisTooSmall` error raised when a coefficient extraction
does not fit inside the requested basis.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

COEFF_TOL = 1e-14

Monomial = tuple[int, ...]
Coeff = Union[float, "SupportsScalarOps"]


class BasisTooSmall(ValueError):
    """A polynomial contains a monomial outside the target basis."""


def _is_zero_coeff(c: Coeff, tol: float = COEFF_TOL) -> bool:
    if isinstance(c, (int, float)):
        return abs(c) <= tol
    return c.is_negligible(tol)


def _canonical(
    var_names: tuple[str, ...], terms: Mapping[Monomial, Coeff]
) -> tuple[tuple[str, ...], dict[Monomial, Coeff]]:
    """Drop negligible terms and unused variables; sort variables by name."""
    live = {m: c for m, c in terms.items() if not _is_zero_coeff(c)}
    if not live:
        return (), {}
    used = [i for i in range(len(var_names)) if any(m[i] for m in live)]
    names = tuple(var_names[i] for i in used)
    order = sorted(range(len(names)), key=lambda k: names[k])
    names_sorted = tuple(names[k] for k in order)
    out: dict[Monomial, Coeff] = {}
    for m, c in live.items():
        key = tuple(m[used[k]] for k in order)
        out[key] = out[key] + c if key in out else c
    return names_sorted, {m: c for m, c in out.items() if not _is_zero_coeff(c)}


class Poly:
    """Immutable sparse polynomial in up to three named variables."""

    __slots__ = ("vars", "terms")

    def __init__(
        self, var_names: Sequence[str], terms: Mapping[Monomial, Coeff]
    ) -> None:
        if len(set(var_names)) != len(var_names):
            raise ValueError(f"duplicate variable names: {var_names}")
        names, canon = _canonical(tuple(var_names), terms)
        if len(names) > 3:
            raise ValueError(f"at most 3 variables supported, got {names}")
        object.__setattr__(self, "vars", names)
        object.__setattr__(self, "terms", canon)

    def __setattr__(self, name: str, value: object) -> None:
        raise AttributeError("Poly is immutable")

    # ------------------------------------------------------------------
    # constructors
    # ------------------------------------------------------------------

    @staticmethod
    def zero() -> "Poly":
        return Poly((), {})

    @staticmethod
    def constant(c: Coeff) -> "Poly":
        return Poly((), {(): c})

    @staticmethod
    def variable(name: str) -> "Poly":
        return Poly((name,), {(1,): 1.0})

    @staticmethod
    def from_coeffs(name: str, coeffs: Sequence[Coeff]) -> "Poly":
        """Univariate polynomial from coefficients in ascending degree."""
        return Poly((name,), {(k,): c for k, c in enumerate(coeffs)})

    @staticmethod
    def monomial(var_names: Sequence[str], exponents: Monomial, c: Coeff = 1.0) -> "Poly":
        return Poly(tuple(var_names), {tuple(exponents): c})

    # ------------------------------------------------------------------
    # structure
    # ------------------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def approx_zero(self, tol: float) -> bool:
        return all(_is_zero_coeff(c, tol) for c in self.terms.values())

    def total_degree(self) -> int:
        """Total degree; the zero polynomial reports -1."""
        return max((sum(m) for m in self.terms), default=-1)

    def degree_in(self, name: str) -> int:
        if name not in self.vars:
            return 0
        i = self.vars.index(name)
        return max((m[i] for m in self.terms), default=0)

    def coefficient(self, var_names: Sequence[str], exponents: Monomial) -> Coeff:
        """Coefficient of the given monomial, 0.0 if absent."""
        probe = dict(zip(var_names, exponents))
        key = tuple(probe.get(v, 0) for v in self.vars)
        for v, e in probe.items():
            if e and v not in self.vars:
                return 0.0
        return self.terms.get(key, 0.0)

    def max_abs_coeff(self) -> float:
        out = 0.0
        for c in self.terms.values():
            if isinstance(c, (int, float)):
                out = max(out, abs(c))
            else:
                out = max(out, c.max_abs())
        return out

    def map_coeffs(self, fn: Callable[[Coeff], Coeff]) -> "Poly":
        return Poly(self.vars, {m: fn(c) for m, c in self.terms.items()})

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Poly):
            return NotImplemented
        return self.vars == other.vars and self.terms == other.terms

    def __repr__(self) -> str:
        if not self.terms:
            return "Poly(0)"
        bits = []
        for m in sorted(self.terms, key=lambda m: (sum(m), m)):
            mono = "*".join(
                f"{v}^{e}" if e > 1 else v
                for v, e in zip(self.vars, m)
                if e
            )
            c = self.terms[m]
            cs = f"{c:.6g}" if isinstance(c, (int, float)) else f"({c!r})"
            bits.append(f"{cs}*{mono}" if mono else cs)
        return "Poly(" + " + ".join(bits) + ")"

    # ------------------------------------------------------------------
    # arithmetic
    # ------------------------------------------------------------------

    def _aligned(self, other: "Poly") -> tuple[tuple[str, ...], dict, dict]:
        names = tuple(sorted(set(self.vars) | set(other.vars)))

        def remap(p: Poly) -> dict[Monomial, Coeff]:
            idx = [p.vars.index(v) if v in p.vars else -1 for v in names]
            return {
                tuple(m[i] if i >= 0 else 0 for i in idx): c
                for m, c in p.terms.items()
            }

        return names, remap(self), remap(other)

    def __add__(self, other: Union["Poly", Coeff]) -> "Poly":
        if not isinstance(other, Poly):
            other = Poly.constant(other)
        names, a, b = self._aligned(other)
        out = dict(a)
        for m, c in b.items():
            out[m] = out[m] + c if m in out else c
        return Poly(names, out)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly(self.vars, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other: Union["Poly", Coeff]) -> "Poly":
        return self + (-other if isinstance(other, Poly) else -1.0 * other)

    def __rsub__(self, other: Coeff) -> "Poly":
        return (-self) + other

    def __mul__(self, other: Union["Poly", Coeff]) -> "Poly":
        if not isinstance(other, Poly):
            if _is_zero_coeff(other):
                return Poly.zero()
            return Poly(self.vars, {m: c * other for m, c in self.terms.items()})
        names, a, b = self._aligned(other)
        out: dict[Monomial, Coeff] = {}
        for ma, ca in a.items():
            for mb, cb in b.items():
                key = tuple(i + j for i, j in zip(ma, mb))
                prod = ca * cb
                out[key] = out[key] + prod if key in out else prod
        return Poly(names, out)

    def __rmul__(self, other: Coeff) -> "Poly":
        if isinstance(other, Poly):  # pragma: no cover - Poly.__mul__ handles it
            return other * self
        if _is_zero_coeff(other):
            return Poly.zero()
        return Poly(self.vars, {m: other * c for m, c in self.terms.items()})

    def __pow__(self, k: int) -> "Poly":
        if k < 0:
            raise ValueError("negative powers unsupported")
        out = Poly.constant(1.0)
        for _ in range(k):
            out = out * self
        return out

    # ------------------------------------------------------------------
    # calculus and substitution
    # ------------------------------------------------------------------

    def differentiate(self, name: str) -> "Poly":
        if name not in self.vars:
            return Poly.zero()
        i = self.vars.index(name)
        out: dict[Monomial, Coeff] = {}
        for m, c in self.terms.items():
            if m[i] == 0:
                continue
            key = m[:i] + (m[i] - 1,) + m[i + 1 :]
            out[key] = c * float(m[i])
        return Poly(self.vars, out)

    def antiderivative(self, name: str) -> "Poly":
        """Antiderivative in ``name`` with zero constant of integration."""
        if name not in self.vars:
            return self * Poly.variable(name)
        i = self.vars.index(name)
        out = {
            m[:i] + (m[i] + 1,) + m[i + 1 :]: c * (1.0 / (m[i] + 1))
            for m, c in self.terms.items()
        }
        return Poly(self.vars, out)

    def partial_eval(self, bindings: Mapping[str, Union["Poly", float]]) -> "Poly":
        """Substitute polynomials or numbers for a subset of the variables."""
        out = Poly.zero()
        names = self.vars
        values = {
            v: b if isinstance(b, Poly) else Poly.constant(b)
            for v, b in bindings.items()
        }
        for m, c in self.terms.items():
            term = Poly((), {(): c})
            for v, e in zip(names, m):
                if e == 0:
                    continue
                base = values.get(v, Poly.variable(v))
                term = term * base**e
            out = out + term
        return out

    def integrate(
        self,
        name: str,
        lower: Union["Poly", float],
        upper: Union["Poly", float],
    ) -> "Poly":
        """Definite integral in ``name`` between polynomial or numeric bounds."""
        anti = self.antiderivative(name)
        return anti.partial_eval({name: upper}) - anti.partial_eval({name: lower})

    def rename(self, mapping: Mapping[str, str]) -> "Poly":
        names = tuple(mapping.get(v, v) for v in self.vars)
        return Poly(names, dict(self.terms))

    def diagonal(self, source: str, target: str) -> "Poly":
        """Restrict to the diagonal ``source = target``."""
        return self.partial_eval({source: Poly.variable(target)})

    # ------------------------------------------------------------------
    # evaluation
    # ------------------------------------------------------------------

    def evaluate(self, point: Mapping[str, float]) -> Coeff:
        missing = [v for v in self.vars if v not in point]
        if missing:
            raise ValueError(f"no value supplied for {missing}")
        acc: Coeff = 0.0
        for m, c in self.terms.items():
            scale = 1.0
            for v, e in zip(self.vars, m):
                scale *= point[v] ** e
            acc = acc + c * scale
        return acc

    def eval_grid(self, grids: Mapping[str, np.ndarray]) -> np.ndarray:
        """Vectorized evaluation; grids must broadcast against each other."""
        for c in self.terms.values():
            if not isinstance(c, (int, float)):
                raise TypeError("grid evaluation requires numeric coefficients")
        shape = np.broadcast_shapes(*(np.shape(g) for g in grids.values())) if grids else ()
        acc = np.zeros(shape)
        for m, c in self.terms.items():
            term = float(c)
            for v, e in zip(self.vars, m):
                if e:
                    term = term * np.asarray(grids[v]) ** e
            acc = acc + term
        return acc


class MonomialBasis:
    """All monomials in the given variables up to a total degree bound.

    Ordering is graded lexicographic: ascending total degree, and within a
    degree the earlier variable's exponent dominates (x^2, x*y, y^2).
    """

    __slots__ = ("vars", "degree", "exponents", "_index")

    def __init__(self, var_names: Sequence[str], degree: int) -> None:
        if degree < 0:
            raise ValueError("degree bound must be nonnegative")
        self.vars = tuple(var_names)
        self.degree = degree
        self.exponents = sorted(
            self._enumerate(len(self.vars), degree),
            key=lambda m: (sum(m), tuple(-e for e in m)),
        )
        self._index = {m: i for i, m in enumerate(self.exponents)}

    @staticmethod
    def _enumerate(nvars: int, degree: int) -> Iterable[Monomial]:
        if nvars == 0:
            yield ()
            return
        for head in range(degree + 1):
            for tail in MonomialBasis._enumerate(nvars - 1, degree - head):
                yield (head,) + tail

    def __len__(self) -> int:
        return len(self.exponents)

    def __iter__(self) -> Iterable[Monomial]:
        return iter(self.exponents)

    def index(self, exponents: Monomial) -> int:
        return self._index[tuple(exponents)]

    def poly(self, i: int) -> Poly:
        return Poly.monomial(self.vars, self.exponents[i])

    def eval_grid(self, grids: Mapping[str, np.ndarray]) -> np.ndarray:
        """Stack of basis values, shape (len(self), *broadcast shape)."""
        return np.stack([self.poly(i).eval_grid(grids) for i in range(len(self))])

    @staticmethod
    def size(nvars: int, degree: int) -> int:
        return math.comb(nvars + degree, nvars)


def coefficients_in(p: Poly, basis: MonomialBasis) -> list[Coeff]:
    """Coefficient vector of ``p`` in ``basis``.

    Raises :class:`BasisTooSmall` if ``p`` involves a variable outside the
    basis or a monomial above its degree bound.
    """
    stray = set(p.vars) - set(basis.vars)
    if stray:
        raise BasisTooSmall(f"variables {sorted(stray)} not in basis {basis.vars}")
    out: list[Coeff] = [0.0] * len(basis)
    pos = [basis.vars.index(v) for v in p.vars]
    for m, c in p.terms.items():
        key = [0] * len(basis.vars)
        for i, e in zip(pos, m):
            key[i] = e
        key_t = tuple(key)
        if key_t not in basis._index:
            raise BasisTooSmall(
                f"monomial {key_t} exceeds degree-{basis.degree} basis"
            )
        out[basis.index(key_t)] = c
    return out
