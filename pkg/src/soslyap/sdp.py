"""Compilation of operator inequalities into semidefinite feasibility problems.

The pipeline: declare one or more Gram-parameterized kernel triples whose
entries are affine expressions, push them through the (linear) operator
maps, and constrain the resulting polynomials either to vanish or to lie in
the Gram cone at some certificate degree.  Everything reduces to

    find  X_1, ..., X_r  symmetric
    s.t.  X_k - diag(shift_k) >= 0          (one PSD cone per block)
          A vec(X) = b                      (coefficient matching)

Backends
--------
``ClarabelBackend`` hands the cone program to the Clarabel interior-point
solver; ``ScsBackend`` uses the SCS operator-splitting solver, whose memory
footprint stays near the problem data instead of the KKT factorization.
The default ``auto`` routing solves with Clarabel up to a size threshold
and falls back to SCS above it, where the direct factorization would not
fit in memory.  ``RecorderBackend`` serializes the problem to a plain-text
sparse format (documented next to the writer) so the compilation layer
stays testable without any solver installed.  Select a backend explicitly
or through the ``SOSLYAP_BACKEND`` environment variable (values ``auto``,
``clarabel``, ``scs`` or ``recorder``).

Solutions claimed feasible are re-verified independently of the solver:
equality residuals must stay within ``EQ_RESIDUAL_TOL`` and every shifted
block must be positive semidefinite up to ``EIG_TOL``.  A solver claim that
fails re-verification is downgraded to a numerical failure, never reported
as Feasible.
"""

from __future__ import annotations

import enum
import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .affine import LinExpr, VariablePool
from .kernels import KernelTriple, gram_block_sizes, triple_from_gram, z2_exponents
from .polynomials import Poly

EQ_RESIDUAL_TOL = 1e-6
EIG_TOL = 1e-7
_SQRT2 = math.sqrt(2.0)

# Nonnegative window vanishing at both endpoints.  Positivity on the unit
# interval is exactly {plain Gram} + x(1-x) {plain Gram} (classical weighted
# representation), so every cone here pairs a plain block with a window block.
_WINDOW = Poly.from_coeffs("x", [0.0, 1.0, -1.0])


class Status(enum.Enum):
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class BlockVar:
    """Symmetric decision block with a PSD shift on its diagonal."""

    name: str
    size: int
    shift: np.ndarray  # diagonal entries d; constraint is X - diag(d) >= 0
    ids: np.ndarray  # size x size array of variable ids, symmetric

    def svec_columns(self) -> list[tuple[int, int, int]]:
        """(id, i, j) for the upper triangle in column-major order."""
        out = []
        for j in range(self.size):
            for i in range(j + 1):
                out.append((int(self.ids[i, j]), i, j))
        return out


@dataclass
class FeasibilityProblem:
    blocks: list[BlockVar]
    equalities: list[LinExpr]
    name: str = "problem"
    meta: dict = field(default_factory=dict)

    def variable_count(self) -> int:
        return sum(b.size * (b.size + 1) // 2 for b in self.blocks)

    def structural_contradictions(self) -> list[int]:
        """Indices of equalities with no variables but nonzero constant."""
        return [
            i
            for i, e in enumerate(self.equalities)
            if not e.coeffs and abs(e.const) > EQ_RESIDUAL_TOL
        ]


@dataclass
class SolveOutcome:
    status: Status
    values: dict[int, float] | None = None
    block_values: dict[str, np.ndarray] | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status is Status.FEASIBLE


class ProblemBuilder:
    """Accumulates Gram blocks and affine equality constraints."""

    def __init__(self, name: str = "problem") -> None:
        self.pool = VariablePool()
        self.blocks: list[BlockVar] = []
        self.equalities: list[LinExpr] = []
        self.name = name
        self.meta: dict = {}

    def declare_block(
        self, size: int, shift: np.ndarray | float = 0.0, name: str | None = None
    ) -> BlockVar:
        if name is None:
            name = f"G{len(self.blocks)}"
        shift_vec = np.full(size, float(shift)) if np.isscalar(shift) else np.asarray(shift, float)
        ids = np.zeros((size, size), dtype=np.int64)
        for j in range(size):
            for i in range(j + 1):
                (vid,) = self.pool.fresh(1)
                ids[i, j] = ids[j, i] = vid
        block = BlockVar(name, size, shift_vec, ids)
        self.blocks.append(block)
        return block

    def declare_triple(
        self,
        d1: int,
        d2: int,
        epsilon: float,
        name: str | None = None,
        window: bool = True,
    ) -> tuple[KernelTriple, list[BlockVar]]:
        """Affine triple ranging over the cone with margin ``epsilon``.

        The operator is parameterized as epsilon plus two Gram pieces,
        one plain and one carrying the x(1-x) window:

            <Pw, w> = eps||w||^2 + (PSD form) + (window-weighted PSD form)

        so <Pw, w> >= eps||w||^2 with equality attainable (M can be the
        constant eps; a floor of the form eps|Z1(x)|^2 would inflate
        int M by the moment sum of the basis and provably cap kernel-free
        decay tests well below the Wirtinger limit).  The window piece
        vanishes at the endpoints and uses degrees one lower, keeping the
        multiplier degree <= 2*d1 and kernel degree <= 2*d2 + 1, the same
        spans the plain piece already covers, while admitting multipliers
        that are positive on the interval without being globally so.
        """
        name = name or f"triple{len(self.blocks)}"
        _, _, n = gram_block_sizes(d1, d2)
        inner = self.declare_block(n, 0.0, name + "_i")
        ids = inner.ids
        tri = triple_from_gram(
            lambda i, j: LinExpr.var(int(ids[i, j])), d1, d2, epsilon
        )
        blocks = [inner]
        if window and d1 >= 1 and d2 >= 1:
            _, _, nw = gram_block_sizes(d1 - 1, d2 - 1)
            wblock = self.declare_block(nw, 0.0, name + "_w")
            wids = wblock.ids
            wtri = triple_from_gram(
                lambda i, j: LinExpr.var(int(wids[i, j])),
                d1 - 1,
                d2 - 1,
                0.0,
                weight=_WINDOW,
            )
            tri = KernelTriple(
                tri.m + wtri.m, tri.k1 + wtri.k1, tri.k2 + wtri.k2, d1, d2, epsilon
            )
            blocks.append(wblock)
        if epsilon:
            tri = KernelTriple(
                tri.m + Poly.constant(epsilon), tri.k1, tri.k2, d1, d2, epsilon
            )
        return tri, blocks

    def constrain_scalar_zero(self, value) -> None:
        expr = value if isinstance(value, LinExpr) else LinExpr(const=float(value))
        self.equalities.append(expr)

    def constrain_poly_zero(self, p: Poly) -> int:
        """One equality per monomial coefficient; returns how many were added."""
        count = 0
        for coeff in p.terms.values():
            self.constrain_scalar_zero(coeff)
            count += 1
        return count

    def constrain_membership(
        self,
        target: KernelTriple | tuple[Poly, Poly, Poly],
        d1c: int,
        d2c: int,
        epsilon: float = 0.0,
        name: str | None = None,
    ) -> list[BlockVar]:
        """Force (M, K1, K2) to lie in the Gram cone at certificate degrees.

        Introduces fresh Gram blocks W and matches coefficients of the
        induced triple against the target over the union of their supports.
        """
        if isinstance(target, KernelTriple):
            polys = (target.m, target.k1, target.k2)
        else:
            polys = target
        wtri, blocks = self.declare_triple(d1c, d2c, epsilon, name or f"cert{len(self.blocks)}")
        for cand, tgt in zip((wtri.m, wtri.k1, wtri.k2), polys):
            self.constrain_poly_zero(cand - tgt)
        return blocks

    def build(self) -> FeasibilityProblem:
        return FeasibilityProblem(
            list(self.blocks), list(self.equalities), self.name, dict(self.meta)
        )


# ----------------------------------------------------------------------
# certificate degree selection
# ----------------------------------------------------------------------


def _gram_supports(g1: int, g2: int) -> tuple[set[int], set[tuple[int, int]]]:
    """Monomial supports of the M and K1 components of a degree-(g1, g2) form."""
    m_sup = set(range(2 * g1 + 1))
    z2 = z2_exponents(g2)
    k_sup: set[tuple[int, int]] = set()
    for i in range(g1 + 1):
        for (p, q) in z2:
            k_sup.add((i + p, q))
            k_sup.add((q, i + p))
    for (p1, q1) in z2:
        for (p2, q2) in z2:
            pp = p1 + p2 + 1
            k_sup.add((q1, q2 + pp))
            k_sup.add((q1 + pp, q2))
            k_sup.add((q1, q2))
    return m_sup, k_sup


def _poly_support_2d(p: Poly) -> set[tuple[int, int]]:
    out = set()
    for mono in p.terms:
        ex = dict(zip(p.vars, mono))
        out.add((ex.get("x", 0), ex.get("y", 0)))
    return out


def auto_degrees(
    target: KernelTriple | tuple[Poly, Poly, Poly],
    floor: tuple[int, int] = (0, 0),
    cap: int = 40,
) -> tuple[int, int]:
    """Smallest certificate degrees whose Gram form can represent ``target``.

    Minimizes d1' first (it only has to cover the multiplier) and then d2'
    given d1'.  ``floor`` supplies lower bounds, typically the degrees of
    the triple the target was mapped from.
    """
    polys = (
        (target.m, target.k1, target.k2)
        if isinstance(target, KernelTriple)
        else target
    )
    m_deg = polys[0].total_degree()
    g1 = max(floor[0], math.ceil(max(m_deg, 0) / 2))
    k1_sup = _poly_support_2d(polys[1])
    k2_sup = {(b, a) for (a, b) in _poly_support_2d(polys[2])}
    need = k1_sup | k2_sup
    for g2 in range(floor[1], cap + 1):
        _, k_sup = _gram_supports(g1, g2)
        if need <= k_sup:
            return g1, g2
    raise ValueError(f"no kernel certificate degree up to {cap} covers the target support")


# ----------------------------------------------------------------------
# backends
# ----------------------------------------------------------------------


def _svec_entries(block: BlockVar, lower: bool):
    """(id, i, j) triangle walk in the vectorization order of the backend.

    Clarabel stacks the upper triangle column-major, SCS the lower one;
    both scale off-diagonal entries by sqrt(2).
    """
    if lower:
        for j in range(block.size):
            for i in range(j, block.size):
                yield int(block.ids[i, j]), i, j
    else:
        for j in range(block.size):
            for i in range(j + 1):
                yield int(block.ids[i, j]), i, j


def _column_layout(
    problem: FeasibilityProblem, lower: bool = False
) -> tuple[dict[int, tuple[int, bool]], int]:
    """Map variable id -> (svec column, is_off_diagonal)."""
    layout: dict[int, tuple[int, bool]] = {}
    col = 0
    for block in problem.blocks:
        for vid, i, j in _svec_entries(block, lower):
            layout[vid] = (col, i != j)
            col += 1
    return layout, col


class _PresolveInfeasible(Exception):
    """Dropped dependent equality rows disagree on the right-hand side."""

    def __init__(self, residual: float) -> None:
        super().__init__(f"rhs residual {residual:.3e}")
        self.residual = residual


def _margin_arrays(
    problem: FeasibilityProblem,
    lower: bool,
    consistency_tol: float,
    margin: bool = True,
    tau: float = 0.0,
):
    """Conic program data shared by the backends.

    Row layout: rank-compressed coefficient equalities (zero cone), then
    with ``margin`` the cap 1 - t >= 0 (nonnegative cone), then one shifted
    PSD cone per block.  With ``margin`` the diagonal rows carry the extra
    margin variable t (phase-I form, last column); without it they carry a
    fixed inward nudge ``tau`` instead (pure feasibility form).  Returns
    (layout, a, rhs, n_eq, dropped, psd_dims); raises _PresolveInfeasible
    when dropped dependent rows disagree on the right-hand side.
    """
    from scipy import sparse

    layout, nsvec = _column_layout(problem, lower)
    ncols = nsvec + 1 if margin else nsvec
    tcol = nsvec
    erows: list[int] = []
    ecols: list[int] = []
    evals: list[float] = []
    erhs: list[float] = []
    re = 0
    for eq in problem.equalities:
        # normalize each row and drop cancellation dust; keeps the zero
        # cone well scaled independently of coefficient growth with degree
        scale = max((abs(c) for c in eq.coeffs.values()), default=0.0)
        if scale == 0.0:
            continue  # structurally trivial (0 = 0 after contradiction screen)
        for vid, c in eq.coeffs.items():
            if abs(c) <= 1e-14 * scale:
                continue
            col, off = layout[vid]
            erows.append(re)
            ecols.append(col)
            evals.append((c / _SQRT2 if off else c) / scale)
        erhs.append(-eq.const / scale)
        re += 1
    a_eq = sparse.csr_matrix((evals, (erows, ecols)), shape=(re, nsvec))
    b_eq = np.asarray(erhs)
    keep, drop_resid = _independent_rows(a_eq, b_eq)
    if drop_resid > consistency_tol:
        raise _PresolveInfeasible(drop_resid)
    a_eq = a_eq[keep].tocoo()
    b_eq = b_eq[keep]
    r = n_eq = len(keep)
    rows = list(a_eq.row)
    cols = list(a_eq.col)
    vals = list(a_eq.data)
    rhs = list(b_eq)
    if margin:
        # cap: 1 - t >= 0
        rows.append(r)
        cols.append(tcol)
        vals.append(1.0)
        rhs.append(1.0)
        r += 1
    psd_dims = []
    col0 = 0
    for block in problem.blocks:
        tri_n = block.size * (block.size + 1) // 2
        for k, (vid, i, j) in enumerate(_svec_entries(block, lower)):
            rows.append(r + k)
            cols.append(col0 + k)
            vals.append(-1.0)
            if i == j:
                if margin:
                    rows.append(r + k)
                    cols.append(tcol)
                    vals.append(1.0)
                rhs.append(-block.shift[i] - tau)
            else:
                rhs.append(0.0)
        psd_dims.append(block.size)
        r += tri_n
        col0 += tri_n
    a = sparse.csc_matrix((vals, (rows, cols)), shape=(r, ncols))
    return layout, a, np.array(rhs), n_eq, re - n_eq, psd_dims


def _independent_rows(a_eq, b_eq: np.ndarray) -> tuple[np.ndarray, float]:
    """Row subset of full rank plus the rhs residual of the dropped rows.

    Coefficient-matching systems are structurally redundant (the same
    Gram entry sums appear under several monomials), and the solvers'
    zero-cone rows must be independent.  Rank is detected on the row
    Gramian with pivoted Cholesky; every dropped row is a combination of
    kept ones, so it only remains to check the right-hand side follows
    the same combination.
    """
    from scipy.linalg import solve_triangular
    from scipy.linalg.lapack import dpstrf

    m = a_eq.shape[0]
    if m == 0:
        return np.arange(0), 0.0
    gram = np.asarray((a_eq @ a_eq.T).todense())
    c, piv, rank, _ = dpstrf(gram, lower=1)
    piv = piv - 1  # LAPACK is 1-based
    keep, drop = piv[:rank], piv[rank:]
    if drop.size == 0:
        return np.sort(keep), 0.0
    lower = np.tril(c[:rank, :rank])
    cross = gram[np.ix_(keep, drop)]
    half = solve_triangular(lower, cross, lower=True)
    combo = solve_triangular(lower.T, half, lower=False)
    resid = b_eq[drop] - combo.T @ b_eq[keep]
    return np.sort(keep), float(np.abs(resid).max())


class ClarabelBackend:
    """Direct conic interface to the Clarabel interior-point solver.

    Feasibility is decided through a phase-I margin program: maximize t
    subject to the equalities and B_k - diag(shift_k) >= t I for every
    block, with t capped at 1.  The augmented problem always has a strict
    interior in the t direction, which keeps the homogeneous embedding
    well posed even when the underlying feasible set is thin; the sign of
    the optimal margin is the feasibility verdict.
    """

    name = "clarabel"
    MARGIN_TOL = 1e-9
    CONSISTENCY_TOL = 1e-6
    # default KKT perturbation: the coefficient-matching rows are stiff and
    # the solver's equilibration alone sporadically produces zero-step
    # failures on them; a slightly larger static regularization is benign
    # (solutions are re-verified independently) and removes those failures
    DEFAULT_SETTINGS = {"static_regularization_constant": 1e-7}

    def __init__(self, settings: Mapping[str, object] | None = None) -> None:
        self.settings = {**self.DEFAULT_SETTINGS, **(settings or {})}

    def solve_raw(self, problem: FeasibilityProblem):
        import clarabel
        from scipy import sparse

        try:
            layout, a, rhs, n_eq, dropped, psd_dims = _margin_arrays(
                problem, lower=False, consistency_tol=self.CONSISTENCY_TOL
            )
        except _PresolveInfeasible as exc:
            return "PrimalInfeasible", None, {
                "solver": "clarabel",
                "solver_status": "presolve",
                "iterations": 0,
                "solve_seconds": 0.0,
                "reason": "dependent equality rows have inconsistent rhs",
                "drop_residual": exc.residual,
            }
        tcol = a.shape[1] - 1
        cones = [clarabel.ZeroConeT(n_eq)] if n_eq else []
        cones.append(clarabel.NonnegativeConeT(1))
        cones.extend(clarabel.PSDTriangleConeT(d) for d in psd_dims)
        p = sparse.csc_matrix((tcol + 1, tcol + 1))
        q = np.zeros(tcol + 1)
        q[tcol] = -1.0
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        for key, val in self.settings.items():
            setattr(settings, key, val)
        solver = clarabel.DefaultSolver(p, q, a, rhs, cones, settings)
        t0 = time.perf_counter()
        sol = solver.solve()
        elapsed = time.perf_counter() - t0
        raw = str(sol.status)
        stats = {
            "solver": "clarabel",
            "solver_status": raw,
            "iterations": sol.iterations,
            "solve_seconds": elapsed,
            "eq_rows": n_eq,
            "eq_rows_dropped": dropped,
        }
        if raw in ("Solved", "AlmostSolved"):
            x = np.asarray(sol.x)
            margin = float(x[tcol])
            stats["margin"] = margin
            if margin > self.MARGIN_TOL:
                values = {}
                for vid, (col, off) in layout.items():
                    values[vid] = float(x[col] / _SQRT2) if off else float(x[col])
                return "Solved", values, stats
            return "PrimalInfeasible", None, stats
        if raw in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            # only the coefficient equalities can be infeasible here
            return "PrimalInfeasible", None, stats
        return raw, None, stats


class ScsBackend:
    """Operator-splitting fallback for problems past the direct-KKT scale.

    Solves the plain feasibility form (no objective): the phase-I margin
    objective creates a flat optimal face on which ADMM crawls, while the
    projection problem converges in a few hundred iterations.  The
    returned point is polished by an exact least-squares projection onto
    the equality rows, and every Feasible claim is still gated by the
    independent re-verification in ``solve``; this backend never asserts
    optimality on its own.  Infeasibility is reported only when the
    returned improving ray passes an independent Farkas check, never on
    the solver's say-so, because first-order verdicts at loose tolerance
    are untrustworthy near the feasibility boundary.
    """

    name = "scs"
    CONSISTENCY_TOL = 1e-6
    FARKAS_TOL = 1e-6
    DEFAULT_SETTINGS = {
        "eps_abs": 1e-6,
        "eps_rel": 1e-6,
        "eps_infeas": 1e-7,
        "max_iters": 200_000,
        "time_limit_secs": 270.0,
    }

    def __init__(self, settings: Mapping[str, object] | None = None) -> None:
        self.settings = {**self.DEFAULT_SETTINGS, **(settings or {})}

    def _attempt(self, problem: FeasibilityProblem, tau: float):
        import scs

        layout, a, rhs, n_eq, dropped, psd_dims = _margin_arrays(
            problem,
            lower=True,
            consistency_tol=self.CONSISTENCY_TOL,
            margin=False,
            tau=tau,
        )
        cone = {"z": n_eq, "s": psd_dims}
        data = {"A": a, "b": rhs, "c": np.zeros(a.shape[1])}
        sol = scs.solve(data, cone, verbose=False, **self.settings)
        raw = str(sol["info"]["status"]).strip()
        x = sol.get("x")
        stats = {
            "iterations": sol["info"].get("iter"),
            "eq_rows": n_eq,
            "eq_rows_dropped": dropped,
        }
        if raw.startswith("infeasible"):
            ok, diag = self._verify_farkas(a, rhs, sol.get("y"), n_eq, psd_dims)
            stats.update(diag)
            stats["farkas_verified"] = ok
            return raw, None, stats
        if x is None or not np.all(np.isfinite(x)):
            return raw, None, stats
        # exact projection onto the (independent) equality rows: ADMM
        # leaves a small residual there that the downstream verification
        # would reject, while the PSD slack absorbs the tiny displacement
        acsr = a.tocsr()[:n_eq]
        resid = acsr @ x - rhs[:n_eq]
        stats["pre_polish_residual"] = float(np.abs(resid).max()) if n_eq else 0.0
        if n_eq:
            gram = (acsr @ acsr.T).toarray()
            x = x - acsr.T @ np.linalg.solve(gram, resid)
        values = {}
        for vid, (col, off) in layout.items():
            values[vid] = float(x[col] / _SQRT2) if off else float(x[col])
        worst = 0.0
        for block in problem.blocks:
            mat = np.empty((block.size, block.size))
            for i in range(block.size):
                for j in range(block.size):
                    mat[i, j] = values[int(block.ids[i, j])]
            ev = float(np.linalg.eigvalsh(mat - np.diag(block.shift))[0])
            worst = min(worst, ev)
        stats["post_polish_min_eig"] = worst
        return raw, values, stats

    def _verify_farkas(self, a, rhs, y, n_eq, psd_dims):
        """Check an improving ray without trusting the solver: y must lie in
        the dual cone, annihilate the constraint matrix, and strictly cut the
        right-hand side.  Any feasible point would contradict such a ray, so
        a verified one is accepted even when the solver tagged the run
        inaccurate."""
        if y is None:
            return False, {"farkas_reason": "no dual ray returned"}
        y = np.asarray(y, dtype=float)
        if y.shape != rhs.shape or not np.all(np.isfinite(y)):
            return False, {"farkas_reason": "dual ray malformed"}
        by = float(rhs @ y)
        ymax = float(np.abs(y).max()) if y.size else 0.0
        if ymax <= 0.0 or by >= -1e-9 * max(1.0, ymax):
            return False, {"farkas_reason": "ray does not cut rhs", "b_dot_y": by}
        y = y / (-by)
        scale = max(1.0, float(np.abs(y).max()))
        resid = float(np.abs(a.T @ y).max())
        worst = 0.0
        k = n_eq
        for size in psd_dims:
            mat = np.empty((size, size))
            idx = k
            for j in range(size):
                for i in range(j, size):
                    v = y[idx] if i == j else y[idx] / _SQRT2
                    mat[i, j] = v
                    mat[j, i] = v
                    idx += 1
            k = idx
            ev = np.linalg.eigvalsh(mat)
            worst = min(worst, float(ev[0]) / max(1.0, float(ev[-1])))
        diag = {"farkas_residual": resid, "farkas_min_eig_ratio": worst}
        ok = resid <= self.FARKAS_TOL * scale and worst >= -self.FARKAS_TOL
        return ok, diag

    def solve_raw(self, problem: FeasibilityProblem):
        t0 = time.perf_counter()
        base = {"solver": "scs", "solve_seconds": 0.0}
        try:
            raw, values, stats = self._attempt(problem, tau=0.0)
            base.update(stats)
            base["solver_status"] = raw
            if (
                values is not None
                and raw.startswith("solved")
                and base["post_polish_min_eig"] < -EIG_TOL
            ):
                # the projection nudged a boundary solution outside the
                # cone; retry with a small inward shift to leave room
                tau = max(1e-7, 4.0 * abs(base["post_polish_min_eig"]))
                raw2, values2, stats2 = self._attempt(problem, tau=tau)
                base["retry_tau"] = tau
                base["retry_status"] = raw2
                if values2 is not None and raw2.startswith("solved"):
                    values = values2
                    base.update(stats2)
        except _PresolveInfeasible as exc:
            base.update(
                solver_status="presolve",
                iterations=0,
                reason="dependent equality rows have inconsistent rhs",
                drop_residual=exc.residual,
            )
            return "PrimalInfeasible", None, base
        finally:
            base["solve_seconds"] = time.perf_counter() - t0
        raw = base["solver_status"]
        if raw.startswith("infeasible") and base.get("farkas_verified"):
            # improving ray from the untouched problem, checked above
            return "PrimalInfeasible", None, base
        if values is not None and raw.startswith("solved"):
            # AlmostSolved defers the verdict to the independent check
            return "AlmostSolved", values, base
        base.setdefault("reason", f"first-order solve ended with {raw!r}")
        return "NumericalFailure", None, base


# Direct KKT factorization cost model: each PSD block contributes a dense
# svec x svec Hessian, so memory scales with the sum of squared triangle
# sizes.  The measured footprint on this box is about 80 bytes per entry;
# the cap keeps the interior-point path under ~4.5 GB and routes anything
# heavier to the splitting solver.
CLARABEL_KKT_LIMIT = 5.6e7


def kkt_weight(problem: FeasibilityProblem) -> int:
    return sum((b.size * (b.size + 1) // 2) ** 2 for b in problem.blocks)


def prefers_splitting(problem: FeasibilityProblem) -> bool:
    """True when the auto route would avoid the direct factorization."""
    return kkt_weight(problem) > CLARABEL_KKT_LIMIT


class AutoBackend:
    """Memory-model routing between the interior-point and splitting solvers."""

    name = "auto"

    def __init__(self) -> None:
        self._clarabel = ClarabelBackend()
        self._scs = ScsBackend()

    def solve_raw(self, problem: FeasibilityProblem):
        if prefers_splitting(problem):
            return self._scs.solve_raw(problem)
        return self._clarabel.solve_raw(problem)


class RecorderBackend:
    """Writes problems to a sparse text format instead of solving them.

    Format (one file per problem, 17 significant digit decimals)::

        # soslyap problem dump v1
        problem <name>
        blocks <count>
        block <index> <name> <size> shift <d_0> ... <d_{size-1}>
        equalities <count>
        EQ <i> <coeff>(<block>,<row>,<col>) ... = <rhs>

    Each ``coeff(block,row,col)`` multiplies the (row, col) = (col, row)
    entry of that block's matrix; rhs collects the negated constant term.
    """

    name = "recorder"

    def __init__(self, directory: str | None = None) -> None:
        self.directory = directory or os.environ.get(
            "SOSLYAP_RECORD_DIR", "recorded_problems"
        )
        self.last_path: str | None = None

    def solve_raw(self, problem: FeasibilityProblem):
        os.makedirs(self.directory, exist_ok=True)
        path = os.path.join(self.directory, f"{problem.name}.sdp.txt")
        self.last_path = path
        where: dict[int, tuple[int, int, int]] = {}
        for bi, block in enumerate(problem.blocks):
            for vid, i, j in block.svec_columns():
                where[vid] = (bi, i, j)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# soslyap problem dump v1\n")
            fh.write(f"problem {problem.name}\n")
            fh.write(f"blocks {len(problem.blocks)}\n")
            for bi, block in enumerate(problem.blocks):
                shift = " ".join(f"{v:.17g}" for v in block.shift)
                fh.write(f"block {bi} {block.name} {block.size} shift {shift}\n")
            fh.write(f"equalities {len(problem.equalities)}\n")
            for i, eq in enumerate(problem.equalities):
                scale = max((abs(c) for c in eq.coeffs.values()), default=0.0)
                parts = []
                for vid in sorted(eq.coeffs):
                    c = eq.coeffs[vid]
                    if abs(c) <= 1e-14 * scale:
                        continue
                    bi, r_, c_ = where[vid]
                    parts.append(f"{c:.17g}({bi},{r_},{c_})")
                fh.write(f"EQ {i} {' '.join(parts)} = {-eq.const:.17g}\n")
        return "Recorded", None, {"solver": "recorder", "path": path}


def get_backend(name: str | None = None):
    chosen = name or os.environ.get("SOSLYAP_BACKEND", "auto")
    if chosen == "auto":
        return AutoBackend()
    if chosen == "clarabel":
        return ClarabelBackend()
    if chosen == "scs":
        return ScsBackend()
    if chosen == "recorder":
        return RecorderBackend()
    raise ValueError(
        f"unknown backend {chosen!r} (expected auto, clarabel, scs or recorder)"
    )


# ----------------------------------------------------------------------
# solving with independent re-verification
# ----------------------------------------------------------------------


def _verify(problem: FeasibilityProblem, values: Mapping[int, float]) -> dict:
    eq_res = 0.0
    for eq in problem.equalities:
        eq_res = max(eq_res, abs(eq.instantiate(values)))
    min_eig = float("inf")
    blocks: dict[str, np.ndarray] = {}
    for block in problem.blocks:
        x = np.empty((block.size, block.size))
        for i in range(block.size):
            for j in range(block.size):
                x[i, j] = values[int(block.ids[i, j])]
        blocks[block.name] = x
        if block.size:
            ev = float(np.linalg.eigvalsh(x - np.diag(block.shift))[0])
            min_eig = min(min_eig, ev)
    return {
        "equality_residual": eq_res,
        "min_shifted_eigenvalue": min_eig if problem.blocks else 0.0,
        "blocks": blocks,
    }


def solve(problem: FeasibilityProblem, backend=None) -> SolveOutcome:
    """Solve a feasibility problem and independently verify any Feasible claim."""
    contradictions = problem.structural_contradictions()
    if contradictions:
        return SolveOutcome(
            Status.INFEASIBLE,
            diagnostics={
                "reason": "structurally contradictory coefficient equations",
                "equality_indices": contradictions[:10],
            },
        )
    backend = backend or get_backend()
    claim, values, stats = backend.solve_raw(problem)
    diag = dict(stats)
    if claim in ("Solved", "AlmostSolved") and values is not None:
        checks = _verify(problem, values)
        diag["equality_residual"] = checks["equality_residual"]
        diag["min_shifted_eigenvalue"] = checks["min_shifted_eigenvalue"]
        ok = (
            checks["equality_residual"] <= EQ_RESIDUAL_TOL
            and checks["min_shifted_eigenvalue"] >= -EIG_TOL
        )
        if ok:
            return SolveOutcome(Status.FEASIBLE, values, checks["blocks"], diag)
        diag["reason"] = "solver claim failed independent verification"
        return SolveOutcome(Status.NUMERICAL_FAILURE, values, checks["blocks"], diag)
    if claim in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return SolveOutcome(Status.INFEASIBLE, diagnostics=diag)
    diag.setdefault("reason", f"backend returned {claim}")
    return SolveOutcome(Status.NUMERICAL_FAILURE, diagnostics=diag)
