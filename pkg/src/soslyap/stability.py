"""Exponential stability certification and parameter sweeps.

A plant is certified by exhibiting a kernel triple P in the coercive Gram
cone such that the primal Lyapunov image, shifted by the decay rate, lies
in the cone as well (negated), alongside the boundary cancellation
conditions of the plant's boundary class.  Feasibility of the compiled
semidefinite problem then yields ||w(t)|| <= exp(-delta t) sqrt(<w0, P w0>/eps).

Because the reaction coefficient enters the image affinely, the problem
for plant c + lambda at decay delta coincides with the problem for plant c
at decay delta + lambda.  Sweeps exploit this: one symbolic image per
degree, then a fresh membership block per probe.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .kernels import DiscreteOperator, KernelTriple, discretize, gram_block_sizes, z2_exponents
from .loi import QTuple, m_eps_map, n_eps_map, poincare_constant
from .polynomials import Poly
from . import sdp as _sdp
from .sdp import (
    EIG_TOL,
    EQ_RESIDUAL_TOL,
    FeasibilityProblem,
    ProblemBuilder,
    SolveOutcome,
    Status,
    _verify,
    auto_degrees,
    kkt_weight,
    prefers_splitting,
    solve,
)
from .systems import PdeSystem

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-3
DEFAULT_DELTA = 1e-3

# smallest Gram degree worth probing as a padding source for oversized solves
LIFT_FLOOR = 2


def _auto_routed(backend) -> bool:
    """Only the default routing may substitute lifted certificates."""
    return backend is None or getattr(backend, "name", "") == "auto"


def _embed_positions(small: tuple[int, int], big: tuple[int, int]) -> np.ndarray:
    """Position of each small Gram basis element inside the big basis.

    The basis is [1, x, ..., x^d1 | segment A over z2 | segment B over z2]
    and the z2 exponent list is graded, so a lower-degree basis maps to a
    contiguous prefix of each segment; the map is built explicitly from
    the exponents to keep that an implementation detail.
    """
    (d1s, d2s), (d1b, d2b) = small, big
    n1s, _, _ = gram_block_sizes(d1s, d2s)
    n1b, n2b, _ = gram_block_sizes(d1b, d2b)
    pos = {e: k for k, e in enumerate(z2_exponents(d2b))}
    seg = np.array([pos[tuple(e)] for e in z2_exponents(d2s)], dtype=int)
    return np.concatenate([np.arange(n1s), n1b + seg, n1b + n2b + seg])


@dataclass
class AnalysisReport:
    """Outcome of one certification attempt."""

    status: Status
    sys: PdeSystem
    degrees: tuple[int, int]
    cert_degrees: tuple[int, int]
    epsilon: float
    delta: float
    triple: KernelTriple | None = None
    gram: dict[str, np.ndarray] | None = None
    outcome: SolveOutcome | None = None

    @property
    def feasible(self) -> bool:
        return self.status is Status.FEASIBLE

    def decay_bound_constant(self, w0: np.ndarray, n: int | None = None) -> float:
        """C with ||w(t)|| <= C exp(-delta t), from the certified triple."""
        if self.triple is None:
            raise ValueError("no certificate available")
        op = discretize(self.triple, n if n is not None else len(w0))
        return float(np.sqrt(max(op.quadratic_form(w0), 0.0) / self.epsilon))


class ShiftedProblemFamily:
    """Feasibility problems indexed by the total decay shift.

    ``mode`` selects which operator image and boundary conditions to use:

    * ``primal``: stability test; image constraints plus the w(1)-trace
      cancellations and K2(0, .) = 0.
    * ``dual``: dual stability test; t0 traces constrained to vanish.
    * ``control``: controller synthesis; boundary traces are cancelled by
      the feedback gains instead of constraints, so only K2(0, .) = 0 stays.
    * ``control_static``: as ``control`` with both kernels pinned to zero,
      leaving a pure multiplier (static output-feedback structure).
    * ``observer``: output-injection synthesis; primal image, but the trace
      cancellations are delegated to the injection gains, so as in
      ``control`` only K2(0, .) = 0 remains.

    Under ``dirichlet`` boundary conditions only ``primal`` is meaningful;
    the trace constraints become K1(1, .) = 0.
    """

    def __init__(
        self,
        sys: PdeSystem,
        d1: int,
        d2: int,
        epsilon: float,
        mode: str = "primal",
        kernel_free: bool = False,
    ) -> None:
        if mode not in ("primal", "dual", "control", "control_static", "observer"):
            raise ValueError(f"unknown mode {mode!r}")
        if sys.bc == "dirichlet" and mode != "primal":
            raise ValueError("dual and synthesis routes require the mixed boundary class")
        self.sys = sys
        self.degrees = (d1, d2)
        self.epsilon = epsilon
        self.mode = mode
        self.kernel_free = kernel_free

        # The whole problem is homogeneous of degree one in the triple, so
        # it is solved with unit coercivity shift and the certificate is
        # scaled by epsilon afterwards; this keeps all Gram blocks on a
        # common scale regardless of how small the requested margin is.
        builder = ProblemBuilder()
        tri, blocks = builder.declare_triple(d1, d2, 1.0, name="lyap")
        self.triple = tri
        self.blocks = blocks

        if kernel_free:
            # multiplier-only ablation: both integral kernels pinned to zero
            builder.constrain_poly_zero(tri.k1)
            builder.constrain_poly_zero(tri.k2)

        if mode in ("primal", "observer"):
            img = m_eps_map(tri, sys, 1.0, mu=poincare_constant(sys.bc))
            self.image = img
            self._targets = (img.q0_22, img.q1, img.q2)
            if mode == "observer":
                pass  # injection gains absorb the w(1) traces
            elif sys.bc == "dirichlet":
                builder.constrain_poly_zero(tri.k1.partial_eval({"x": 1.0}))
            else:
                builder.constrain_scalar_zero(img.q0_11)
                builder.constrain_poly_zero(img.q0_12)
        else:
            img = n_eps_map(tri, sys, 1.0)
            self.image = img
            self._targets = (img.t0_22, img.t1, img.t2)
            if mode == "dual":
                builder.constrain_scalar_zero(img.t0_11)
                builder.constrain_poly_zero(img.t0_12)
            if mode == "control_static":
                builder.constrain_poly_zero(tri.k1)
                builder.constrain_poly_zero(tri.k2)
        builder.constrain_poly_zero(tri.k2.partial_eval({"x": 0.0}))
        self._base = builder
        self.cert_degrees = auto_degrees(
            (self._targets[0], self._targets[1], self._targets[2]), floor=(d1, d2)
        )

    def problem(self, shift: float, name: str | None = None) -> FeasibilityProblem:
        """Problem certifying decay rate ``shift`` (= delta plus any lambda)."""
        b = ProblemBuilder(name or f"{self.mode}_s{shift:g}")
        b.pool = self._base.pool
        b.blocks = list(self._base.blocks)
        b.equalities = list(self._base.equalities)
        m, k1, k2 = self.triple.m, self.triple.k1, self.triple.k2
        s2 = 2.0 * shift
        target = (
            -(self._targets[0]) - m * s2,
            -(self._targets[1]) - k1 * s2,
            -(self._targets[2]) - k2 * s2,
        )
        b.constrain_membership(target, *self.cert_degrees, 0.0, name="decay")
        prob = b.build()
        prob.meta.update(
            mode=self.mode,
            degrees=self.degrees,
            cert_degrees=self.cert_degrees,
            epsilon=self.epsilon,
            shift=shift,
            system=self.sys.describe(),
        )
        return prob

    def _block_degree_plan(self) -> list[tuple[int, int]]:
        """Gram degrees of the four blocks in declaration order."""
        d1, d2 = self.degrees
        g1, g2 = self.cert_degrees
        return [(d1, d2), (d1 - 1, d2 - 1), (g1, g2), (g1 - 1, g2 - 1)]

    def _lift_solve(self, prob: FeasibilityProblem, shift: float, backend) -> SolveOutcome | None:
        """Feasibility by zero-padding a lower-degree certificate.

        Enlarging the Gram degree embeds the smaller monomial basis as a
        prefix (the order is graded), so any verified certificate pads by
        zeros into a certificate of the larger problem with identical
        kernel polynomials.  When the full problem is past the direct
        solver's memory range this answers the feasible side at the cost
        of a small solve; the padded values pass through the same
        independent verification as any solver output.  Returns None when
        no tractable smaller degree certifies, and the caller falls back
        to a genuine oversized solve.
        """
        d1, d2 = self.degrees
        cache = getattr(self, "_lift_sources", None)
        if cache is None:
            cache = self._lift_sources = {}
        for k in range(min(d1, d2) - LIFT_FLOOR, 0, -1):
            small = cache.get(k)
            if small is None:
                small = cache[k] = ShiftedProblemFamily(
                    self.sys, d1 - k, d2 - k, self.epsilon, self.mode, self.kernel_free
                )
            sp = small.problem(shift)
            # cap source cost well below the routing limit: when the probe
            # is infeasible every ladder rung is wasted work, since a small
            # infeasibility never settles the padded problem
            if kkt_weight(sp) > _sdp.CLARABEL_KKT_LIMIT / 4.0:
                break
            t0 = time.perf_counter()
            sout = solve(sp, backend)
            log.info(
                "lift probe degrees=%s shift=%.6g -> %s (%.2fs)",
                small.degrees,
                shift,
                sout.status.value,
                time.perf_counter() - t0,
            )
            if sout.status is not Status.FEASIBLE or sout.values is None:
                continue
            values: dict[int, float] = {}
            for blk in prob.blocks:
                for vid in blk.ids.ravel():
                    values[int(vid)] = 0.0
            for sblk, bblk, sdeg, bdeg in zip(
                sp.blocks, prob.blocks, small._block_degree_plan(), self._block_degree_plan()
            ):
                emb = _embed_positions(sdeg, bdeg)
                for i in range(sblk.size):
                    row = bblk.ids[emb[i]]
                    for j in range(sblk.size):
                        values[int(row[emb[j]])] = float(sout.values[int(sblk.ids[i, j])])
            checks = _verify(prob, values)
            if (
                checks["equality_residual"] <= EQ_RESIDUAL_TOL
                and checks["min_shifted_eigenvalue"] >= -EIG_TOL
            ):
                diag = {
                    "solver": "lift",
                    "lift_source_degrees": small.degrees,
                    "source_solver": sout.diagnostics.get("solver"),
                    "iterations": sout.diagnostics.get("iterations"),
                    "equality_residual": checks["equality_residual"],
                    "min_shifted_eigenvalue": checks["min_shifted_eigenvalue"],
                }
                return SolveOutcome(Status.FEASIBLE, values, checks["blocks"], diag)
        return None

    def solve_at(self, shift: float, backend=None) -> tuple[SolveOutcome, KernelTriple | None]:
        prob = self.problem(shift)
        out = None
        if prefers_splitting(prob) and _auto_routed(backend):
            t0 = time.perf_counter()
            out = self._lift_solve(prob, shift, backend)
            if out is not None:
                out.diagnostics.setdefault("solve_seconds", time.perf_counter() - t0)
        if out is None:
            out = solve(prob, backend)
        tri = None
        if out.feasible and out.values is not None:
            # undo the unit normalization: scaling a coercivity-1 certificate
            # by epsilon (Gram entries and the constant offset together)
            # yields a coercivity-epsilon certificate
            eps = self.epsilon
            unit = self.triple.instantiate(out.values)
            tri = KernelTriple(
                unit.m * eps, unit.k1 * eps, unit.k2 * eps, unit.d1, unit.d2, eps
            )
            out.values = {vid: v * eps for vid, v in out.values.items()}
            if out.block_values is not None:
                out.block_values = {k: v * eps for k, v in out.block_values.items()}
        return out, tri


def _lyap_blocks(out: SolveOutcome) -> dict[str, np.ndarray] | None:
    if not out.block_values:
        return None
    return {k: v for k, v in out.block_values.items() if k.startswith("lyap")}


def stability_test(
    sys: PdeSystem,
    d1: int,
    d2: int | None = None,
    epsilon: float = DEFAULT_EPSILON,
    delta: float = DEFAULT_DELTA,
    backend=None,
    kernel_free: bool = False,
) -> AnalysisReport:
    """Certify exponential decay at rate ``delta`` for the given plant.

    Handles both boundary classes; ``d2`` defaults to ``d1``.
    ``kernel_free`` pins K1 = K2 = 0, leaving a pure multiplier operator.
    """
    if d2 is None:
        d2 = d1
    fam = ShiftedProblemFamily(sys, d1, d2, epsilon, mode="primal", kernel_free=kernel_free)
    out, tri = fam.solve_at(delta, backend)
    gram = _lyap_blocks(out)
    return AnalysisReport(
        out.status, sys, (d1, d2), fam.cert_degrees, epsilon, delta, tri, gram, out
    )


def dual_stability_test(
    sys: PdeSystem,
    d1: int,
    d2: int | None = None,
    epsilon: float = DEFAULT_EPSILON,
    delta: float = DEFAULT_DELTA,
    backend=None,
    kernel_free: bool = False,
) -> AnalysisReport:
    """Certify decay through the dual inequality (P^{-1}-weighted form)."""
    if d2 is None:
        d2 = d1
    fam = ShiftedProblemFamily(sys, d1, d2, epsilon, mode="dual", kernel_free=kernel_free)
    out, tri = fam.solve_at(delta, backend)
    gram = _lyap_blocks(out)
    return AnalysisReport(
        out.status, sys, (d1, d2), fam.cert_degrees, epsilon, delta, tri, gram, out
    )


# ----------------------------------------------------------------------
# sweeps
# ----------------------------------------------------------------------


@dataclass
class ProbeRecord:
    degree: int
    delta: float
    lam: float
    status: Status
    solve_seconds: float


@dataclass
class SweepRow:
    degree: int
    delta: float
    max_value: float | None
    bracket: tuple[float, float]
    exhausted_high: bool = False
    failures: int = 0


@dataclass
class SweepResult:
    parameter: str  # "lambda" or "delta"
    rows: list[SweepRow] = field(default_factory=list)
    probes: list[ProbeRecord] = field(default_factory=list)


class BadBracket(ValueError):
    """The bisection bracket does not straddle the feasibility boundary."""


def _bisect_max_feasible(
    probe: Callable[[float], Status],
    lo: float,
    hi: float,
    resolution: float,
) -> tuple[float | None, bool, int]:
    """Largest probe value with Feasible status, assuming monotone feasibility.

    Returns (max_value, exhausted_high, failure_count).  Numerical failures
    count as non-feasible for bracketing but are tallied separately.
    """
    failures = 0

    def check(v: float) -> bool:
        nonlocal failures
        s = probe(v)
        if s is Status.NUMERICAL_FAILURE:
            failures += 1
        return s is Status.FEASIBLE

    if not check(lo):
        return None, False, failures
    if check(hi):
        return hi, True, failures
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if check(mid):
            lo = mid
        else:
            hi = mid
    return lo, False, failures


def _expand_max_feasible(
    probe: Callable[[float], Status],
    lo: float,
    hi: float,
    resolution: float,
    warm: float | None = None,
) -> tuple[float | None, bool, int]:
    """Like ``_bisect_max_feasible`` but seeded with a known-good value.

    ``warm`` is typically the previous degree's maximum: enlarging the Gram
    degree only widens the cone (zero-padding embeds the smaller certificate),
    so the boundary moves up and the warm value stays feasible.  The search
    expands geometrically from it, starting at the resolution scale, which
    costs two or three probes when the boundary barely moves and stays
    logarithmic when it jumps.
    """
    if warm is None:
        return _bisect_max_feasible(probe, lo, hi, resolution)
    failures = 0

    def check(v: float) -> bool:
        nonlocal failures
        s = probe(v)
        if s is Status.NUMERICAL_FAILURE:
            failures += 1
        return s is Status.FEASIBLE

    base = min(max(warm, lo), hi)
    if not check(base):
        # a numerical wobble can break monotonicity; retreat to a cold
        # bisection below the failed warm start
        if base <= lo:
            return None, False, failures
        hi = base
        if not check(lo):
            return None, False, failures
        base = lo
    lo = base
    if lo >= hi:
        return hi, True, failures
    exhausted = False
    step = resolution
    while hi - lo > resolution:
        cand = min(lo + step, hi)
        if check(cand):
            lo = cand
            exhausted = cand >= hi
            step *= 2.0
        else:
            hi = cand
            break
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if check(mid):
            lo = mid
        else:
            hi = mid
    return lo, exhausted, failures


def lambda_sweep(
    sys: PdeSystem,
    degrees: Sequence[int],
    delta: float = DEFAULT_DELTA,
    epsilon: float = DEFAULT_EPSILON,
    bracket: tuple[float, float] = (0.0, 12.0),
    resolution: float = 1e-3,
    backend=None,
    mode: str = "primal",
    kernel_free: bool = False,
) -> SweepResult:
    """Largest certifiable reaction shift lambda per degree, by bisection.

    The plant family is ``sys`` with reaction c + lambda; thanks to the
    affine shift identity each probe reuses the symbolic image computed
    once per degree.  Each degree warm-starts from the previous maximum,
    which cone inclusion keeps feasible.
    """
    result = SweepResult("lambda")
    warm: float | None = None
    for d in degrees:
        fam = ShiftedProblemFamily(sys, d, d, epsilon, mode=mode, kernel_free=kernel_free)

        def probe(lam: float) -> Status:
            t0 = time.perf_counter()
            out, _ = fam.solve_at(delta + lam, backend)
            dt = time.perf_counter() - t0
            result.probes.append(ProbeRecord(d, delta, lam, out.status, dt))
            log.info(
                "lambda probe d=%d lambda=%.6g -> %s (%.2fs)",
                d,
                lam,
                out.status.value,
                dt,
            )
            return out.status

        best, exhausted, failures = _expand_max_feasible(
            probe, bracket[0], bracket[1], resolution, warm=warm
        )
        result.rows.append(
            SweepRow(d, delta, best, tuple(bracket), exhausted, failures)
        )
        if best is not None:
            warm = best
    return result


def delta_sweep(
    sys: PdeSystem,
    degrees: Sequence[int],
    epsilon: float = DEFAULT_EPSILON,
    bracket: tuple[float, float] = (1e-3, 64.0),
    resolution: float = 1e-3,
    backend=None,
    mode: str = "control",
    kernel_free: bool = False,
) -> SweepResult:
    """Largest certifiable decay rate delta per degree (synthesis by default)."""
    result = SweepResult("delta")
    warm: float | None = None
    for d in degrees:
        fam = ShiftedProblemFamily(sys, d, d, epsilon, mode=mode, kernel_free=kernel_free)

        def probe(delta: float) -> Status:
            t0 = time.perf_counter()
            out, _ = fam.solve_at(delta, backend)
            dt = time.perf_counter() - t0
            result.probes.append(ProbeRecord(d, delta, 0.0, out.status, dt))
            log.info(
                "delta probe d=%d delta=%.6g -> %s (%.2fs)", d, delta, out.status.value, dt
            )
            return out.status

        best, exhausted, failures = _expand_max_feasible(
            probe, bracket[0], bracket[1], resolution, warm=warm
        )
        result.rows.append(SweepRow(d, 0.0, best, tuple(bracket), exhausted, failures))
        if best is not None:
            warm = best
    return result
