"""Boundary state-feedback synthesis through the dual operator route.

The synthesis problem certifies d/dt <y, P y> <= -2 delta <y, P y> for the
transformed state y = P^{-1} w, so the decision variables parameterize the
inverse Lyapunov operator and the feedback u = Z y acts on y directly.
Substituting u into the boundary terms shows that the choice

    R1 = -T0_11 / (2 a(1)),        R2(x) = -T0_12(x) / a(1)

cancels the w(1) traces identically, which is why the feasibility problem
carries no trace constraints beyond K2(0, .) = 0.  The realized feedback on
a grid is u = z' P^{-1} w with z the quadrature row of Z.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import (
    DEFAULT_GRID_SIZE,
    KernelTriple,
    SeriesDiverging,
    discretize,
    neumann_inverse,
    simpson_weights,
)
from .loi import TTuple, n_eps_map
from .polynomials import Poly
from .stability import (
    DEFAULT_DELTA,
    DEFAULT_EPSILON,
    AnalysisReport,
    ShiftedProblemFamily,
    _lyap_blocks,
    delta_sweep,
)
from .systems import PdeSystem

__all__ = [
    "ControllerGains",
    "FeedbackLaw",
    "InversionFailed",
    "SynthesisInfeasible",
    "boundary_cancellation",
    "delta_sweep",
    "extract_gains",
    "n_eps_map",
    "synthesize_controller",
    "TTuple",
]

INVERSION_RESIDUAL_TOL = 1e-6

# Neumann contraction only holds for small kernels; certificates with
# working kernels get the direct factorization instead.
NEUMANN_ORDER = 60


class SynthesisInfeasible(RuntimeError):
    """No certificate exists at the requested decay rate."""

    def __init__(self, report: AnalysisReport) -> None:
        super().__init__(
            f"synthesis at delta={report.delta:g} returned {report.status.value}"
        )
        self.report = report


class InversionFailed(RuntimeError):
    """The grid realization of P^{-1} missed the residual gate."""


@dataclass(frozen=True)
class FeedbackLaw:
    """u = F w realized as one weight row against grid samples of w."""

    grid: np.ndarray
    weights: np.ndarray
    inversion_residual: float
    method: str  # "neumann" or "lu"

    def __call__(self, w: np.ndarray) -> float:
        return float(self.weights @ w)


def _boundary_row(r1: float, r2: Poly, grid: np.ndarray) -> np.ndarray:
    z = np.zeros_like(grid)
    z[-1] = r1
    if not r2.is_zero():
        z = z + simpson_weights(len(grid)) * r2.eval_grid({"x": grid})
    return z


def _inverse_matrix(tri: KernelTriple, n: int) -> tuple[np.ndarray, np.ndarray, float, str]:
    """(grid, approximate inverse matrix, probe residual, method)."""
    try:
        inv = neumann_inverse(tri, order=NEUMANN_ORDER, tol=1e-10, n=n)
        if inv.residual is not None and inv.residual <= INVERSION_RESIDUAL_TOL:
            return inv.grid, inv.matrix, inv.residual, "neumann"
    except SeriesDiverging:
        pass
    op = discretize(tri, n)
    try:
        b = np.linalg.solve(op.matrix, np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise InversionFailed(f"collocation matrix is singular: {exc}") from exc
    xs = op.grid
    probes = np.stack(
        [np.sin(np.pi * xs), xs * xs * (1.0 - xs), np.cos(2.0 * np.pi * xs)], axis=1
    )
    err = op.matrix @ (b @ probes) - probes
    resid = max(
        op.norm(err[:, j]) / op.norm(probes[:, j]) for j in range(probes.shape[1])
    )
    if resid > INVERSION_RESIDUAL_TOL:
        raise InversionFailed(f"inverse residual {resid:.3e} above gate")
    return op.grid, b, float(resid), "lu"


def extract_gains(tri: KernelTriple, sys: PdeSystem) -> tuple[float, Poly]:
    """Feedback gains from a numeric dual certificate."""
    img = n_eps_map(tri, sys, tri.epsilon)
    a1 = float(sys.a.evaluate({"x": 1.0}))
    r1 = -float(img.t0_11) / (2.0 * a1)
    r2 = img.t0_12 * (-1.0 / a1)
    return r1, r2


def boundary_cancellation(
    tri: KernelTriple, sys: PdeSystem, r1: float, r2: Poly
) -> tuple[float, Poly]:
    """Residuals of the trace cancellation; both vanish for correct gains."""
    img = n_eps_map(tri, sys, tri.epsilon)
    a1 = float(sys.a.evaluate({"x": 1.0}))
    return float(img.t0_11) + 2.0 * a1 * r1, img.t0_12 + r2 * a1


@dataclass
class ControllerGains:
    """Feasible dual triple with the boundary feedback it induces."""

    sys: PdeSystem
    p_c: KernelTriple
    r1: float
    r2: Poly
    epsilon: float
    delta: float
    static_variant: bool
    report: AnalysisReport
    _laws: dict[int, FeedbackLaw] = field(default_factory=dict, repr=False)

    def realize(self, n: int = DEFAULT_GRID_SIZE) -> FeedbackLaw:
        """Grid functional computing u = Z P^{-1} w; cached per grid size."""
        law = self._laws.get(n)
        if law is None:
            grid, binv, resid, method = _inverse_matrix(self.p_c, n)
            z = _boundary_row(self.r1, self.r2, grid)
            law = FeedbackLaw(grid, binv.T @ z, resid, method)
            self._laws[n] = law
        return law

    def __call__(self, w: np.ndarray) -> float:
        return self.realize(len(w))(w)


def synthesize_controller(
    sys: PdeSystem,
    d1: int,
    d2: int | None = None,
    epsilon: float = DEFAULT_EPSILON,
    delta: float = DEFAULT_DELTA,
    static_variant: bool = False,
    backend=None,
) -> ControllerGains:
    """Solve the synthesis problem and extract the stabilizing gains.

    ``static_variant`` pins both kernels, forcing R2 = 0; the result is a
    pure boundary-value feedback u = R1 w(1).  Raises SynthesisInfeasible
    when no certificate exists at the requested (epsilon, delta).
    """
    if d2 is None:
        d2 = d1
    mode = "control_static" if static_variant else "control"
    fam = ShiftedProblemFamily(sys, d1, d2, epsilon, mode=mode)
    out, tri = fam.solve_at(delta, backend)
    report = AnalysisReport(
        out.status, sys, (d1, d2), fam.cert_degrees, epsilon, delta, tri,
        _lyap_blocks(out), out,
    )
    if not report.feasible or tri is None:
        raise SynthesisInfeasible(report)
    r1, r2 = extract_gains(tri, sys)
    return ControllerGains(sys, tri, r1, r2, epsilon, delta, static_variant, report)
