"""Output-injection (Luenberger) observer synthesis.

The error e = what - w obeys the plant dynamics driven by the output error
e(1, t) through a distributed injection O and a boundary gain O1.  Its
Lyapunov derivative is the primal image of the observer triple, and the
injection pair is chosen to cancel the e(1) traces exactly:

    O1 = -Q0_11 / (2 a(1) M_o(1)),
    V(x) = -Q0_12(x) - O1 a(1) K1_o(1, x),

with the realized injection O = P_o^{-1} V.  Expanding Q0_12 shows V is
also (a'(1) - O1 a(1) - b(1)) K1_o(1, x) + a(1) K1_o_x(1, x); note the
b(1) M_o(1) term inside O1, without which the e(1)^2 trace survives with
the wrong sign whenever b(1) is nonzero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import DEFAULT_GRID_SIZE, KernelTriple
from .loi import m_eps_map
from .polynomials import Poly
from .stability import (
    DEFAULT_DELTA,
    DEFAULT_EPSILON,
    AnalysisReport,
    ShiftedProblemFamily,
    _lyap_blocks,
)
from .synthesis import ControllerGains, SynthesisInfeasible, _inverse_matrix
from .systems import PdeSystem

__all__ = [
    "IncompatibleSystems",
    "InjectionLaw",
    "ObserverGains",
    "OutputFeedback",
    "assemble_output_feedback",
    "extract_observer_gains",
    "synthesize_observer",
]


class IncompatibleSystems(ValueError):
    """Controller and observer were synthesized for different plants."""


@dataclass(frozen=True)
class InjectionLaw:
    """(O r)(x) = profile(x) * r on a fixed grid, plus the boundary gain."""

    grid: np.ndarray
    profile: np.ndarray
    o1: float
    inversion_residual: float
    method: str

    def __call__(self, r: float) -> np.ndarray:
        return self.profile * r


def _k1_trace(k1: Poly) -> Poly:
    """K1(1, s) as a polynomial in x."""
    return k1.partial_eval({"x": 1.0}).rename({"y": "x"})


def extract_observer_gains(tri: KernelTriple, sys: PdeSystem) -> tuple[float, Poly]:
    """(O1, V kernel) cancelling the boundary traces of the primal image."""
    img = m_eps_map(tri, sys, tri.epsilon)
    a1 = float(sys.a.evaluate({"x": 1.0}))
    m1 = float(tri.m.evaluate({"x": 1.0}))
    if m1 <= 0.0:
        raise ValueError(f"observer multiplier M(1) = {m1:g} is not positive")
    o1 = -float(img.q0_11) / (2.0 * a1 * m1)
    v_kernel = img.q0_12 * (-1.0) + _k1_trace(tri.k1) * (-o1 * a1)
    return o1, v_kernel


@dataclass
class ObserverGains:
    """Feasible observer triple with its output-injection realization."""

    sys: PdeSystem
    p_o: KernelTriple
    o1: float
    v_kernel: Poly
    epsilon: float
    delta: float
    report: AnalysisReport
    _laws: dict[int, InjectionLaw] = field(default_factory=dict, repr=False)

    def realize(self, n: int = DEFAULT_GRID_SIZE) -> InjectionLaw:
        """Grid realization of O = P_o^{-1} V; cached per grid size."""
        law = self._laws.get(n)
        if law is None:
            grid, binv, resid, method = _inverse_matrix(self.p_o, n)
            v = (
                self.v_kernel.eval_grid({"x": grid}) * np.ones_like(grid)
                if not self.v_kernel.is_zero()
                else np.zeros_like(grid)
            )
            law = InjectionLaw(grid, binv @ v, self.o1, resid, method)
            self._laws[n] = law
        return law


def synthesize_observer(
    sys: PdeSystem,
    d1: int,
    d2: int | None = None,
    epsilon: float = DEFAULT_EPSILON,
    delta: float = DEFAULT_DELTA,
    backend=None,
) -> ObserverGains:
    """Solve the observer problem and extract the injection gains.

    The feasibility problem is the primal image membership with only
    K2(0, .) = 0; the w(1)-trace cancellations are delegated to the gains.
    Raises SynthesisInfeasible when no certificate exists.
    """
    if d2 is None:
        d2 = d1
    fam = ShiftedProblemFamily(sys, d1, d2, epsilon, mode="observer")
    out, tri = fam.solve_at(delta, backend)
    report = AnalysisReport(
        out.status, sys, (d1, d2), fam.cert_degrees, epsilon, delta, tri,
        _lyap_blocks(out), out,
    )
    if not report.feasible or tri is None:
        raise SynthesisInfeasible(report)
    o1, v_kernel = extract_observer_gains(tri, sys)
    return ObserverGains(sys, tri, o1, v_kernel, epsilon, delta, report)


@dataclass(frozen=True)
class OutputFeedback:
    """Coupled observer-based controller: u = F what, injection from z - zhat.

    Immutable after assembly; the simulator consumes it to advance plant
    and observer as one linear system per step.
    """

    sys: PdeSystem
    controller: ControllerGains
    observer: ObserverGains


def assemble_output_feedback(
    ctrl: ControllerGains, obs: ObserverGains
) -> OutputFeedback:
    if ctrl.sys != obs.sys:
        raise IncompatibleSystems(
            f"controller plant {ctrl.sys.describe()} != observer plant {obs.sys.describe()}"
        )
    return OutputFeedback(ctrl.sys, ctrl, obs)
