"""Finite-difference simulation of the boundary-controlled parabolic plant.

Space is a uniform grid on [0, 1] with second-order central differences;
time stepping is Crank-Nicolson, unconditionally stable for the stiff
diffusion operator, so the step size only sets accuracy.  The left
Dirichlet condition is imposed exactly.  The right Neumann condition
enters through a second-order ghost node, w_ghost = w_{n-2} + 2 dx u,
which keeps w_x(1) = u to the order of the interior stencil.

Three loop shapes share one integrator: open loop (u = 0), full state
feedback u = F w, and the coupled plant/observer pair where the plant is
driven by u = F w_hat and the observer corrects itself with the boundary
mismatch w_hat(1, t) - w(1, t).  Every feedback law is linear, so folding
it into the one-step map is exactly the same as recomputing u from the
current grid state at each step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .kernels import DiscreteOperator, KernelTriple, discretize, simpson_weights, uniform_grid
from .observer import OutputFeedback
from .synthesis import ControllerGains, FeedbackLaw
from .systems import PdeSystem

__all__ = [
    "BLOWUP_NORM",
    "GridMismatch",
    "SimulationTrace",
    "simulate",
    "lyapunov_trace",
    "empirical_margin",
    "fitted_decay_exponent",
    "write_trace_csv",
    "two_bump_profile",
    "quarter_wave",
    "half_wave",
    "W0_PRESETS",
]

# norm threshold past which the loop is declared blown up and the
# integration stops with a partial trace
BLOWUP_NORM = 1e12

DEFAULT_T = 3.0
DEFAULT_DT = 1e-4
DEFAULT_N = 201


class GridMismatch(ValueError):
    """Trace grid and operator grid disagree."""


# ----------------------------------------------------------------------
# initial-state presets
# ----------------------------------------------------------------------


def two_bump_profile(x: np.ndarray) -> np.ndarray:
    """Antisymmetric pair of narrow Gaussian bumps, a rich excitation."""
    return np.exp(-((x - 0.3) ** 2) / (2 * 0.07**2)) - np.exp(
        -((x - 0.7) ** 2) / (2 * 0.07**2)
    )


def quarter_wave(x: np.ndarray) -> np.ndarray:
    """sin(pi x / 2): fundamental mode of the Dirichlet/Neumann pair."""
    return np.sin(0.5 * np.pi * x)


def half_wave(x: np.ndarray) -> np.ndarray:
    """sin(pi x): fundamental mode of the Dirichlet/Dirichlet pair."""
    return np.sin(np.pi * x)


W0_PRESETS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "two_bump": two_bump_profile,
    "quarter_wave": quarter_wave,
    "half_wave": half_wave,
}


# ----------------------------------------------------------------------
# trace container
# ----------------------------------------------------------------------


@dataclass
class SimulationTrace:
    """Time series of one simulation run.

    ``states`` is (time x node); ``norms`` holds the quadrature L2 norm of
    each row and is recomputable from ``states`` and the standard weights.
    ``blowup`` marks a run stopped early because the norm passed
    ``BLOWUP_NORM``; the arrays then cover only the completed steps.
    """

    times: np.ndarray
    grid: np.ndarray
    states: np.ndarray
    norms: np.ndarray
    inputs: np.ndarray
    observer_states: np.ndarray | None = None
    blowup: bool = False

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def recompute_norms(self) -> np.ndarray:
        w = simpson_weights(len(self.grid))
        return np.sqrt(np.einsum("tj,j,tj->t", self.states, w, self.states))


# ----------------------------------------------------------------------
# semi-discretization
# ----------------------------------------------------------------------


def _rhs_matrix(sys: PdeSystem, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference matrix A and boundary input vector B.

    Row 0 is zero so the exact left Dirichlet value never moves.  For the
    mixed class the last row eliminates the ghost node; the input enters
    with weight 2 a(1)/dx + b(1) because w_x(1) = u replaces the first
    derivative stencil there as well.  For the Dirichlet class the last
    row is zero and there is no input.
    """
    n = len(grid)
    h = float(grid[1] - grid[0])
    a = sys.a.eval_grid({"x": grid}) * np.ones(n)
    b = sys.b.eval_grid({"x": grid}) * np.ones(n)
    c = sys.c.eval_grid({"x": grid}) * np.ones(n)
    mat = np.zeros((n, n))
    idx = np.arange(1, n - 1)
    mat[idx, idx - 1] = a[idx] / h**2 - b[idx] / (2 * h)
    mat[idx, idx] = -2 * a[idx] / h**2 + c[idx]
    mat[idx, idx + 1] = a[idx] / h**2 + b[idx] / (2 * h)
    bvec = np.zeros(n)
    if sys.bc == "mixed":
        k = n - 1
        mat[k, k - 1] = 2 * a[k] / h**2
        mat[k, k] = -2 * a[k] / h**2 + c[k]
        bvec[k] = 2 * a[k] / h + b[k]
    else:
        mat[n - 1, :] = 0.0
    return mat, bvec


def _initial_vector(w0, grid: np.ndarray, bc: str) -> np.ndarray:
    if callable(w0):
        v = np.asarray(w0(grid), dtype=float)
    else:
        v = np.asarray(w0, dtype=float)
    if v.shape != grid.shape:
        raise ValueError(f"initial state has {v.shape}, grid needs {grid.shape}")
    v = v.copy()
    v[0] = 0.0  # boundary values are pinned, not evolved
    if bc == "dirichlet":
        v[-1] = 0.0
    return v


def simulate(
    sys: PdeSystem,
    bc_input: ControllerGains | FeedbackLaw | OutputFeedback | str | None = None,
    w0=two_bump_profile,
    w0_hat=None,
    T: float = DEFAULT_T,
    dt: float = DEFAULT_DT,
    N: int = DEFAULT_N,
) -> SimulationTrace:
    """Integrate the plant (optionally with feedback) and record a trace.

    ``bc_input`` selects the loop: None or "zero" for open loop, a
    ``ControllerGains``/``FeedbackLaw`` for state feedback, or an
    ``OutputFeedback`` pair for the coupled plant/observer system (then
    ``w0_hat`` seeds the observer, zero by default).  ``N`` counts grid
    nodes and must be odd so the quadrature rule applies.
    """
    if N < 65 or N % 2 == 0:
        raise ValueError("N must be an odd node count >= 65")
    if dt <= 0 or T < dt:
        raise ValueError("need 0 < dt <= T")
    grid = uniform_grid(N)
    wq = simpson_weights(N)
    amat, bvec = _rhs_matrix(sys, grid)

    coupled = False
    fweights = None
    if bc_input is None or bc_input == "zero":
        cl = amat
    elif isinstance(bc_input, (ControllerGains, FeedbackLaw)):
        law = bc_input.realize(N) if isinstance(bc_input, ControllerGains) else bc_input
        if len(law.grid) != N:
            raise GridMismatch(f"feedback realized on {len(law.grid)} nodes, grid has {N}")
        fweights = law.weights
        cl = amat + np.outer(bvec, fweights)
    elif isinstance(bc_input, OutputFeedback):
        coupled = True
        law = bc_input.controller.realize(N)
        inj = bc_input.observer.realize(N)
        fweights = law.weights
        h = float(grid[1] - grid[0])
        a1 = float(sys.a.eval_grid({"x": grid[-1:]}))
        b1 = float(sys.b.eval_grid({"x": grid[-1:]}))
        cl = np.zeros((2 * N, 2 * N))
        cl[:N, :N] = amat
        cl[:N, N:] = np.outer(bvec, fweights)  # plant driven by u = F w_hat
        cl[N:, N:] = amat + np.outer(bvec, fweights)
        prof = inj.profile.copy()
        prof[0] = 0.0  # observer keeps its exact Dirichlet value
        # ghost elimination carries the boundary part of the injection
        prof[N - 1] += (2 * a1 / h + b1) * inj.o1
        cl[N:, N - 1] -= prof
        cl[N:, 2 * N - 1] += prof
    else:
        raise TypeError(f"unsupported bc_input {bc_input!r}")

    v = _initial_vector(w0, grid, sys.bc)
    if coupled:
        vh = (
            np.zeros(N)
            if w0_hat is None
            else _initial_vector(w0_hat, grid, sys.bc)
        )
        v = np.concatenate([v, vh])

    size = cl.shape[0]
    m1 = np.eye(size) - 0.5 * dt * cl
    m2 = np.eye(size) + 0.5 * dt * cl
    lu = lu_factor(m1)

    steps = int(round(T / dt))
    times = np.arange(steps + 1) * dt
    states = np.empty((steps + 1, N))
    observer = np.empty((steps + 1, N)) if coupled else None
    norms = np.empty(steps + 1)
    inputs = np.zeros(steps + 1)

    def record(k: int, vec: np.ndarray) -> float:
        plant = vec[:N]
        states[k] = plant
        if coupled:
            observer[k] = vec[N:]
        nrm = math.sqrt(float(wq @ (plant * plant)))
        norms[k] = nrm
        if fweights is not None:
            src = vec[N:] if coupled else plant
            inputs[k] = float(fweights @ src)
        return nrm

    record(0, v)
    blowup = False
    last = steps
    for k in range(1, steps + 1):
        v = lu_solve(lu, m2 @ v)
        if record(k, v) > BLOWUP_NORM:
            blowup = True
            last = k
            break

    sl = slice(0, last + 1)
    return SimulationTrace(
        times=times[sl],
        grid=grid,
        states=states[sl],
        norms=norms[sl],
        inputs=inputs[sl],
        observer_states=observer[sl] if coupled else None,
        blowup=blowup,
    )


# ----------------------------------------------------------------------
# Lyapunov traces and empirical margins
# ----------------------------------------------------------------------


def lyapunov_trace(
    trace: SimulationTrace,
    tri: KernelTriple,
    mode: str = "direct",
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate V(t) along a trace and its centered-difference rate.

    Direct mode evaluates <w, P w> with P the discretized triple; inverse
    mode evaluates <w, P^{-1} w>, the certificate form of the dual and
    synthesis tests.  The trace must have been produced on the operator's
    grid.
    """
    if mode not in ("direct", "inverse"):
        raise ValueError(f"unknown mode {mode!r}")
    op = discretize(tri, n=len(trace.grid))
    if op.grid.shape != trace.grid.shape or not np.allclose(
        op.grid, trace.grid, atol=1e-12
    ):
        raise GridMismatch("trace grid differs from operator grid")
    wt = trace.states.T  # node x time
    if mode == "direct":
        y = op.matrix @ wt
    else:
        y = lu_solve(lu_factor(op.matrix), wt)
    v = np.einsum("jt,j,jt->t", wt, op.weights, y)
    vdot = np.gradient(v, trace.times)
    return v, vdot


def fitted_decay_exponent(
    trace: SimulationTrace, window: tuple[float, float] | None = None
) -> float:
    """Slope of the log-linear fit of the norm over the tail window.

    Defaults to the second half of the available trace.  Negative means
    the loop is decaying.
    """
    t = trace.times
    if window is None:
        window = (t[-1] / 2, t[-1])
    mask = (t >= window[0]) & (t <= window[1])
    if mask.sum() < 2:
        raise ValueError("fit window holds fewer than two samples")
    logn = np.log(np.maximum(trace.norms[mask], 1e-300))
    slope, _ = np.polyfit(t[mask], logn, 1)
    return float(slope)


def empirical_margin(
    family: Callable[[float], PdeSystem],
    lams: Sequence[float],
    T: float = DEFAULT_T,
    dt: float = DEFAULT_DT,
    N: int = DEFAULT_N,
) -> float | None:
    """Largest grid value of lambda whose open-loop norm decays.

    Decay is judged by the sign of the log-linear slope over [T/2, T].
    Shifting the reaction term moves every eigenvalue by the same amount,
    so the verdict is monotone in lambda and the sorted grid is searched
    by bisection.  Returns None when even the smallest value grows.
    """
    lams = sorted(float(v) for v in lams)
    bc = family(lams[0]).bc
    w0 = quarter_wave if bc == "mixed" else half_wave

    def decays(lam: float) -> bool:
        tr = simulate(family(lam), None, w0=w0, T=T, dt=dt, N=N)
        return (not tr.blowup) and fitted_decay_exponent(tr) < 0.0

    lo, hi = 0, len(lams) - 1
    if not decays(lams[lo]):
        return None
    if decays(lams[hi]):
        return lams[hi]
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if decays(lams[mid]):
            lo = mid
        else:
            hi = mid
    return lams[lo]


# ----------------------------------------------------------------------
# export
# ----------------------------------------------------------------------


def write_trace_csv(
    trace: SimulationTrace,
    path,
    lyapunov: tuple[np.ndarray, np.ndarray] | None = None,
) -> None:
    """Write (t, x0..xN, norm, u, V, Vdot) rows; V columns are nan-filled
    when no Lyapunov trace is supplied.  Plain decimal text, gnuplot reads
    it with `set datafile separator comma`."""
    m, n = trace.states.shape
    if lyapunov is None:
        v = np.full(m, np.nan)
        vdot = np.full(m, np.nan)
    else:
        v, vdot = lyapunov
    data = np.column_stack(
        [trace.times, trace.states, trace.norms, trace.inputs, v, vdot]
    )
    header = (
        "t,"
        + ",".join(f"x{i}" for i in range(n))
        + ",norm,u,V,Vdot"
    )
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.12g")
