"""Artifact writers: delimited tables, certificate files, gain exports, figures.

Data files are deterministic: identical inputs produce byte-identical
output, so nothing wall-clock dependent goes into them.  Solve timings and
probe traces go to a separate plain-text log instead.  Figures are rendered
through the Agg canvas next to the tables they visualize.
"""

from __future__ import annotations

import json
import os
from typing import Sequence

import numpy as np

from .kernels import KernelTriple
from .polynomials import Poly

__all__ = [
    "write_sweep_csv",
    "write_probe_log",
    "write_certificate",
    "write_gains",
    "write_observer_gains",
    "write_residual_csv",
    "plot_sweep",
    "plot_trace",
    "plot_residuals",
    "fmt",
]


def fmt(x: float) -> str:
    """Fixed shortest-round-trip float formatting shared by all writers."""
    return f"{float(x):.12g}"


def _poly_coeff_rows(p: Poly) -> list[tuple[str, str]]:
    """(monomial, coefficient) rows in a deterministic graded order."""
    rows = []
    for exps in sorted(p.terms, key=lambda e: (sum(e), e)):
        mono = "*".join(
            f"{v}^{k}" if k > 1 else v
            for v, k in zip(p.vars, exps)
            if k > 0
        ) or "1"
        rows.append((mono, fmt(p.terms[exps])))
    return rows


# ----------------------------------------------------------------------
# sweeps
# ----------------------------------------------------------------------


def write_sweep_csv(result, path) -> None:
    """One row per degree, mirroring the degree-by-value table layout."""
    col = "max_lambda" if result.parameter == "lambda" else "max_delta"
    lines = [f"degree,{col},bracket_lo,bracket_hi,exhausted_high,failures"]
    for row in result.rows:
        val = fmt(row.max_value) if row.max_value is not None else ""
        lines.append(
            f"{row.degree},{val},{fmt(row.bracket[0])},{fmt(row.bracket[1])},"
            f"{int(row.exhausted_high)},{row.failures}"
        )
    _write_text(path, "\n".join(lines) + "\n")


def write_probe_log(result, path) -> None:
    """Per-probe timing log; kept apart so data files stay reproducible."""
    lines = []
    for p in result.probes:
        lines.append(
            f"degree={p.degree} delta={fmt(p.delta)} lambda={fmt(p.lam)} "
            f"status={p.status.value} seconds={p.solve_seconds:.3f}"
        )
    _write_text(path, "\n".join(lines) + "\n")


# ----------------------------------------------------------------------
# certificates and gains
# ----------------------------------------------------------------------


def _poly_payload(p: Poly) -> dict:
    return {
        "vars": list(p.vars),
        "terms": [[list(e), float(c)] for e, c in sorted(p.terms.items())],
    }


def _triple_payload(tri: KernelTriple) -> dict:
    return {
        "m": _poly_payload(tri.m),
        "k1": _poly_payload(tri.k1),
        "k2": _poly_payload(tri.k2),
        "degrees": [tri.d1, tri.d2],
        "epsilon": tri.epsilon,
    }


def write_certificate(report, path) -> None:
    """Everything needed to re-verify a Feasible claim offline.

    Gram blocks with their PSD shifts, the instantiated kernel triple, and
    the residuals of the independent check that admitted the claim.
    """
    out = report.outcome
    if out is None:
        raise ValueError("report carries no solve outcome to certify")
    payload = {
        "status": report.status.value,
        "system": report.sys.describe(),
        "degrees": list(report.degrees),
        "certificate_degrees": list(report.cert_degrees),
        "epsilon": report.epsilon,
        "delta": report.delta,
        "residuals": {
            "equality": out.diagnostics.get("equality_residual"),
            "min_shifted_eigenvalue": out.diagnostics.get("min_shifted_eigenvalue"),
        },
        "solver": {
            k: out.diagnostics.get(k)
            for k in ("solver", "solver_status", "iterations", "lift_source_degrees")
            if out.diagnostics.get(k) is not None
        },
    }
    if report.triple is not None:
        payload["triple"] = _triple_payload(report.triple)
    if out.block_values:
        payload["gram_blocks"] = {
            name: [[float(v) for v in row] for row in mat]
            for name, mat in sorted(out.block_values.items())
        }
    _write_text(path, json.dumps(payload, indent=1, sort_keys=True) + "\n")


def write_gains(gains, path, grid_nodes: int = 201) -> None:
    """Boundary feedback export: scalar gain, kernel trace, certificate
    triple coefficients, and the grid realization of the feedback row."""
    lines = ["[boundary_gain]", f"r1 = {fmt(gains.r1)}", "", "[kernel_gain]"]
    for mono, c in _poly_coeff_rows(gains.r2):
        lines.append(f"{mono} = {c}")
    lines.append("")
    lines.append("[certificate_triple]")
    for name, poly in (("m", gains.p_c.m), ("k1", gains.p_c.k1), ("k2", gains.p_c.k2)):
        for mono, c in _poly_coeff_rows(poly):
            lines.append(f"{name}.{mono} = {c}")
    _write_text(path, "\n".join(lines) + "\n")
    law = gains.realize(grid_nodes)
    base, _ = os.path.splitext(str(path))
    rows = ["x,weight"]
    for x, w in zip(law.grid, law.weights):
        rows.append(f"{fmt(x)},{fmt(w)}")
    _write_text(base + "_grid.csv", "\n".join(rows) + "\n")


def write_observer_gains(gains, path, grid_nodes: int = 201) -> None:
    lines = ["[boundary_injection]", f"o1 = {fmt(gains.o1)}", "", "[kernel_injection]"]
    for mono, c in _poly_coeff_rows(gains.v_kernel):
        lines.append(f"{mono} = {c}")
    lines.append("")
    lines.append("[certificate_triple]")
    for name, poly in (("m", gains.p_o.m), ("k1", gains.p_o.k1), ("k2", gains.p_o.k2)):
        for mono, c in _poly_coeff_rows(poly):
            lines.append(f"{name}.{mono} = {c}")
    _write_text(path, "\n".join(lines) + "\n")
    law = gains.realize(grid_nodes)
    base, _ = os.path.splitext(str(path))
    rows = ["x,profile"]
    for x, w in zip(law.grid, law.profile):
        rows.append(f"{fmt(x)},{fmt(w)}")
    _write_text(base + "_grid.csv", "\n".join(rows) + "\n")


def write_residual_csv(orders: Sequence[int], residuals: Sequence[float], path) -> None:
    lines = ["K,residual"]
    for k, r in zip(orders, residuals):
        lines.append(f"{k},{fmt(r)}")
    _write_text(path, "\n".join(lines) + "\n")


# ----------------------------------------------------------------------
# figures
# ----------------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def plot_sweep(result, path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ds = [r.degree for r in result.rows if r.max_value is not None]
    vs = [r.max_value for r in result.rows if r.max_value is not None]
    ax.plot(ds, vs, "o-")
    ax.set_xlabel("degree")
    label = "max lambda" if result.parameter == "lambda" else "max delta"
    ax.set_ylabel(label)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_trace(trace, path, lyapunov=None) -> None:
    """State norm (log scale) and input; Lyapunov panel when provided."""
    plt = _pyplot()
    panels = 2 if lyapunov is None else 3
    fig, axes = plt.subplots(panels, 1, figsize=(5.5, 2.2 * panels), sharex=True)
    axes[0].semilogy(trace.times, np.maximum(trace.norms, 1e-300))
    axes[0].set_ylabel("||w||")
    axes[0].grid(True, alpha=0.3)
    axes[1].plot(trace.times, trace.inputs)
    axes[1].set_ylabel("u")
    axes[1].grid(True, alpha=0.3)
    if lyapunov is not None:
        v, vdot = lyapunov
        axes[2].semilogy(trace.times, np.maximum(v, 1e-300), label="V")
        axes[2].set_ylabel("V")
        axes[2].grid(True, alpha=0.3)
    axes[-1].set_xlabel("t")
    if trace.blowup:
        axes[0].set_title("stopped early: norm blowup", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_residuals(orders, residuals, path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.semilogy(list(orders), list(residuals), "s-")
    ax.set_xlabel("series order K")
    ax.set_ylabel("inverse residual")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
