"""Command-line front end.

Six commands, one flat config file each (see config.py for the format):

    soslyap analyze     --config plant.cfg [--out DIR]
    soslyap synthesize  --config plant.cfg [--out DIR]
    soslyap observe     --config plant.cfg [--out DIR]
    soslyap simulate    --config plant.cfg [--out DIR]
    soslyap sweep       --config plant.cfg [--out DIR] [--jobs N]
    soslyap invert-demo --config demo.cfg  [--out DIR]

Verdicts go to stdout, progress and diagnostics to stderr, data to files
in the output directory (tables as comma-delimited text, figures as png
next to them).  Exit status: 0 feasible or completed, 1 infeasible,
2 numerical or backend failure, 3 bad configuration.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import reporting
from .config import ConfigError, JobConfig, build_system, load_config, resolve_profile
from .kernels import (
    MNotPositive,
    SeriesDiverging,
    build_from_gram,
    inversion_demo_certificate,
    neumann_inverse,
)
from .observer import assemble_output_feedback, synthesize_observer
from .pde_sim import (
    fitted_decay_exponent,
    lyapunov_trace,
    simulate,
    write_trace_csv,
)
from .sdp import Status
from .stability import (
    BadBracket,
    SweepResult,
    delta_sweep,
    dual_stability_test,
    lambda_sweep,
    stability_test,
)
from .synthesis import InversionFailed, SynthesisInfeasible, synthesize_controller

EXIT_FEASIBLE = 0
EXIT_INFEASIBLE = 1
EXIT_NUMERICAL = 2
EXIT_CONFIG = 3


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _resolve_mode(cfg: JobConfig) -> str:
    # analysis defaults to the primal inequality, which serves both
    # boundary classes; dual and synthesis modes are opt-in
    return "primal" if cfg.mode == "auto" else cfg.mode


def _status_exit(status: Status) -> int:
    if status is Status.FEASIBLE:
        return EXIT_FEASIBLE
    if status is Status.INFEASIBLE:
        return EXIT_INFEASIBLE
    return EXIT_NUMERICAL


def _outdir(cfg: JobConfig, args) -> str:
    out = args.out or cfg.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _report_verdict(report, out: str) -> int:
    d = report.outcome.diagnostics if report.outcome is not None else {}
    _err(
        f"solver={d.get('solver')} status={d.get('solver_status')} "
        f"seconds={d.get('solve_seconds', 0.0):.2f} "
        f"eq_residual={d.get('equality_residual')} "
        f"min_eig={d.get('min_shifted_eigenvalue')}"
    )
    if report.feasible:
        path = os.path.join(out, "certificate.json")
        reporting.write_certificate(report, path)
        _err(f"wrote {path}")
    print(f"{report.status.value} degrees={report.degrees} delta={report.delta:g}")
    return _status_exit(report.status)


def cmd_analyze(cfg: JobConfig, args) -> int:
    sys_ = build_system(cfg)
    out = _outdir(cfg, args)
    mode = _resolve_mode(cfg)
    if mode not in ("primal", "dual"):
        raise ConfigError(f"analyze expects mode primal, dual, or auto, got {cfg.mode!r}")
    test = dual_stability_test if mode == "dual" else stability_test
    report = test(
        sys_, cfg.d1, cfg.d2,
        epsilon=cfg.epsilon, delta=cfg.delta, kernel_free=cfg.kernel_free,
    )
    return _report_verdict(report, out)


def cmd_synthesize(cfg: JobConfig, args) -> int:
    sys_ = build_system(cfg)
    out = _outdir(cfg, args)
    try:
        gains = synthesize_controller(
            sys_, cfg.d1, cfg.d2,
            epsilon=cfg.epsilon, delta=cfg.delta,
            static_variant=cfg.static_variant or cfg.mode == "control_static",
        )
    except SynthesisInfeasible as exc:
        return _report_verdict(exc.args[0], out)
    path = os.path.join(out, "gains.txt")
    reporting.write_gains(gains, path, grid_nodes=cfg.N)
    _err(f"wrote {path} and grid realization")
    return _report_verdict(gains.report, out)


def cmd_observe(cfg: JobConfig, args) -> int:
    sys_ = build_system(cfg)
    out = _outdir(cfg, args)
    try:
        obs = synthesize_observer(
            sys_, cfg.d1, cfg.d2, epsilon=cfg.epsilon, delta=cfg.delta
        )
    except SynthesisInfeasible as exc:
        return _report_verdict(exc.args[0], out)
    path = os.path.join(out, "observer.txt")
    reporting.write_observer_gains(obs, path, grid_nodes=cfg.N)
    _err(f"wrote {path} and grid realization")
    return _report_verdict(obs.report, out)


def cmd_simulate(cfg: JobConfig, args) -> int:
    sys_ = build_system(cfg)
    out = _outdir(cfg, args)
    loop = cfg.loop
    bc_input = None
    certificate = None
    lyap_mode = "direct"
    if loop == "state_feedback":
        ctrl = synthesize_controller(
            sys_, cfg.d1, cfg.d2,
            epsilon=cfg.epsilon, delta=cfg.delta,
            static_variant=cfg.static_variant,
        )
        bc_input = ctrl
        certificate = ctrl.p_c
        lyap_mode = "inverse"
        reporting.write_certificate(ctrl.report, os.path.join(out, "certificate.json"))
    elif loop == "output_feedback":
        ctrl = synthesize_controller(
            sys_, cfg.d1, cfg.d2,
            epsilon=cfg.epsilon, delta=cfg.delta,
            static_variant=cfg.static_variant,
        )
        obs = synthesize_observer(
            sys_, cfg.d1, cfg.d2, epsilon=cfg.epsilon, delta=cfg.delta
        )
        bc_input = assemble_output_feedback(ctrl, obs)
        reporting.write_certificate(ctrl.report, os.path.join(out, "certificate.json"))
        reporting.write_certificate(obs.report, os.path.join(out, "observer_certificate.json"))
    w0 = resolve_profile(cfg.w0)
    w0_hat = resolve_profile(cfg.w0_hat) if cfg.w0_hat is not None else None
    trace = simulate(sys_, bc_input, w0=w0, w0_hat=w0_hat, T=cfg.T, dt=cfg.dt, N=cfg.N)
    lyap = None
    if certificate is not None and not trace.blowup:
        lyap = lyapunov_trace(trace, certificate, mode=lyap_mode)
    csv_path = os.path.join(out, "trace.csv")
    write_trace_csv(trace, csv_path, lyapunov=lyap)
    reporting.plot_trace(trace, os.path.join(out, "trace.png"), lyapunov=lyap)
    _err(f"wrote {csv_path} and trace.png")
    slope = fitted_decay_exponent(trace)
    kind = "blowup" if trace.blowup else ("decay" if slope < 0 else "growth")
    print(f"simulated loop={loop} T={trace.times[-1]:g} fitted_exponent={slope:.6g} {kind}")
    return EXIT_FEASIBLE


def _run_sweep(cfg: JobConfig, mode: str, degrees, backend=None) -> SweepResult:
    sys_ = build_system(cfg)
    kwargs = dict(
        epsilon=cfg.epsilon,
        resolution=cfg.resolution,
        backend=backend,
        mode=mode,
        kernel_free=cfg.kernel_free,
    )
    if cfg.bracket is not None:
        kwargs["bracket"] = cfg.bracket
    if cfg.parameter == "lambda":
        return lambda_sweep(sys_, degrees, delta=cfg.delta, **kwargs)
    return delta_sweep(sys_, degrees, **kwargs)


def cmd_sweep(cfg: JobConfig, args) -> int:
    out = _outdir(cfg, args)
    degrees = list(cfg.degrees) or [cfg.d1]
    default_mode = "control" if cfg.parameter == "delta" else _resolve_mode(cfg)
    mode = cfg.mode if cfg.mode != "auto" else default_mode
    jobs = args.jobs or cfg.jobs or (os.cpu_count() or 1)
    jobs = max(1, min(int(jobs), len(degrees)))
    if jobs == 1:
        result = _run_sweep(cfg, mode, degrees)
    else:
        # parallel rows forfeit the warm-started brackets; each worker
        # bisects its own degree cold
        _err(f"running {len(degrees)} degrees on {jobs} workers")
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(lambda d: _run_sweep(cfg, mode, [d]), degrees))
        result = SweepResult(cfg.parameter)
        for part in parts:
            result.rows.extend(part.rows)
            result.probes.extend(part.probes)
    csv_path = os.path.join(out, "sweep.csv")
    reporting.write_sweep_csv(result, csv_path)
    reporting.write_probe_log(result, os.path.join(out, "probes.log"))
    reporting.plot_sweep(result, os.path.join(out, "sweep.png"))
    _err(f"wrote {csv_path}, probes.log, sweep.png")
    found = [r for r in result.rows if r.max_value is not None]
    for r in result.rows:
        val = "none" if r.max_value is None else reporting.fmt(r.max_value)
        print(f"degree={r.degree} max_{cfg.parameter}={val} failures={r.failures}")
    return EXIT_FEASIBLE if found else EXIT_INFEASIBLE


def cmd_invert_demo(cfg: JobConfig, args) -> int:
    out = _outdir(cfg, args)
    tri = build_from_gram(inversion_demo_certificate())
    inv, history = neumann_inverse(
        tri, order=cfg.invert_kmax, n=cfg.invert_nodes, return_history=True
    )
    orders = list(range(len(history)))
    csv_path = os.path.join(out, "inverse_residuals.csv")
    reporting.write_residual_csv(orders, history, csv_path)
    reporting.plot_residuals(orders, history, os.path.join(out, "inverse_residuals.png"))
    _err(f"wrote {csv_path} and inverse_residuals.png")
    print(
        f"series_terms={inv.series_terms} nodes={cfg.invert_nodes} "
        f"final_residual={history[-1]:.6e}"
    )
    return EXIT_FEASIBLE


_COMMANDS = {
    "analyze": cmd_analyze,
    "synthesize": cmd_synthesize,
    "observe": cmd_observe,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "invert-demo": cmd_invert_demo,
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="soslyap",
        description="certify, synthesize, and simulate 1-D parabolic boundary control",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="flat key = value job file")
        p.add_argument("--out", default=None, help="output directory (default: config or cwd)")
        p.add_argument("--jobs", type=int, default=None, help="sweep worker pool size")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except BadBracket as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except (MNotPositive, SeriesDiverging, InversionFailed) as exc:
        _err(f"numerical failure: {exc}")
        return EXIT_NUMERICAL
    except np.linalg.LinAlgError as exc:
        _err(f"numerical failure: {exc}")
        return EXIT_NUMERICAL
    except ValueError as exc:
        # plant/mode combinations rejected by the problem builders
        _err(f"config error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
