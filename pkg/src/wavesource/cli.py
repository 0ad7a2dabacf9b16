"""Command-line pipeline: placement analysis, synthesis, identification, batch runs.

Exit codes: 0 success, 1 configuration or I/O error, 2 placement check
failed, 3 final-state window or rank problem, 4 localization ambiguous,
5 signal reconstruction failed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .adjoint import SturmBasis, assemble
from .config import ConfigError, ExperimentConfig, load_config
from .errors import LocalizationError, PlacementError, WaveSourceError
from .final_state import FitWindow, estimate_final_state
from .forward import SimulationConfig, Trajectory, add_noise, simulate_modal, simulate_rk, write_columns
from .graph import (
    NetworkGraph,
    build_laplacian,
    check_identifiability_condition3,
    find_joints,
    is_strategic_set,
    joint_violations,
    load_topology,
    spectral_decompose,
)
from .localize import localize_multi, write_consistency_csv
from .reconstruct import choose_observation_node, fourier_reconstruct, reconstruct_by_deconvolution

log = logging.getLogger("wavesource")

EXIT_OK = 0
EXIT_CONFIG = 1


def _clean(obj):
    """Make ``obj`` strict-JSON safe: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def write_manifest(out_dir: Path, files: list[str], extra: dict | None = None, name: str = "manifest.json") -> Path:
    """Record the sha256 and size of each emitted file; no timestamps."""
    entries = {}
    for fname in sorted(files):
        data = (out_dir / fname).read_bytes()
        entries[fname] = {"sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}
    manifest = {"version": __version__, "files": entries}
    if extra:
        manifest.update(extra)
    path = out_dir / name
    write_json(path, manifest)
    return path


def placement_report(graph: NetworkGraph, i: int, j: int, ms, T: float, cond_threshold: float = 1e12) -> dict:
    """Strategic-set, joint and condition-3 checks for observers ``(i, j)``."""
    spectrum = spectral_decompose(build_laplacian(graph))
    strategic = is_strategic_set(spectrum, [i, j])
    joints = find_joints(graph)
    violations = joint_violations(graph, joints, i, j)
    cond3 = [check_identifiability_condition3(spectrum, m, T, i, j, cond_threshold) for m in ms]
    failed = []
    if not strategic.is_strategic:
        failed.append("strategic")
    if violations:
        failed.append("joints")
    if not all(c.passed for c in cond3):
        failed.append("condition3")
    return {
        "i": i,
        "j": j,
        "passed": not failed,
        "failed_conditions": failed,
        "strategic": strategic.to_dict(),
        "joints": {**joints.to_dict(), "violations": violations},
        "condition3": [c.to_dict() for c in cond3],
        "eigenvalues_distinct": spectrum.distinctness_ok,
    }


def _check_placement(graph: NetworkGraph, i: int, j: int, ms, T: float) -> dict:
    report = placement_report(graph, i, j, ms, T)
    if not report["passed"]:
        raise PlacementError(f"observation nodes ({i}, {j}) fail: {', '.join(report['failed_conditions'])}", report)
    return report


def _load_graph(cfg: ExperimentConfig) -> NetworkGraph:
    try:
        return load_topology(cfg.topology_path)
    except OSError as exc:
        raise ConfigError(f"cannot read topology {cfg.topology_path}: {exc}") from exc


def run_simulate(cfg: ExperimentConfig, modal_oracle: bool = False) -> dict:
    """Synthesize records for ``cfg``; returns a summary of written files."""
    graph = _load_graph(cfg)
    source = cfg.source_spec()
    if abs(source.active_end - cfg.T0) > 1e-9 * cfg.T:
        raise ConfigError(f"signal active_end {source.active_end:g} differs from T0 {cfg.T0:g}")
    sim_cfg = SimulationConfig(cfg.T, cfg.n_steps, cfg.a, cfg.b)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)

    traj = simulate_rk(graph, source, sim_cfg)
    files = ["trajectory.csv", "records.csv", "signal.csv"]
    traj.to_csv(out / "trajectory.csv")
    noisy = add_noise(traj, cfg.noise_level, cfg.seed)
    noisy.to_csv(out / "records.csv", [cfg.i, cfg.j])
    write_columns(out / "signal.csv", "t,lambda_true", [traj.times, source.signal(traj.times)])
    extra = {"config": cfg.to_dict()}
    if modal_oracle:
        spectrum = spectral_decompose(build_laplacian(graph))
        modal = simulate_modal(spectrum, source, sim_cfg)
        modal.to_csv(out / "trajectory_modal.csv")
        files.append("trajectory_modal.csv")
        scale = max(float(np.abs(traj.states).max()), 1e-300)
        extra["modal_max_abs_diff"] = float(np.abs(traj.states - modal.states).max())
        extra["modal_max_rel_diff"] = extra["modal_max_abs_diff"] / scale
    write_manifest(out, files, extra)
    return {"output": str(out), "files": files + ["manifest.json"], **{k: v for k, v in extra.items() if k != "config"}}


def _load_records(cfg: ExperimentConfig, path: Path) -> tuple[dict[int, np.ndarray], np.ndarray]:
    try:
        traj, labels = Trajectory.from_csv(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read records {path}: {exc}") from exc
    expected = SimulationConfig(cfg.T, cfg.n_steps).times
    if traj.times.size != expected.size or np.abs(traj.times - expected).max() > 1e-9 * cfg.T:
        raise ConfigError(f"{path}: time grid does not match T = {cfg.T:g}, n_steps = {cfg.n_steps}")
    records = {k: traj.states[:, c] for c, k in enumerate(labels)}
    missing = [k for k in (cfg.i, cfg.j) if k not in records]
    if missing:
        raise ConfigError(f"{path}: no record for observation nodes {missing}")
    return {cfg.i: records[cfg.i], cfg.j: records[cfg.j]}, expected


def run_identify(cfg: ExperimentConfig) -> dict:
    """Placement check, final state, localization and signal recovery.

    Raises the stage's :class:`WaveSourceError` with ``stage`` attached.
    """
    stage = "config"
    try:
        graph = _load_graph(cfg)
        spectrum = spectral_decompose(build_laplacian(graph))
        n = graph.n_nodes
        out = cfg.output_dir
        out.mkdir(parents=True, exist_ok=True)

        stage = "placement"
        placement = _check_placement(graph, cfg.i, cfg.j, cfg.m, cfg.T)

        stage = "records"
        rec_path = cfg.records_path
        if rec_path is None:
            run_simulate(cfg)
            rec_path = out / "records.csv"
        records, times = _load_records(cfg, rec_path)
        a = np.zeros(n) if cfg.a is None else np.asarray(cfg.a)
        b = np.zeros(n) if cfg.b is None else np.asarray(cfg.b)

        stage = "final_state"
        window = FitWindow(cfg.fit_start, cfg.T, cfg.T / cfg.n_steps, cfg.T0)
        final = estimate_final_state(records, [cfg.i, cfg.j], spectrum, window)
        write_json(out / "final_state.json", final.to_dict())

        stage = "localization"
        basis = SturmBasis(cfg.T)

        def system(m: int):
            return assemble(spectrum, basis, m, cfg.i, cfg.j, a, final.XT, records, times)

        files = ["report.json", "final_state.json", "signal_identified.csv"]
        try:
            loc = localize_multi(
                [system(m) for m in cfg.m], cfg.localization_threshold, cfg.localization_margin
            )
        except LocalizationError as exc:
            if cfg.assume_source is None:
                raise
            loc_report = {"status": "ambiguous", "error": str(exc), "scores": exc.scores}
            log.warning("localization ambiguous, using assumed source %d: %s", cfg.assume_source, exc)
        else:
            loc_report = {"status": "ok", **loc.to_dict(), "scores": loc.result.to_dict()["scores"]}
            write_consistency_csv(
                out / "consistency.csv", loc.result.consistency_table, system(loc.result.m).unknown_nodes
            )
            files.append("consistency.csv")
        if cfg.assume_source is not None:
            s = cfg.assume_source
            loc_report["assumed_source"] = s
        else:
            s = loc.source_node

        stage = "reconstruction"
        truth = None
        true_node = None
        if cfg.source is not None:
            src = cfg.source_spec()
            truth, true_node = src.signal, src.node
        if cfg.method == "deconvolution":
            k = cfg.observation_node or choose_observation_node(spectrum, s, (cfg.i, cfg.j), times[1:])
            if k not in records:
                raise ConfigError(f"observation node {k} has no record")
            signal = reconstruct_by_deconvolution(
                spectrum, s, records[k], times, k, a, b, cfg.regularization, cfg.mode, truth
            )
        else:
            signal = fourier_reconstruct(system, s, cfg.fourier_terms, times, truth)
        signal.to_csv(out / "signal_identified.csv")
    except WaveSourceError as exc:
        exc.stage = stage
        raise

    report = {
        "placement": placement,
        "final_state": {**final.to_dict(), "T_star": window.T_star, "nodes": [cfg.i, cfg.j]},
        "localization": loc_report,
        "reconstruction": signal.to_dict(),
        "source_node": s,
    }
    if true_node is not None:
        report["true_source_node"] = true_node
        report["source_correct"] = s == true_node
    write_json(out / "report.json", report)
    write_manifest(out, files + (["records.csv"] if cfg.records is None else []), {"config": cfg.to_dict()}, "identify_manifest.json")
    return report


def _overrides(args) -> dict:
    keys = {
        "noise_level": "noise_level",
        "seed": "seed",
        "method": "method",
        "mode": "mode",
        "r": "r",
        "threshold": "threshold",
        "min_margin": "min_margin",
        "T_star": "T_star",
        "fourier_terms": "fourier_terms",
        "observation_node": "observation_node",
        "assume_source": "assume_source",
    }
    kw = {dst: getattr(args, src, None) for src, dst in keys.items()}
    if getattr(args, "m", None):
        kw["m"] = tuple(args.m)
    if getattr(args, "output", None):
        kw["output"] = Path(args.output).resolve()
    if getattr(args, "records", None):
        kw["records"] = Path(args.records).resolve()
    return kw


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    try:
        return cfg.with_overrides(**_overrides(args))
    except WaveSourceError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def cmd_analyze(args) -> int:
    graph = load_topology(args.topology)
    report = placement_report(graph, args.i, args.j, args.m, args.T, args.cond_threshold)
    text = json.dumps(_clean(report), indent=2, sort_keys=True) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    if not report["passed"]:
        log.error("placement check failed: %s", ", ".join(report["failed_conditions"]))
        return PlacementError.exit_code
    return EXIT_OK


def cmd_simulate(args) -> int:
    summary = run_simulate(_load(args), args.modal_oracle)
    sys.stdout.write(json.dumps(_clean(summary), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_identify(args) -> int:
    cfg = _load(args)
    try:
        report = run_identify(cfg)
    except WaveSourceError as exc:
        out = cfg.output_dir
        out.mkdir(parents=True, exist_ok=True)
        failure = {"status": "failed", "stage": getattr(exc, "stage", None), "error": str(exc)}
        if isinstance(exc, PlacementError):
            failure["placement"] = exc.report
        write_json(out / "report.json", failure)
        raise
    summary = {
        "source_node": report["source_node"],
        "margin": report["localization"].get("margin"),
        "error": report["reconstruction"]["error"],
        "output": str(cfg.output_dir),
    }
    sys.stdout.write(json.dumps(_clean(summary), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _batch_worker(job: tuple[str, str, bool]) -> dict:
    path, command, modal_oracle = job
    try:
        cfg = load_config(path)
        if command == "simulate":
            result = run_simulate(cfg, modal_oracle)
        else:
            rep = run_identify(cfg)
            result = {
                "source_node": rep["source_node"],
                "margin": rep["localization"].get("margin"),
                "error": rep["reconstruction"]["error"],
            }
        return {"config": path, "exit_code": EXIT_OK, **result}
    except WaveSourceError as exc:
        return {"config": path, "exit_code": exc.exit_code, "stage": getattr(exc, "stage", None), "error": str(exc)}


def cmd_batch(args) -> int:
    jobs = [(str(Path(p).resolve()), args.command, args.modal_oracle) for p in args.configs]
    if args.jobs == 1:
        results = [_batch_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_batch_worker, jobs))
    summary = {"runs": results}
    text = json.dumps(_clean(summary), indent=2, sort_keys=True) + "\n"
    if args.summary:
        Path(args.summary).write_text(text)
    sys.stdout.write(text)
    return max((r["exit_code"] for r in results), default=EXIT_OK)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="experiment config JSON")
    p.add_argument("--output", help="output directory (overrides config)")
    p.add_argument("--noise-level", type=float, help="relative Gaussian noise level, e.g. 0.03")
    p.add_argument("--seed", type=int, help="noise seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wavesource", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="check that observers (i, j) can identify any source")
    p.add_argument("topology", help="topology file (JSON or edge list)")
    p.add_argument("--i", type=int, required=True, help="first observation node")
    p.add_argument("--j", type=int, required=True, help="second observation node")
    p.add_argument("--m", type=int, nargs="+", default=[1], help="adjoint indices to certify")
    p.add_argument("--T", type=float, required=True, help="time horizon")
    p.add_argument("--cond-threshold", type=float, default=1e12, help="condition number deemed singular")
    p.add_argument("--output", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="synthesize trajectory and observation records")
    _add_run_flags(p)
    p.add_argument("--modal-oracle", action="store_true", help="also write the modal-expansion trajectory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", help="localize the source and recover its signal")
    _add_run_flags(p)
    p.add_argument("--records", help="trajectory CSV with the observation nodes")
    p.add_argument("--m", type=int, nargs="+", help="adjoint indices used for localization")
    p.add_argument("--threshold", type=float, help="relative consistency threshold")
    p.add_argument("--min-margin", dest="min_margin", type=float, help="required runner-up/best score ratio")
    p.add_argument("--T-star", dest="T_star", type=float, help="start of the final-state fit window")
    p.add_argument("--method", choices=["deconvolution", "fourier"])
    p.add_argument("--mode", choices=["diagonal_shift", "tikhonov"], help="deconvolution regularizer")
    p.add_argument("--r", type=float, help="regularization parameter")
    p.add_argument("--fourier-terms", type=int, help="number of sine terms for the fourier method")
    p.add_argument("--observation-node", type=int, help="node whose record is deconvolved")
    p.add_argument(
        "--assume-source",
        type=int,
        help="reconstruct at this node; localization is still run and reported but may be ambiguous",
    )
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("batch", help="run several configs concurrently")
    p.add_argument("configs", nargs="+", help="experiment config files")
    p.add_argument("--command", choices=["simulate", "identify"], default="identify")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--modal-oracle", action="store_true")
    p.add_argument("--summary", help="write the batch summary JSON here")
    p.set_defaults(func=cmd_batch)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except WaveSourceError as exc:
        stage = getattr(exc, "stage", None)
        prefix = f"[{stage}] " if stage else ""
        print(f"error: {prefix}{exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
