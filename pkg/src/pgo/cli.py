"""Command-line driver: ``pgo corrupt|generate|solve|eval|bench``.

Exit codes: 0 success, 2 unreadable or malformed input, 3 outlier injection
failed, 4 the solver diverged (partial outputs are still written).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import geometry as geo
from . import metrics
from .datasets import (
    CorruptionConfig,
    GenerationConfig,
    NotEnoughCandidatePairs,
    generate_from_ground_truth,
    inject_false_loops,
)
from .gnc import Classification, GncConfig, ScheduleKind, classify, run_gnc
from .graph import (
    GraphError,
    LoopLabel,
    PoseGraph,
    apply_labels,
    dead_reckoning,
    ensure_prior,
    loop_mahalanobis,
    parse_g2o,
    parse_labels,
    write_g2o,
    write_labels,
)
from .solver import SolverConfig, SolverDiverged, optimize
from .spline import ShapeFamily
from . import svg

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("pgo")

EXIT_OK, EXIT_PARSE, EXIT_CORRUPT, EXIT_DIVERGED = 0, 2, 3, 4

SUMMARY_COLUMNS = (
    "dataset", "rate", "seed", "schedule", "runtime_s", "inner_iters", "outer_rounds",
    "ate_m", "rpe_t_m", "rpe_r_rad", "precision", "recall", "status",
)
TIMING_COLUMNS = ("runtime_s",)
CLASS_NAMES = {int(c): c.name.lower() for c in Classification}


class InputError(Exception):
    """Unreadable or malformed input file (exit code 2)."""


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Settings:
    """Everything a run depends on; flags override the config file."""

    gnc: GncConfig = GncConfig()
    corruption: CorruptionConfig = CorruptionConfig()
    generation: GenerationConfig = GenerationConfig()

    def as_dict(self) -> dict:
        fam = self.gnc.family
        g = {f.name: getattr(self.gnc, f.name) for f in fields(GncConfig) if f.name not in ("family", "solver")}
        g["schedule"] = self.gnc.schedule.value
        return {
            "gnc": g,
            "spline": {"degree": fam.degree, "d0": list(fam.d0), "d1": list(fam.d1)},
            "solver": asdict(self.gnc.solver),
            "corruption": asdict(self.corruption),
            "generation": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self.generation).items()},
        }

    def digest(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()


_SECTIONS = {"gnc", "spline", "solver", "corruption", "generation", "bench"}


def load_config(path: Optional[Path]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    unknown = set(data) - _SECTIONS - {"dataset"}
    if unknown:
        raise InputError(f"unknown config sections: {sorted(unknown)}")
    return data


def _tuple_or_none(v):
    return None if v is None else tuple(float(x) for x in v)


def build_settings(cfg: dict, overrides: Optional[dict] = None) -> Settings:
    """Settings from a parsed config dict; ``overrides`` are dotted keys set by flags."""
    cfg = {k: dict(v) for k, v in cfg.items() if isinstance(v, dict)}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        section, name = key.split(".", 1)
        cfg.setdefault(section, {})[name] = value
    try:
        sp = cfg.get("spline", {})
        family = ShapeFamily(
            int(sp.get("degree", 3)),
            tuple(sp.get("d0", ShapeFamily().d0)),
            tuple(sp.get("d1", ShapeFamily().d1)),
        )
        solver = SolverConfig(**cfg.get("solver", {}))
        gs = dict(cfg.get("gnc", {}))
        if "schedule" in gs:
            gs["schedule"] = ScheduleKind(gs["schedule"])
        gnc = GncConfig(family=family, solver=solver, **gs)
        corruption = CorruptionConfig(**cfg.get("corruption", {}))
        gen = dict(cfg.get("generation", {}))
        for k in ("odometry_sigma", "loop_sigma", "corruption_sigma"):
            if k in gen:
                gen[k] = _tuple_or_none(gen[k])
        generation = GenerationConfig(**gen)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid configuration: {exc}") from None
    return Settings(gnc, corruption, generation)


def parse_schedule(text: str):
    """'adaptive' | 'fixed-alpha=A' | 'baseline' | 'none' -> (kind or None, alpha)."""
    if text == "none":
        return None, None
    if text.startswith("fixed-alpha"):
        _, _, a = text.partition("=")
        return ScheduleKind.FIXED_ALPHA, float(a) if a else 0.5
    try:
        return ScheduleKind(text), None
    except ValueError:
        raise InputError(f"unknown schedule {text!r}") from None


# --------------------------------------------------------------------------
# input helpers


def read_graph(path, labels: Optional[Path] = None) -> PoseGraph:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    graph = parse_g2o(text)
    side = labels if labels is not None else _sidecar(Path(path))
    if side is not None and Path(side).exists():
        graph = apply_labels(graph, parse_labels(Path(side).read_text()))
    elif labels is not None:
        raise InputError(f"label file {labels} not found")
    return graph


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".labels")


def prepare(graph: PoseGraph, init: str = "dead-reckoning") -> PoseGraph:
    """Initial estimate and gauge prior at node 0."""
    if init == "dead-reckoning" and len(graph.poses) > 1:
        graph = graph.with_poses(dead_reckoning(graph))
    return ensure_prior(graph)


def _write_graph(graph: PoseGraph, out: Path):
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(write_g2o(graph))
    if graph.loop_factors and all(f.truth_label is not None for f in graph.loop_factors):
        _sidecar(out).write_text(write_labels(graph))


# --------------------------------------------------------------------------
# solving


@dataclass
class SolveOutcome:
    poses: np.ndarray
    classification: np.ndarray
    m: np.ndarray
    mu: np.ndarray
    mu_init: np.ndarray
    history: list = field(default_factory=list)  # rows for history.csv
    runtime_s: float = 0.0
    inner_iters: int = 0
    outer_rounds: int = 0
    diverged: bool = False


def solve_graph(graph: PoseGraph, schedule: str, settings: Settings) -> SolveOutcome:
    kind, alpha = parse_schedule(schedule)
    dof = graph.tangent_dim
    if kind is None:
        t0 = time.perf_counter()
        res = optimize(graph, None, None, settings.gnc.solver, settings.gnc.c)
        runtime = time.perf_counter() - t0
        m = loop_mahalanobis(graph, res.poses)
        cls = np.asarray(classify(m, dof, settings.gnc), dtype=int).reshape(-1)
        zeros = np.zeros(len(m))
        n_out = int(np.sum(cls == Classification.OUTLIER))
        hist = [(0, 0, 0.0, 0.0, 0.0, res.cost, res.iterations, res.converged, n_out)]
        return SolveOutcome(res.poses, cls, m, zeros, zeros, hist, runtime, res.iterations, 1, not res.converged)
    cfg = replace(settings.gnc, schedule=kind, **({"fixed_alpha": alpha} if alpha is not None else {}))
    res = run_gnc(graph, cfg)
    hist = []
    for h in res.history:
        mu = h.mu if len(h.mu) else np.ones(1)
        hist.append((h.pass_index, h.round, float(np.mean(mu)), float(np.min(mu)), float(np.max(mu)),
                     h.cost, h.inner_iterations, h.converged, h.n_outliers))
    return SolveOutcome(res.poses, np.asarray(res.classification, dtype=int), res.m, res.mu, res.mu_init, hist,
                        res.wall_time, res.inner_iterations, res.outer_rounds, res.diverged)


def write_solve_outputs(graph: PoseGraph, out: SolveOutcome, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    est = graph.with_poses(geo.array_to_poses(out.poses, graph.dimension))
    (out_dir / "estimate.g2o").write_text(write_g2o(est))
    loops = graph.loop_factors
    labelled = bool(loops) and all(f.truth_label is not None for f in loops)
    header = ["loop", "i", "j", "m", "mu", "mu_init", "classification"] + (["label"] if labelled else [])
    rows = []
    for k, f in enumerate(loops):
        row = [k, f.i, f.j, out.m[k], out.mu[k], out.mu_init[k], CLASS_NAMES[int(out.classification[k])]]
        if labelled:
            row.append(f.truth_label.value)
        rows.append(row)
    (out_dir / "classification.csv").write_text(_csv_text(header, rows))
    (out_dir / "history.csv").write_text(_csv_text(
        ["pass", "round", "mu_mean", "mu_min", "mu_max", "cost", "inner_iterations", "converged", "n_outliers"],
        out.history,
    ))
    (out_dir / "timing.csv").write_text(_csv_text(
        ["runtime_s", "inner_iterations", "outer_rounds", "diverged"],
        [(out.runtime_s, out.inner_iters, out.outer_rounds, out.diverged)],
    ))


# --------------------------------------------------------------------------
# commands


def cmd_corrupt(args, settings: Settings) -> int:
    graph = read_graph(args.input, args.labels)
    try:
        out = inject_false_loops(graph, settings.corruption)
    except NotEnoughCandidatePairs as exc:
        log.error("corruption failed: %s", exc)
        return EXIT_CORRUPT
    _write_graph(out, Path(args.out))
    n_false = sum(1 for f in out.loop_factors if f.truth_label is LoopLabel.FALSE_LOOP)
    print(f"{args.out}: {len(out.loop_factors)} loops ({n_false} false)")
    return EXIT_OK


def cmd_generate(args, settings: Settings) -> int:
    gt = read_graph(args.input)
    out = generate_from_ground_truth(list(gt.poses), settings.generation)
    _write_graph(out, Path(args.out))
    n_false = sum(1 for f in out.loop_factors if f.truth_label is LoopLabel.FALSE_LOOP)
    print(f"{args.out}: {len(out.poses)} poses, {len(out.loop_factors)} loops ({n_false} corrupted)")
    return EXIT_OK


def cmd_solve(args, settings: Settings) -> int:
    graph = prepare(read_graph(args.input, args.labels), args.init)
    out_dir = Path(args.out_dir)
    try:
        out = solve_graph(graph, args.schedule, settings)
    except SolverDiverged as exc:
        log.error("solver diverged: %s", exc)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "timing.csv").write_text(_csv_text(
            ["runtime_s", "inner_iterations", "outer_rounds", "diverged"], [(float("nan"), 0, 0, True)]))
        return EXIT_DIVERGED
    write_solve_outputs(graph, out, out_dir)
    manifest = RunManifest((str(args.input),), settings.digest(), (args.seed,), (args.schedule,), str(out_dir))
    (out_dir / "manifest.json").write_text(manifest.to_json(settings))
    n_out = int(np.sum(out.classification == Classification.OUTLIER))
    print(f"{args.schedule}: {out.inner_iters} inner iterations, {out.outer_rounds} rounds, "
          f"{n_out}/{len(out.classification)} loops rejected, {out.runtime_s:.2f} s")
    return EXIT_DIVERGED if out.diverged else EXIT_OK


def _read_classification(path: Path) -> np.ndarray:
    names = {v: k for k, v in CLASS_NAMES.items()}
    with open(path, newline="") as fh:
        return np.array([names[row["classification"]] for row in csv.DictReader(fh)], dtype=int)


def cmd_eval(args, settings: Settings) -> int:
    est = read_graph(args.estimate)
    gt = read_graph(args.ground_truth)
    if len(est.poses) != len(gt.poses):
        raise InputError(f"estimate has {len(est.poses)} poses, ground truth {len(gt.poses)}")
    tm = metrics.trajectory_metrics(est.pose_array, gt.pose_array, args.delta)
    header = ["ate_m", "rpe_t_m", "rpe_r_rad"]
    row = [tm.ate_rmse, tm.rpe_trans_rmse, tm.rpe_rot_rmse]
    if args.classification is not None:
        if args.labels is None:
            raise InputError("--classification needs --labels")
        labels = [lab for _, _, lab in parse_labels(Path(args.labels).read_text())]
        cm = metrics.precision_recall(labels, _read_classification(Path(args.classification)))
        header += ["tp", "fp", "tn", "fn", "precision", "recall"]
        row += [cm.tp, cm.fp, cm.tn, cm.fn, cm.precision, cm.recall]
    text = _csv_text(header, [row])
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------
# benchmark


@dataclass(frozen=True)
class RunManifest:
    datasets: tuple
    config_digest: str
    seeds: tuple
    schedules: tuple
    out_dir: str
    rates: tuple = ()

    def to_json(self, settings: Settings) -> str:
        body = {
            "datasets": list(self.datasets),
            "config_digest": self.config_digest,
            "seeds": list(self.seeds),
            "rates": list(self.rates),
            "schedules": list(self.schedules),
            "config": settings.as_dict(),
        }
        return json.dumps(body, indent=2, sort_keys=True, default=list) + "\n"


@dataclass(frozen=True)
class BenchDataset:
    name: str
    path: str
    ground_truth: Optional[str] = None
    labels: Optional[str] = None


def _bench_datasets(cfg: dict, base: Path) -> list:
    out = []
    for d in cfg.get("dataset", []):
        if "path" not in d:
            raise InputError("every [[dataset]] needs a path")
        resolve = (lambda p: None if p is None else str((base / p).resolve()) if not Path(p).is_absolute() else p)
        out.append(BenchDataset(d.get("name", Path(d["path"]).stem), resolve(d["path"]),
                                resolve(d.get("ground_truth")), resolve(d.get("labels"))))
    if not out:
        raise InputError("the manifest lists no [[dataset]] entries")
    return out


def run_cell(dataset: BenchDataset, rate: float, seed: int, schedules: tuple, settings: Settings) -> list:
    """One (dataset, rate, seed) cell: corrupt once, solve under every schedule."""
    rows = []
    base = dict(dataset=dataset.name, rate=rate, seed=seed)
    try:
        graph = read_graph(dataset.path, None if dataset.labels is None else Path(dataset.labels))
        gt = read_graph(dataset.ground_truth).pose_array if dataset.ground_truth else None
        graph = inject_false_loops(graph, replace(settings.corruption, outlier_rate=rate, seed=seed))
        graph = prepare(graph)
    except (InputError, GraphError, NotEnoughCandidatePairs) as exc:
        status = "corrupt_failed" if isinstance(exc, NotEnoughCandidatePairs) else "input_error"
        log.error("%s rate=%s seed=%s: %s", dataset.name, rate, seed, exc)
        return [dict(base, schedule=s, status=status) for s in schedules]
    labels = graph.labels()
    for schedule in schedules:
        row = dict(base, schedule=schedule)
        try:
            out = solve_graph(graph, schedule, settings)
        except (SolverDiverged, np.linalg.LinAlgError) as exc:
            log.error("%s rate=%s seed=%s %s: %s", dataset.name, rate, seed, schedule, exc)
            rows.append(dict(row, status="diverged"))
            continue
        cm = metrics.precision_recall(labels, out.classification)
        row.update(runtime_s=out.runtime_s, inner_iters=out.inner_iters, outer_rounds=out.outer_rounds,
                   precision=cm.precision, recall=cm.recall, status="diverged" if out.diverged else "ok")
        if gt is not None:
            tm = metrics.trajectory_metrics(out.poses, gt)
            row.update(ate_m=tm.ate_rmse, rpe_t_m=tm.rpe_trans_rmse, rpe_r_rad=tm.rpe_rot_rmse)
        rows.append(row)
        log.info("%s rate=%s seed=%s %s: %s", dataset.name, rate, seed, schedule, row)
    return rows


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("PGO_THREADS", "1")))
    except ValueError:
        return 1


def _aggregate(rows: list) -> list:
    keys = sorted({(r["dataset"], r["rate"], r["schedule"]) for r in rows})
    out = []
    for d, rate, s in keys:
        sel = [r for r in rows if (r["dataset"], r["rate"], r["schedule"]) == (d, rate, s) and r.get("status") == "ok"]
        rec = {"dataset": d, "rate": rate, "schedule": s, "n_ok": len(sel)}
        for col in ("runtime_s", "inner_iters", "ate_m", "rpe_t_m", "rpe_r_rad", "precision", "recall"):
            vals = np.array([r[col] for r in sel if col in r], dtype=float)
            rec[col + "_mean"] = float(vals.mean()) if len(vals) else float("nan")
            rec[col + "_std"] = float(vals.std()) if len(vals) else float("nan")
        out.append(rec)
    return out


def _ratios(agg: list) -> list:
    by = {(a["dataset"], a["rate"], a["schedule"]): a for a in agg}
    out = []
    for d, rate in sorted({(a["dataset"], a["rate"]) for a in agg}):
        ad, bl = by.get((d, rate, "adaptive")), by.get((d, rate, "baseline"))
        if ad is None or bl is None:
            continue
        out.append({
            "dataset": d, "rate": rate,
            "runtime_ratio": ad["runtime_s_mean"] / bl["runtime_s_mean"] if bl["runtime_s_mean"] else float("nan"),
            "inner_iter_ratio": ad["inner_iters_mean"] / bl["inner_iters_mean"] if bl["inner_iters_mean"] else float("nan"),
        })
    return out


def _dict_csv(rows: list, columns: Optional[tuple] = None) -> str:
    if columns is None:
        columns = tuple(rows[0]) if rows else ()
    return _csv_text(columns, [[r.get(c, "") for c in columns] for r in rows])


def _plots(agg: list, ratios: list, out_dir: Path):
    datasets = sorted({a["dataset"] for a in agg})
    schedules = sorted({a["schedule"] for a in agg})
    for d in datasets:
        rates = sorted({a["rate"] for a in agg if a["dataset"] == d})
        cats = [f"{100 * r:g}%" for r in rates]
        by = {(a["rate"], a["schedule"]): a for a in agg if a["dataset"] == d}
        for col, label in (("runtime_s_mean", "runtime [s]"), ("inner_iters_mean", "inner LM iterations"),
                           ("ate_m_mean", "ATE [m]"), ("recall_mean", "recall")):
            series = {s: [by.get((r, s), {}).get(col, float("nan")) for r in rates] for s in schedules}
            name = col.replace("_mean", "")
            (out_dir / f"{d}_{name}.svg").write_text(svg.bar_chart(f"{d}: {label}", label, cats, series))
    if ratios:
        series = {}
        for d in datasets:
            rs = [r for r in ratios if r["dataset"] == d]
            if rs:
                series[d] = [r["runtime_ratio"] for r in rs]
        rates = sorted({r["rate"] for r in ratios})
        series = {d: v for d, v in series.items() if len(v) == len(rates)}
        (out_dir / "runtime_ratio.svg").write_text(
            svg.line_chart("runtime ratio adaptive / baseline", "ratio", rates, series, reference=1.0))


def cmd_bench(args, settings: Settings, cfg: dict) -> int:
    bench = cfg.get("bench", {})
    base = Path(args.config).resolve().parent if args.config else Path.cwd()
    datasets = _bench_datasets(cfg, base)
    rates = tuple(float(r) for r in (args.rates or bench.get("rates", [0.1])))
    seeds = tuple(int(s) for s in (args.seeds or bench.get("seeds", [0])))
    schedules = tuple(args.schedules or bench.get("schedules", ["adaptive", "baseline"]))
    for s in schedules:
        parse_schedule(s)
    out_dir = Path(args.out_dir or bench.get("out_dir", "bench_out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(tuple(d.name for d in datasets), settings.digest(), seeds, schedules, str(out_dir), rates)
    (out_dir / "manifest.json").write_text(manifest.to_json(settings))

    cells = [(d, r, s) for d in datasets for r in rates for s in seeds]
    n_threads = min(_threads(), len(cells))
    if n_threads > 1:
        with ProcessPoolExecutor(max_workers=n_threads) as pool:
            futures = [pool.submit(run_cell, d, r, s, schedules, settings) for d, r, s in cells]
            results = [f.result() for f in futures]
    else:
        results = [run_cell(d, r, s, schedules, settings) for d, r, s in cells]
    rows = [row for cell in results for row in cell]

    (out_dir / "summary.csv").write_text(_dict_csv(rows, SUMMARY_COLUMNS))
    agg = _aggregate(rows)
    if agg:
        (out_dir / "aggregate.csv").write_text(_dict_csv(agg))
    ratios = _ratios(agg)
    (out_dir / "runtime_ratio.csv").write_text(
        _dict_csv(ratios, ("dataset", "rate", "runtime_ratio", "inner_iter_ratio")))
    _plots(agg, ratios, out_dir)
    n_bad = sum(1 for r in rows if r.get("status") != "ok")
    print(f"{out_dir / 'summary.csv'}: {len(rows)} rows, {n_bad} not ok")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pgo", description="Robust pose-graph optimization with adaptive GNC.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="TOML configuration file (flags override it)")
        sp.add_argument("--seed", type=int)

    c = sub.add_parser("corrupt", help="inject labeled false loop closures")
    c.add_argument("input", type=Path)
    c.add_argument("--out", type=Path, required=True)
    c.add_argument("--labels", type=Path, help="label sidecar for the input (default: <input>.labels if present)")
    c.add_argument("--rate", type=float)
    c.add_argument("--rate-basis", choices=("of_true", "of_total"))
    c.add_argument("--min-index-gap", type=int)
    c.add_argument("--min-gt-distance", type=float)
    c.add_argument("--loop-info", choices=("copy", "odometry"))
    common(c)

    g = sub.add_parser("generate", help="synthesize a labeled graph from ground-truth poses")
    g.add_argument("input", type=Path, help="g2o file whose vertices are the ground truth")
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--odometry-sigma", type=_floats)
    g.add_argument("--loop-sigma", type=_floats)
    g.add_argument("--corruption-sigma", type=_floats)
    g.add_argument("--proximity-radius", type=float)
    g.add_argument("--loop-density", type=float)
    g.add_argument("--min-index-gap", type=int)
    g.add_argument("--corrupted-fraction", type=float)
    common(g)

    s = sub.add_parser("solve", help="run GNC (or a plain solve) and write a report")
    s.add_argument("input", type=Path)
    s.add_argument("--out-dir", type=Path, required=True)
    s.add_argument("--labels", type=Path)
    s.add_argument("--schedule", default="adaptive", help="adaptive | fixed-alpha=A | baseline | none")
    s.add_argument("--init", choices=("dead-reckoning", "vertices"), default="dead-reckoning")
    s.add_argument("--n-max", type=int)
    s.add_argument("--max-outer-rounds", type=int)
    s.add_argument("--kernel-c", type=float)
    common(s)

    e = sub.add_parser("eval", help="trajectory and classification metrics")
    e.add_argument("estimate", type=Path)
    e.add_argument("ground_truth", type=Path)
    e.add_argument("--classification", type=Path)
    e.add_argument("--labels", type=Path)
    e.add_argument("--delta", type=int, default=1)
    e.add_argument("--out", type=Path)
    common(e)

    b = sub.add_parser("bench", help="cross-product benchmark from a manifest")
    b.add_argument("--config", type=Path, required=True, help="manifest: [bench], [[dataset]] and config sections")
    b.add_argument("--out-dir", type=Path)
    b.add_argument("--rates", type=_floats)
    b.add_argument("--seeds", type=lambda t: tuple(int(v) for v in t.split(",")))
    b.add_argument("--schedules", type=lambda t: tuple(t.split(",")))
    return p


def _overrides(args) -> dict:
    get = lambda name: getattr(args, name, None)  # noqa: E731
    out = {
        "corruption.outlier_rate": get("rate"),
        "corruption.rate_basis": get("rate_basis"),
        "corruption.min_index_gap": get("min_index_gap") if args.command == "corrupt" else None,
        "corruption.min_gt_distance": get("min_gt_distance"),
        "corruption.loop_info": get("loop_info"),
        "generation.odometry_sigma": get("odometry_sigma"),
        "generation.loop_sigma": get("loop_sigma"),
        "generation.corruption_sigma": get("corruption_sigma"),
        "generation.proximity_radius": get("proximity_radius"),
        "generation.loop_density": get("loop_density"),
        "generation.min_index_gap": get("min_index_gap") if args.command == "generate" else None,
        "generation.corrupted_fraction": get("corrupted_fraction"),
        "gnc.n_max": get("n_max"),
        "gnc.max_outer_rounds": get("max_outer_rounds"),
        "gnc.c": get("kernel_c"),
    }
    if get("seed") is not None:
        out["corruption.seed"] = args.seed
        out["generation.seed"] = args.seed
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        cfg = load_config(getattr(args, "config", None))
        settings = build_settings(cfg, _overrides(args))
        if args.command == "corrupt":
            return cmd_corrupt(args, settings)
        if args.command == "generate":
            return cmd_generate(args, settings)
        if args.command == "solve":
            return cmd_solve(args, settings)
        if args.command == "eval":
            return cmd_eval(args, settings)
        return cmd_bench(args, settings, cfg)
    except (InputError, GraphError) as exc:
        log.error("%s", exc)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
