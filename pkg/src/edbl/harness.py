"""Experiment runner: data, (seed x strategy) runs, metric files and summaries.

Per run, under ``<output>/<strategy>/seed<seed>/``:

* ``metrics.csv``   -- ``run_id,seed,strategy,phase,mode,accuracy``
* ``per_class.jsonl`` -- the same rows with per-class accuracy vectors
* ``train_log.jsonl`` -- one record per epoch and phase
* ``checkpoint.bin``  -- final model and exemplar store

The run-level CSVs are concatenated into ``<output>/metrics.csv`` and a
summary table is written to ``<output>/summary.txt``. No timestamps or
host-specific values are written, so identical configs give identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import ExperimentConfig
from .data import generate_synthetic, load_csv
from .estimator import EDBLClassifier
from .protocol import MODES, PhaseMetrics, average_incremental_accuracy, evaluate_phase, split_stream

logger = logging.getLogger(__name__)

SCHEMA = "# schema: edbl-metrics/1"
COLUMNS = ("run_id", "seed", "strategy", "phase", "mode", "accuracy")


def seed_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, int]:
    """Independent generators for data, class order, and training."""
    data_ss, order_ss, train_ss = np.random.SeedSequence(seed).spawn(3)
    train_seed = int(train_ss.generate_state(1, dtype=np.uint64)[0])
    return np.random.default_rng(data_ss), np.random.default_rng(order_ss), train_seed


def build_dataset(cfg: ExperimentConfig, rng):
    if cfg.dataset.kind == "csv":
        return load_csv(cfg.dataset.csv_train, cfg.dataset.csv_test, cfg.dataset.test_fraction, rng)
    return generate_synthetic(cfg.dataset.synthetic, rng)


@dataclass
class RunResult:
    run_id: str
    seed: int
    strategy: str
    metrics: list[PhaseMetrics]
    class_order: list[int]

    def rows(self) -> list[tuple]:
        return [(self.run_id, self.seed, self.strategy, m.phase, mode, m.accuracy[mode])
                for m in self.metrics for mode in MODES]

    def final_accuracy(self, mode: str = "cnn") -> float:
        return self.metrics[-1].accuracy[mode]

    def average_incremental(self, mode: str = "cnn") -> float:
        return average_incremental_accuracy(self.metrics, mode)


def format_rows(rows) -> str:
    buf = io.StringIO()
    buf.write(SCHEMA + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for run_id, seed, strategy, phase, mode, acc in rows:
        w.writerow([run_id, seed, strategy, phase, mode, repr(float(acc))])
    return buf.getvalue()


def run_single(cfg: ExperimentConfig, seed: int, strategy: str, out_dir: str | os.PathLike | None = None) -> RunResult:
    """Train one strategy through the whole stream for one seed."""
    data_rng, order_rng, train_seed = seed_streams(seed)
    dataset = build_dataset(cfg, data_rng)
    stream = split_stream(dataset, cfg.protocol, order_rng)
    run_id = f"{cfg.name}/{strategy}/seed{seed}"
    clf = EDBLClassifier(
        hidden_layer_sizes=cfg.hidden,
        train_config=cfg.train_config(strategy),
        memory_budget=cfg.protocol.budget,
        budget_policy=cfg.protocol.budget_policy,
        random_state=train_seed,
    )
    log_records: list[dict] = []
    metrics = []
    for phase in range(len(stream)):
        x, y = stream.train(phase)
        clf.partial_fit(x, y, log_sink=log_records.append)
        metrics.append(evaluate_phase(clf.model_, clf.store_, stream, phase))
        logger.info("%s phase %d: cnn=%.4f nme=%.4f", run_id, phase,
                    metrics[-1].accuracy["cnn"], metrics[-1].accuracy["nme"])
    result = RunResult(run_id, seed, strategy, metrics, [int(c) for c in stream.class_order])
    if out_dir is not None:
        _write_run(result, clf, log_records, Path(out_dir))
    return result


def _json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False) + "\n"


def _write_run(result: RunResult, clf: EDBLClassifier, log_records, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(format_rows(result.rows()), encoding="utf-8")
    with open(out / "per_class.jsonl", "w", encoding="utf-8") as fh:
        for m in result.metrics:
            seen = result.class_order[:m.n_seen]
            for mode in MODES:
                fh.write(_json_line({
                    "run_id": result.run_id, "seed": result.seed, "strategy": result.strategy,
                    "phase": m.phase, "mode": mode, "accuracy": m.accuracy[mode],
                    "classes": seen, "per_class": [float(v) for v in m.per_class[mode]],
                }))
    with open(out / "train_log.jsonl", "w", encoding="utf-8") as fh:
        for rec in log_records:
            fh.write(_json_line({k: (float(v) if isinstance(v, (float, np.floating)) else v)
                                 for k, v in rec.items()}))
    arrays = {**clf.model_.to_arrays(), **clf.store_.to_arrays(),
              "class_order": np.asarray(result.class_order, dtype=np.int64)}
    checkpoint.save(out / "checkpoint.bin", arrays)


def _run_job(args):
    cfg_dict, seed, strategy, out_dir = args
    return run_single(ExperimentConfig.from_dict(cfg_dict), seed, strategy, out_dir)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, write: bool = True) -> list[RunResult]:
    """All (seed, strategy) runs; results are ordered by seed then strategy."""
    root = Path(cfg.output)
    plan = [(seed, strategy) for seed in cfg.seeds for strategy in cfg.strategies]
    dirs = [root / strategy / f"seed{seed}" if write else None for seed, strategy in plan]
    if jobs > 1:
        payload = [(cfg.to_dict(), seed, strategy, d) for (seed, strategy), d in zip(plan, dirs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_job, payload))
    else:
        results = [run_single(cfg, seed, strategy, d) for (seed, strategy), d in zip(plan, dirs)]
    if write:
        root.mkdir(parents=True, exist_ok=True)
        (root / "config.yaml").write_text(cfg.to_yaml(), encoding="utf-8")
        rows = [row for r in results for row in r.rows()]
        (root / "metrics.csv").write_text(format_rows(rows), encoding="utf-8")
        (root / "summary.txt").write_text(summary_table(rows), encoding="utf-8")
    return results


# -- reporting -------------------------------------------------------------

def read_metrics(paths) -> list[tuple]:
    """Rows from metrics CSV files or directories containing them (recursively)."""
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            top = p / "metrics.csv"
            files.extend([top] if top.exists() else sorted(p.rglob("metrics.csv")))
        else:
            files.append(p)
    rows = []
    for f in files:
        with open(f, encoding="utf-8") as fh:
            first = fh.readline().rstrip("\n")
            if first != SCHEMA:
                raise ValueError(f"{f}: missing or unknown schema line {first!r}")
            for rec in csv.DictReader(fh):
                rows.append((rec["run_id"], int(rec["seed"]), rec["strategy"], int(rec["phase"]),
                             rec["mode"], float(rec["accuracy"])))
    return rows


def summarize(rows) -> dict:
    """``{(strategy, mode): {"phases": {phase: (mean, std, n)}, "avg_inc": (mean, std, n)}}``."""
    by_key: dict = {}
    for _, seed, strategy, phase, mode, acc in rows:
        by_key.setdefault((strategy, mode), {}).setdefault(phase, {})[seed] = acc
    out = {}
    for key, phases in by_key.items():
        stats = {p: _mean_std(list(v.values())) for p, v in sorted(phases.items())}
        seeds = sorted(set.intersection(*(set(v) for v in phases.values())))
        avg_inc = [np.mean([phases[p][s] for p in sorted(phases)]) for s in seeds]
        out[key] = {"phases": stats, "avg_inc": _mean_std(avg_inc)}
    return out


def _mean_std(values) -> tuple[float, float, int]:
    a = np.asarray(values, dtype=float)
    std = float(a.std(ddof=1)) if a.size > 1 else 0.0
    return float(a.mean()), std, int(a.size)


def summary_table(rows) -> str:
    """Strategy x phase table of mean +- std accuracy (percent) over seeds."""
    summary = summarize(rows)
    if not summary:
        return "(no rows)\n"
    phases = sorted({p for v in summary.values() for p in v["phases"]})
    head = ["strategy", "mode"] + [f"phase{p}" for p in phases] + ["avg_inc"]
    lines = []
    for (strategy, mode), v in sorted(summary.items()):
        cells = [strategy, mode]
        for p in phases:
            m = v["phases"].get(p)
            cells.append(f"{100 * m[0]:.2f}±{100 * m[1]:.2f}" if m else "-")
        a = v["avg_inc"]
        cells.append(f"{100 * a[0]:.2f}±{100 * a[1]:.2f}")
        lines.append(cells)
    widths = [max(len(str(r[i])) for r in [head] + lines) for i in range(len(head))]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    return "\n".join(fmt.format(*r) for r in [head] + lines) + "\n"
