"""Command line entry point: ``edbl {generate,run,ablate,report,presets}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ABLATION_STRATEGIES, ExperimentConfig, load_preset, preset_names
from .data import write_csv
from .exceptions import ConfigError, ParseError
from .harness import build_dataset, read_metrics, run_experiment, seed_streams, summary_table

log = logging.getLogger("edbl")


def _int_list(text: str) -> tuple[int, ...]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return tuple(out)


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _load_config(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigError("use either --config or --preset, not both")
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = load_preset(args.preset or "desk-base0-5")
    if getattr(args, "seeds", None):
        cfg = replace(cfg, seeds=_int_list(args.seeds))
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    if getattr(args, "strategies", None):
        cfg = replace(cfg, strategies=_str_list(args.strategies))
    if getattr(args, "out", None):
        cfg = replace(cfg, output=args.out)
    return cfg


def _add_common(p: argparse.ArgumentParser, seeds: bool = True, strategies: bool = True) -> None:
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--preset", help=f"named preset ({', '.join(preset_names())})")
    p.add_argument("--out", help="output directory")
    if seeds:
        p.add_argument("--seed", type=int, help="single seed (overrides --seeds)")
        p.add_argument("--seeds", help="comma list or ranges, e.g. 0-4")
    if strategies:
        p.add_argument("--strategies", help="comma list, e.g. baseline,edbl")


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    data_rng, _, _ = seed_streams(seed)
    ds = build_dataset(cfg, data_rng)
    out = Path(args.out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "train.csv", ds.x_train, ds.y_train)
    write_csv(out / "test.csv", ds.x_test, ds.y_test)
    (out / "config.yaml").write_text(cfg.to_yaml(), encoding="utf-8")
    print(f"wrote {len(ds.y_train)} train / {len(ds.y_test)} test samples to {out}")
    return 0


def _run(cfg: ExperimentConfig, jobs: int) -> int:
    results = run_experiment(cfg, jobs=jobs)
    rows = [row for r in results for row in r.rows()]
    print(summary_table(rows), end="")
    print(f"outputs in {cfg.output}")
    return 0


def cmd_run(args) -> int:
    return _run(_load_config(args), args.jobs)


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    if not args.strategies:
        cfg = replace(cfg, strategies=ABLATION_STRATEGIES)
    if not args.out:
        cfg = replace(cfg, output=str(Path(cfg.output) / "ablation"))
    return _run(cfg, args.jobs)


def cmd_report(args) -> int:
    rows = read_metrics(args.paths)
    if not rows:
        print("no metric rows found", file=sys.stderr)
        return 1
    print(summary_table(rows), end="")
    return 0


def cmd_presets(args) -> int:
    if args.name:
        print(load_preset(args.name).to_yaml(), end="")
    else:
        print("\n".join(preset_names()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edbl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write the configured dataset as CSV")
    _add_common(p, strategies=False)
    p.set_defaults(func=cmd_generate)

    for name, func, text in (("run", cmd_run, "run the configured strategies"),
                             ("ablate", cmd_ablate, "run every ablation strategy")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="summarise metrics CSV files")
    p.add_argument("paths", nargs="+", help="metrics.csv files or run directories")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("presets", help="list presets or print one as YAML")
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParseError, OSError, ValueError) as exc:
        print(f"edbl: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
