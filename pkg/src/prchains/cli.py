"""Command-line interface.

Verbs:
    run <config>                          run an experiment grid
    synth --n --noise --seed --out FILE   write a synthetic dataset as CSV
    table <results-dir> --metric M        re-render a stored result table
    paths <results-dir> --instance I      print exported particle paths

Exit codes: 0 success, 1 partial grid failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import generate_synth
from .experiments import ConfigError, load_config, render_table, run


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return run(config)


def _cmd_synth(args) -> int:
    ds = generate_synth(args.n, args.noise, args.seed)
    Path(args.out).write_text(ds.to_csv())
    print(f"wrote {ds.n_instances} rows to {args.out}")
    return 0


def _cmd_table(args) -> int:
    results_file = Path(args.results_dir) / "results.json"
    if not results_file.exists():
        print(f"config error: no results.json under {args.results_dir}", file=sys.stderr)
        return 2
    results = json.loads(results_file.read_text())
    print(render_table(results, args.metric, args.format), end="")
    return 0


def _cmd_paths(args) -> int:
    paths_dir = Path(args.results_dir) / "paths"
    files = sorted(paths_dir.glob("*.jsonl")) if paths_dir.exists() else []
    if not files:
        print(f"config error: no path exports under {args.results_dir}", file=sys.stderr)
        return 2
    shown = 0
    for f in files:
        for line in f.read_text().splitlines():
            record = json.loads(line)
            if args.instance is not None and record["instance_id"] != args.instance:
                continue
            path_text = ", ".join(f"{v:+.4f}" for v in record["path"])
            print(f"{f.stem}  instance {record['instance_id']:>4}  "
                  f"particle {record['particle_id']:>4}  "
                  f"log_weight {record['log_weight']:+.4f}  [{path_text}]")
            shown += 1
    print(f"{shown} records")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prchains",
        description="Probabilistic regressor chain experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", help="path to an INI experiment config")
    p_run.set_defaults(func=_cmd_run)

    p_synth = sub.add_parser("synth", help="write the synthetic dataset as CSV")
    p_synth.add_argument("--n", type=int, default=1000)
    p_synth.add_argument("--noise", type=float, default=0.03)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(func=_cmd_synth)

    p_table = sub.add_parser("table", help="render a stored metric table")
    p_table.add_argument("results_dir")
    p_table.add_argument("--metric", choices=("mse", "mae", "zero_one"), default="mse")
    p_table.add_argument("--format", choices=("text", "csv"), default="text")
    p_table.set_defaults(func=_cmd_table)

    p_paths = sub.add_parser("paths", help="print exported particle paths")
    p_paths.add_argument("results_dir")
    p_paths.add_argument("--instance", type=int, default=None)
    p_paths.set_defaults(func=_cmd_paths)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
