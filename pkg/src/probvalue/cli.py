"""``probvalue`` command line: ``exact``, ``estimate`` and ``bench``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from probvalue.bench import BenchConfig, make_game, run_bench, run_exact
from probvalue.families import TargetSpec, parse_family
from probvalue.game import SOUGame, exact_sou_values
from probvalue.methods import check_method, run_method


def _load(path) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _bench_config(args) -> BenchConfig:
    data = _load(args.config)
    if args.seed is not None:
        data["seed"] = args.seed
    return BenchConfig.from_dict(data)


def cmd_exact(args) -> int:
    config = _bench_config(args)
    texts = run_exact(config, args.out)
    if args.out is None:
        sys.stdout.write(texts["exact.json"])
    return 0


def cmd_bench(args) -> int:
    config = _bench_config(args)
    texts = run_bench(config, args.out, threads=args.threads)
    if args.out is None:
        sys.stdout.write(texts["summary.csv"])
    return 0


ESTIMATE_KEYS = {"n", "eta", "sigma2", "family", "method", "budget", "seed", "options", "game"}


def cmd_estimate(args) -> int:
    data = _load(args.config)
    unknown = set(data) - ESTIMATE_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    seed = args.seed if args.seed is not None else int(data.get("seed", 0))
    if "game" in data:
        game = SOUGame.from_json(Path(data["game"]).read_text(encoding="utf-8"))
        n = game.n
    else:
        n = int(data.get("n", 10))
        bench = BenchConfig(n=n, etas=[data.get("eta", 0.25)], families=[], methods=[], runs=1, seed=seed,
                            sigma2=float(data.get("sigma2", 1.0)))
        game = make_game(bench, bench.etas[0])
    family = parse_family(data.get("family", "shapley"), n)
    method = data.get("method", "ease-fo")
    check_method(method, family)
    report = run_method(method, game, family, TargetSpec.identity(n), int(data.get("budget", 1000)),
                        np.random.default_rng(seed), data.get("options"))
    exact = exact_sou_values(game, family)
    doc = report.to_dict() | {"seed": seed, "family": family.name, "exact": exact.tolist()}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(text, encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="probvalue", description="Monte Carlo estimation of probabilistic values.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, helptext in (
        ("exact", cmd_exact, "closed-form values of the configured SOU games"),
        ("estimate", cmd_estimate, "one estimator run, printed as JSON"),
        ("bench", cmd_bench, "convergence curves and AUCC over the full matrix"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="master seed, overrides the config")
        p.add_argument("--threads", type=int, default=1, help="worker processes")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        args.threads = os.cpu_count() or 1
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"probvalue: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
