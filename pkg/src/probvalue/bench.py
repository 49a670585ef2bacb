"""Benchmark harness: SOU games, exact values, convergence curves and AUCC.

Every random stream is derived from the master seed and the *names* of the
work item (method, family, eta), so a run restricted to a subset of methods
or families reproduces the same rows.
"""

from __future__ import annotations

import csv
import io
import json
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from probvalue.diagnostics import ConvergenceCurve, aucc, relative_sq_error
from probvalue.estimators import endpoint_term, hajek_from_sample, ht_from_sample
from probvalue.families import TargetSpec, parse_family
from probvalue.game import SOUGame, brute_force_values, exact_sou_values, sou_generate
from probvalue.methods import METHODS, check_method, min_budget, run_method
from probvalue.sampling import named_law, sample

INCREMENTAL = frozenset({"ht", "hajek-ofa", "hajek-svarm"})
CURVE_FIELDS = ["method", "family", "n", "eta", "run", "seed", "budget", "queries", "evals_per_player", "rel_sq_error"]
AUCC_FIELDS = ["method", "family", "n", "eta", "run", "seed", "aucc"]
SUMMARY_FIELDS = ["method", "family", "n", "eta", "runs", "mean_aucc", "std_aucc"]


def _budgets(spec) -> list[int]:
    if isinstance(spec, dict):
        return list(range(int(spec["start"]), int(spec["stop"]) + 1, int(spec["step"])))
    return [int(b) for b in spec]


@dataclass
class BenchConfig:
    n: int = 40
    etas: list = field(default_factory=lambda: [0.25])
    families: list = field(default_factory=lambda: ["shapley"])
    methods: list = field(default_factory=lambda: ["ht", "hajek-ofa", "ease-fo", "ease-sp"])
    budgets: list = field(default_factory=lambda: list(range(50, 5001, 50)))
    runs: int = 10
    seed: int = 0
    sigma2: float = 1.0
    incremental: bool = False
    options: dict = field(default_factory=dict)
    check_brute_force: bool = True

    def __post_init__(self):
        self.budgets = _budgets(self.budgets)
        if not self.budgets or any(b <= a for a, b in zip(self.budgets, self.budgets[1:])):
            raise ValueError("budgets must be a nonempty strictly increasing list")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        self.etas = [float(e) for e in self.etas]
        for fam in self.families:
            family = parse_family(fam, self.n)
            for method in self.methods:
                check_method(method, family)
                if self.budgets[0] < min_budget(method, self.options.get(method)):
                    raise ValueError(f"smallest budget {self.budgets[0]} is too small for {method}")

    @classmethod
    def from_dict(cls, data: dict) -> "BenchConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "BenchConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _tag(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def game_seed(master: int, n: int, eta: float) -> int:
    ss = np.random.SeedSequence(master, spawn_key=(0, n, _tag(repr(float(eta)))))
    return int(ss.generate_state(1, np.uint64)[0])


def stream_seed(master: int, method: str, family: str, eta: float, run: int, budget: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(1, _tag(method), _tag(family), _tag(repr(float(eta))), run, budget))


def make_game(config: BenchConfig, eta: float) -> SOUGame:
    return sou_generate(config.n, eta, config.sigma2, seed=game_seed(config.seed, config.n, eta))


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _incremental_curve(game, family, targets, method, budgets, rng):
    """Single stream evaluated once; each budget uses a prefix of it."""
    n = family.n
    law = named_law("uniform" if method == "ht" else method.split("-")[1], n)
    masks = sample(law, rng, budgets[-1] - 2)
    y = game.evaluate_batch(masks)
    ends = endpoint_term(game, family, targets)
    out = []
    for b in budgets:
        m = b - 2
        if method == "ht":
            core = ht_from_sample(family, targets, law, masks[:m], y[:m])
        else:
            core = hajek_from_sample(family, targets, law, "membership", masks[:m], y[:m])
        out.append((core + ends, b))
    return out


def run_item(config: BenchConfig, method: str, family_name: str, eta: float, run: int, game: SOUGame | None = None):
    """Curve rows and the AUCC row for one (method, family, eta, run)."""
    game = make_game(config, eta) if game is None else game
    family = parse_family(family_name, config.n)
    targets = TargetSpec.identity(config.n)
    exact = exact_sou_values(game, family)
    options = config.options.get(method, {})
    base = stream_seed(config.seed, method, family_name, eta, run)
    seed_id = int(base.generate_state(1, np.uint32)[0])
    results = []
    if config.incremental and method in INCREMENTAL:
        game.ledger.reset()
        for est, b in _incremental_curve(game, family, targets, method, config.budgets, np.random.default_rng(base)):
            results.append((b, b, relative_sq_error(est, exact)))
    else:
        for b in config.budgets:
            rng = np.random.default_rng(stream_seed(config.seed, method, family_name, eta, run, b))
            before = game.ledger.count
            report = run_method(method, game, family, targets, b, rng, options)
            used = game.ledger.count - before
            if used != report.queries or used > b:
                raise RuntimeError(f"query accounting mismatch for {method} at budget {b}")
            results.append((b, used, relative_sq_error(report.estimates, exact)))
    common = [method, family_name, config.n, _fmt(eta), run, seed_id]
    curve_rows = [common + [b, q, _fmt(q / config.n), _fmt(err)] for b, q, err in results]
    curve = ConvergenceCurve(tuple(r[0] for r in results), tuple(r[2] for r in results), method, seed_id)
    return curve_rows, common + [_fmt(aucc(curve))]


def _item_worker(args):
    config_dict, method, family, eta, run = args
    config = BenchConfig.from_dict(config_dict)
    return run_item(config, method, family, eta, run)


def work_items(config: BenchConfig):
    for eta in config.etas:
        for family in config.families:
            for method in config.methods:
                for run in range(config.runs):
                    yield method, family, eta, run


def _item_key(row):
    return (row[0], row[1], float(row[3]), row[4])


def _curve_key(row):
    return _item_key(row) + (row[6],)


def run_bench(config: BenchConfig, out_dir=None, threads: int = 1) -> dict:
    """Run the full matrix; returns CSV texts and writes them when ``out_dir`` is set."""
    items = list(work_items(config))
    curve_rows, aucc_rows = [], []
    if threads > 1:
        payload = [(asdict(config), *item) for item in items]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for rows, arow in pool.map(_item_worker, payload):
                curve_rows += rows
                aucc_rows.append(arow)
    else:
        games = {eta: make_game(config, eta) for eta in config.etas}
        for method, family, eta, run in items:
            rows, arow = run_item(config, method, family, eta, run, games[eta])
            curve_rows += rows
            aucc_rows.append(arow)
    curve_rows.sort(key=_curve_key)
    aucc_rows.sort(key=_item_key)
    summary_rows = []
    groups: dict = {}
    for row in aucc_rows:
        groups.setdefault(tuple(row[:4]), []).append(float(row[6]))
    for key in sorted(groups, key=lambda k: (k[0], k[1], float(k[3]))):
        vals = np.array(groups[key])
        std = float(vals.std(ddof=1)) if vals.size > 1 else float("nan")
        summary_rows.append(list(key) + [vals.size, _fmt(vals.mean()), _fmt(std)])
    texts = {
        "curves.csv": _csv(CURVE_FIELDS, curve_rows),
        "aucc.csv": _csv(AUCC_FIELDS, aucc_rows),
        "summary.csv": _csv(SUMMARY_FIELDS, summary_rows),
    }
    if out_dir is not None:
        _write_all(out_dir, texts)
    return texts


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _write_all(out_dir, texts: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in texts.items():
        (out / name).write_bytes(text.encode("utf-8"))


def run_exact(config: BenchConfig, out_dir=None) -> dict:
    """Exact value vectors per (eta, family), plus the games as JSON."""
    records, games = [], {}
    for eta in config.etas:
        game = make_game(config, eta)
        gname = f"game_n{config.n}_eta{_fmt(eta)}.json"
        games[gname] = game.to_json()
        for fam in config.families:
            family = parse_family(fam, config.n)
            values = exact_sou_values(game, family)
            rec = {
                "n": config.n,
                "eta": float(eta),
                "game_seed": game_seed(config.seed, config.n, eta),
                "game": gname,
                "family": fam,
                "values": [float(v) for v in values],
            }
            if config.check_brute_force and config.n <= 12:
                brute = brute_force_values(game, family)
                rec["brute_force_max_abs_diff"] = float(np.max(np.abs(brute - values)))
            records.append(rec)
    texts = {"exact.json": json.dumps(records, indent=2, sort_keys=True) + "\n"}
    texts.update({k: v + "\n" for k, v in games.items()})
    if out_dir is not None:
        _write_all(out_dir, texts)
    return texts


__all__ = [
    "BenchConfig",
    "INCREMENTAL",
    "METHODS",
    "game_seed",
    "stream_seed",
    "make_game",
    "run_item",
    "run_bench",
    "run_exact",
    "work_items",
]
