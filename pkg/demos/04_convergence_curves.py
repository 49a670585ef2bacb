"""A reduced version of the benchmark protocol.

Runs the bench harness on a 24-player game and prints the AUCC summary.
The same matrix is available from the command line with
``probvalue bench --config demos/bench_small.json --out results/``.
"""

import json
from pathlib import Path

from probvalue.bench import BenchConfig, run_bench

config = BenchConfig.from_dict(json.loads((Path(__file__).parent / "bench_small.json").read_text()))
texts = run_bench(config)
print(texts["summary.csv"].replace("\r\n", "\n"))
