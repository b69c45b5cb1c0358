"""Fine-step reference hit fractions for the positivity acceptance check.

Writes ``tests/fixtures/hit_fraction_oracle.json``.  The acceptance test reads
the frozen numbers instead of recomputing them.
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

from degsde.model import build_model
from degsde.paths import monte_carlo

VARIANTS = {"passing": ["3", "3"], "violating": ["0.05", "0.05"]}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dt", type=float, default=1e-5)
    ap.add_argument("--paths", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent
                                          / "tests" / "fixtures" / "hit_fraction_oracle.json"))
    args = ap.parse_args()
    doc = {"dt": args.dt, "paths": args.paths, "seed": args.seed, "T": 1.0, "eps_hit": 1e-3,
           "x0": [1.0, 1.0], "variants": {}}
    for name, mu in VARIANTS.items():
        started = time.perf_counter()
        model = build_model({"kind": "multicir", "n": 2, "mu": mu})
        s = monte_carlo(model, [1.0, 1.0], 1.0, args.dt, args.paths, seed=args.seed, eps_hit=1e-3)
        doc["variants"][name] = {"mu": mu, "any_hit_fraction": s.any_hit_fraction,
                                 "hit_fraction": s.hit_fraction,
                                 "seconds": time.perf_counter() - started}
        print(name, doc["variants"][name], flush=True)
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")


if __name__ == "__main__":
    main()
