"""Run the toy localisation experiment and print a comparison table.

    python3 scripts/run_toy_experiment.py [--config FILE] [--images N]
"""

import argparse
import logging

from fovex.config import load_config
from fovex.experiment import run_toy_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config")
    parser.add_argument("--images", type=int, default=100)
    parser.add_argument("--seed", type=int)
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    result = run_toy_experiment(cfg, n_eval=args.images)

    print(f"held-out accuracy: {result.accuracy:.4f}")
    names = list(cfg.metrics)
    print("method".ljust(12) + "".join(n.rjust(10) for n in names))
    for method, report in result.reports.items():
        row = "".join(("-" if report.aggregate[n] is None else f"{report.aggregate[n]:.4f}").rjust(10) for n in names)
        print(method.ljust(12) + row)
    print(f"elapsed: {result.seconds:.1f} s")


if __name__ == "__main__":
    main()
