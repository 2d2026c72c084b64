"""Run the desk-scale analyses (hour, localization, continuous, correlation, attribute head) on a checkpoint.

    python scripts/evaluate.py runs/desk/model.ckpt [--skip attr,continuous]
"""

import argparse
import json
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
import acceptance as acc  # noqa: E402
from geotemp import optim, synthworld  # noqa: E402


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("checkpoint")
    ap.add_argument("--skip", default="")
    args = ap.parse_args()
    skip = set(filter(None, args.skip.split(",")))
    t = acc.Trained(optim.load_checkpoint(args.checkpoint).model, synthworld.build_samples(acc.WORLD),
                    float("nan"), float("nan"), float("nan"), True)
    steps = {"hour": acc.hour_estimation, "loc": acc.localization, "continuous": acc.continuous,
             "corr": acc.correlation, "attr": acc.attribute_head}
    for name, fn in steps.items():
        if name in skip:
            continue
        t0 = time.perf_counter()
        r = fn(t)
        print(name, f"{time.perf_counter() - t0:.1f}s", json.dumps(r, default=str), flush=True)


if __name__ == "__main__":
    main()
