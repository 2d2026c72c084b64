"""Desk-scale run: generate the hybrid synthetic world, train, checkpoint.

    python scripts/desk_run.py --out runs/desk [--iterations 20000] [--dtype float32]
"""

import argparse
import json
import logging
import time
from pathlib import Path

from geotemp import net, optim, synthworld


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--iterations", type=int, default=20000)
    ap.add_argument("--halving", type=int, default=8000)
    ap.add_argument("--dtype", default="float32")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--texture-pool", type=int, default=64)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    data = synthworld.build_samples(synthworld.WorldConfig(seed=args.seed, texture_pool=args.texture_pool))
    t_gen = time.perf_counter() - t0
    model = net.init_model(net.ModelConfig(dtype=args.dtype), seed=args.seed)
    cfg = optim.TrainConfig(iterations=args.iterations, halving_interval=args.halving, seed=args.seed)
    res = optim.train(model, data.train(), cfg)
    optim.save_checkpoint(out / "model.ckpt", model, res.optimizer, res.iteration, cfg)
    summary = {
        "generate_seconds": t_gen,
        "train_seconds": res.seconds,
        "initial_loss": res.losses[0],
        "final_loss_mean100": sum(res.losses[-100:]) / 100,
    }
    (out / "losses.txt").write_text("\n".join(f"{x:.6f}" for x in res.losses))
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
