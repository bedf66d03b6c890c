"""Overfit sanity run: 50 synthetic utterances, no distillation.

A healthy model drives train CER below 5% in well under 200 epochs. This is
the fastest end-to-end check that the encoder, weight scaling, decoder, and
optimizer cooperate.
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from cifkd.config import TrainConfig
from cifkd.data import SynthConfig, generate_synthetic
from cifkd.train import train_run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="runs/overfit")
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--stop-cer", type=float, default=0.03,
                    help="end the run once train CER falls below this")
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    work = Path(args.workdir)
    data = work / "data"
    if not (data / "train.fea").exists():
        generate_synthetic(data, SynthConfig(vocab_size=20, n_train=50,
                                             n_dev=16, n_test=16, seed=7,
                                             mu=8.0, min_tokens=2,
                                             max_tokens=7))
        print(f"wrote synthetic corpus under {data}")

    cfg = TrainConfig(data_dir=str(data), out_dir=str(work / "model"),
                      vocab_size=20, d_model=64, lr=1e-3, warmup_steps=20,
                      epochs=args.epochs, batch_size=8, seed=args.seed,
                      eval_every=5, beam_size=1)
    t0 = time.perf_counter()
    result, _, _ = train_run(cfg, stop_train_cer=args.stop_cer)
    dt = time.perf_counter() - t0
    print(f"train CER {result.final_train_cer:.4f} "
          f"(best dev {result.best_dev_cer:.4f}) after "
          f"{result.epochs_run} epochs in {dt:.0f}s")
    print(f"metrics: {result.metrics_path}")
    print(f"checkpoint: {result.best_path}")


if __name__ == "__main__":
    main()
