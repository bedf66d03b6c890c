"""Measure how far distillation pulls the student toward its teacher.

Trains with both distillation arms on (contrastive acoustic arm at a sharp
temperature, regression linguistic arm) against a low-dimensional synthetic
teacher, then reports the dev-set alignment before and after: mean cosine
between projected fired vectors and teacher embeddings, and mean per-dim
MSE between projected decoder states and teacher embeddings.

Utterances whose weight scaling overflows the firing threshold are skipped
by the measurement; very long runs polarize the weights until nothing on
dev is measurable, which is why the default epoch count is moderate.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from cifkd.config import TrainConfig
from cifkd.data import SynthConfig, generate_synthetic, load_dataset
from cifkd.teacher import synthetic_teacher
from cifkd.train import (acoustic_teacher_cosine, build_heads, build_model,
                         linguistic_teacher_mse, train_run)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="runs/pull")
    ap.add_argument("--teacher-dim", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--lambda-ad", type=float, default=1.0)
    ap.add_argument("--lambda-ld", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    work = Path(args.workdir)
    data = work / "data"
    if not (data / "train.fea").exists():
        generate_synthetic(data, SynthConfig(vocab_size=20, n_train=50,
                                             n_dev=16, n_test=16, seed=7,
                                             mu=8.0, min_tokens=2,
                                             max_tokens=7))

    cfg = TrainConfig(data_dir=str(data), out_dir=str(work / "model"),
                      teacher_dim=args.teacher_dim, teacher_seed=0,
                      vocab_size=20, d_model=64, lambda_ad=args.lambda_ad,
                      lambda_ld=args.lambda_ld, ad_loss_kind="CONT",
                      temperature=0.02, negatives=64, lr=1e-3,
                      warmup_steps=20, epochs=args.epochs, batch_size=8,
                      seed=args.seed, eval_every=max(args.epochs, 1),
                      beam_size=1)

    dev = load_dataset(cfg.data_dir, "dev")
    store = synthetic_teacher(cfg.vocab_size, cfg.teacher_dim,
                              cfg.teacher_seed).build_store(dev.transcripts())

    rng0 = np.random.default_rng([cfg.seed, 0])
    model0 = build_model(cfg, rng0)
    heads0 = build_heads(cfg, rng0)
    cos0 = acoustic_teacher_cosine(model0, heads0["ad_head"], store, dev)
    mse0 = linguistic_teacher_mse(model0, heads0["ld_head"], store, dev)
    print(f"init:    dev cosine {cos0:+.4f}   per-dim mse {mse0:.5f}")

    _, model, heads = train_run(cfg)
    try:
        cos1 = acoustic_teacher_cosine(model, heads["ad_head"], store, dev)
        mse1 = linguistic_teacher_mse(model, heads["ld_head"], store, dev)
    except ValueError as exc:
        print(f"trained: unmeasurable ({exc}); lower --epochs")
        return
    print(f"trained: dev cosine {cos1:+.4f}   per-dim mse {mse1:.5f} "
          f"({mse0 / mse1:.1f}x drop)")


if __name__ == "__main__":
    main()
