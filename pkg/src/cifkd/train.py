"""Training loop, evaluation, checkpointing, and the temperature/negatives sweep.

One worker owns the parameters. Each epoch shuffles the training utterances,
cuts them into batches, and for every utterance runs the full pipeline:
augment -> encode -> weight scaling -> integrate-and-fire -> decoder, with
CTC read off the encoder states. Cross-entropy, CTC and quantity losses are
averaged over the batch; the two distillation losses see the whole batch at
once because the contrastive negatives are drawn from the batch pool.

Determinism: four named RNG streams (init, shuffle, augment, sampler) are
spawned from the run seed, so two runs with the same config produce byte
identical metrics logs. Utterances whose scaled weights overflow the firing
threshold are skipped for that step with a warning rather than aborting.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import load_checkpoint, restore_model, save_checkpoint
from .cif import (
    DegenerateWeightsError,
    WeightOverflowError,
    integrate_and_fire,
    quantity_loss,
    scale_weights,
)
from .config import TrainConfig
from .data import Dataset, load_dataset
from .decoding import decode_utterance
from .distill import ProjectionHead, acoustic_distill_loss, linguistic_distill_loss
from .losses import CtcLengthError, ce_loss_smoothed, ctc_loss, total_loss
from .metrics import corpus_error_rate
from .model import BOS, EOS, AsrModel
from .optim import Adam
from .augment import spec_augment
from .teacher import align_check, load_embedding_file, synthetic_teacher

logger = logging.getLogger(__name__)

METRICS_HEADER = ["step", "epoch", "ce", "ctc", "qua", "ad", "ld", "total",
                  "dev_cer"]


@dataclass
class TrainResult:
    metrics_path: Path
    best_path: Path
    best_dev_cer: float
    final_train_cer: float
    epochs_run: int


def build_model(cfg: TrainConfig, rng=None) -> AsrModel:
    if rng is None:
        rng = np.random.default_rng([cfg.seed, 0])
    return AsrModel(cfg.model_config(), cfg.cif_config(), rng)


def build_heads(cfg: TrainConfig, rng) -> dict:
    """Distillation projection heads, only for enabled loss arms."""
    heads = {}
    if cfg.lambda_ad > 0:
        heads["ad_head"] = ProjectionHead(cfg.d_model, cfg.teacher_dim, rng,
                                          "ad_head")
    if cfg.lambda_ld > 0:
        heads["ld_head"] = ProjectionHead(cfg.d_model, cfg.teacher_dim, rng,
                                          "ld_head")
    return heads


def all_named_parameters(model: AsrModel, heads: dict):
    named = list(model.named_parameters())
    for head in heads.values():
        named += head.named_parameters()
    return named


def prepare_teacher(cfg: TrainConfig, train_set: Dataset):
    """Embedding store from disk, or the deterministic synthetic teacher."""
    if cfg.teacher_file:
        return load_embedding_file(cfg.teacher_file, expect_dim=cfg.teacher_dim)
    teacher = synthetic_teacher(cfg.vocab_size, cfg.teacher_dim, cfg.teacher_seed)
    return teacher.build_store(train_set.transcripts())


def _check_alignment(store, train_set: Dataset):
    for utt in train_set:
        align_check(store.get(utt.utt_id), len(utt.tokens))


def _mean_scalars(parts):
    if len(parts) == 1:
        return parts[0]
    return ad.mean(ad.concat([ad.reshape(p, (1,)) for p in parts], axis=0))


def forward_utterance(model: AsrModel, features: np.ndarray, target,
                      cfg: TrainConfig):
    """Losses and distillation taps for one utterance.

    Returns (ce, ctc, qua, C, S). Raises WeightOverflowError /
    DegenerateWeightsError / CtcLengthError for utterances the current
    weights cannot carry; the caller decides whether to skip.
    """
    I = len(target)
    H = model.encode(ad.tensor(features))
    a = model.cif.compute_weights(H)
    qua = quantity_loss(a, I)
    a_scaled = scale_weights(a, I, cfg.threshold)
    C, plan = integrate_and_fire(a_scaled, H, model.cif_cfg)
    if plan.fired != I:
        raise WeightOverflowError(
            f"scaled weights fired {plan.fired} times for {I} tokens")
    prev = [BOS] + list(target[:-1])
    logits, S = model.decode_step(C, prev)
    ce = ce_loss_smoothed(logits, target, cfg.label_smoothing)
    ctc = ctc_loss(model.ctc_head(H), target)
    return ce, ctc, qua, C, S


def student_taps(model: AsrModel, features: np.ndarray, target,
                 threshold: float = 1.0):
    """Teacher-forced (C, S) arrays for one utterance, no gradients."""
    with ad.no_grad():
        H = model.encode(ad.tensor(features))
        a = model.cif.compute_weights(H)
        C, _ = integrate_and_fire(scale_weights(a, len(target), threshold),
                                  H, model.cif_cfg)
        _, S = model.decode_step(C, [BOS] + list(target[:-1]))
    return C.data, S.data


def acoustic_teacher_cosine(model: AsrModel, head: ProjectionHead, store,
                            dataset: Dataset, threshold: float = 1.0) -> float:
    """Mean cosine between projected fired vectors and teacher embeddings."""
    from .distill import normalize_rows
    sims, skipped = [], 0
    for utt in dataset:
        try:
            C, _ = student_taps(model, utt.features, utt.tokens, threshold)
        except (WeightOverflowError, DegenerateWeightsError):
            skipped += 1
            continue
        with ad.no_grad():
            proj = head.project(ad.tensor(C)).data
        student = normalize_rows(np.asarray(proj, dtype=np.float64))
        teacher = normalize_rows(
            np.asarray(store.get(utt.utt_id).E, dtype=np.float64))
        sims.extend(np.sum(student * teacher, axis=1))
    if not sims:
        raise ValueError(f"no measurable utterances ({skipped} skipped)")
    return float(np.mean(sims))


def linguistic_teacher_mse(model: AsrModel, head: ProjectionHead, store,
                           dataset: Dataset, threshold: float = 1.0) -> float:
    """Mean per-dimension squared error between projected decoder states
    and teacher embeddings."""
    total, count, skipped = 0.0, 0, 0
    for utt in dataset:
        try:
            _, S = student_taps(model, utt.features, utt.tokens, threshold)
        except (WeightOverflowError, DegenerateWeightsError):
            skipped += 1
            continue
        with ad.no_grad():
            proj = head.project(ad.tensor(S)).data
        diff = np.asarray(proj, dtype=np.float64) - store.get(utt.utt_id).E
        total += float(np.sum(diff * diff))
        count += diff.size
    if count == 0:
        raise ValueError(f"no measurable utterances ({skipped} skipped)")
    return total / count


def evaluate(model: AsrModel, dataset: Dataset, beam_size: int = 10,
             length_normalize: bool = False) -> float:
    """Corpus token error rate with <EOS> stripped from both sides."""
    pairs = []
    for utt in dataset:
        hyp = decode_utterance(model, utt.features, beam_size=beam_size,
                               length_normalize=length_normalize)
        pairs.append(([t for t in hyp if t != EOS],
                      [t for t in utt.tokens if t != EOS]))
    return corpus_error_rate(pairs)


def _format_row(step, epoch, values, dev_cer):
    row = [str(step), str(epoch)]
    row += [f"{values[k]:.6f}" for k in ("ce", "ctc", "qua", "ad", "ld", "total")]
    row.append("" if dev_cer is None else f"{dev_cer:.6f}")
    return row


def train_run(cfg: TrainConfig, stop_train_cer: float = 0.0):
    """Full training run; returns (TrainResult, model, heads).

    ``stop_train_cer`` > 0 ends the run early once the train-set error rate
    drops below it (checked on evaluation epochs).
    """
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_set = load_dataset(cfg.data_dir, "train")
    dev_set = load_dataset(cfg.data_dir, "dev")

    rng_init = np.random.default_rng([cfg.seed, 0])
    rng_shuffle = np.random.default_rng([cfg.seed, 1])
    rng_augment = np.random.default_rng([cfg.seed, 2])
    rng_sampler = np.random.default_rng([cfg.seed, 3])

    model = AsrModel(cfg.model_config(), cfg.cif_config(), rng_init)
    heads = build_heads(cfg, rng_init)
    distill_on = bool(heads)
    store = None
    if distill_on:
        store = prepare_teacher(cfg, train_set)
        _check_alignment(store, train_set)

    named = all_named_parameters(model, heads)
    params = [p for _, p in named]
    adam = Adam(params, cfg.optim_config())
    loss_cfg = cfg.loss_config()
    distill_cfg = cfg.distill_config()
    augment_cfg = cfg.augment_config()
    config_text = cfg.to_text()

    metrics_path = out_dir / "metrics.csv"
    best_path = out_dir / "best.ckpt"
    best_dev = float("inf")
    train_cer = float("inf")
    step = 0
    epochs_run = 0

    with open(metrics_path, "w", newline="") as metrics_file:
        writer = csv.writer(metrics_file)
        writer.writerow(METRICS_HEADER)
        stop = False
        for epoch in range(1, cfg.epochs + 1):
            epochs_run = epoch
            order = rng_shuffle.permutation(len(train_set))
            epoch_rows = []
            for start in range(0, len(order), cfg.batch_size):
                batch = [train_set.utterances[i]
                         for i in order[start:start + cfg.batch_size]]
                ce_parts, ctc_parts, qua_parts = [], [], []
                C_batch, S_batch, teacher_batch = [], [], []
                for utt in batch:
                    feats = utt.features
                    if cfg.augment_prob > 0:
                        feats = spec_augment(feats, augment_cfg, rng_augment)
                    try:
                        ce, ctc, qua, C, S = forward_utterance(
                            model, feats, utt.tokens, cfg)
                    except (WeightOverflowError, DegenerateWeightsError,
                            CtcLengthError) as exc:
                        logger.warning("skipping %s at step %d: %s",
                                       utt.utt_id, step + 1, exc)
                        continue
                    ce_parts.append(ce)
                    ctc_parts.append(ctc)
                    qua_parts.append(qua)
                    if distill_on:
                        C_batch.append(C)
                        S_batch.append(S)
                        teacher_batch.append(store.get(utt.utt_id).E)
                sampler_seed = int(rng_sampler.integers(2 ** 31))
                if not ce_parts:
                    logger.warning("entire batch skipped at step %d", step + 1)
                    continue
                ad_term = ld_term = None
                if cfg.lambda_ad > 0:
                    ad_term = acoustic_distill_loss(
                        C_batch, teacher_batch, heads["ad_head"], distill_cfg,
                        sampler_seed)
                if cfg.lambda_ld > 0:
                    ld_term = linguistic_distill_loss(
                        S_batch, teacher_batch, heads["ld_head"], distill_cfg)
                bundle = total_loss(
                    _mean_scalars(ce_parts), _mean_scalars(ctc_parts),
                    _mean_scalars(qua_parts), loss_cfg,
                    ad_term=ad_term, ld_term=ld_term,
                    lambda_ad=cfg.lambda_ad, lambda_ld=cfg.lambda_ld)
                for p in params:
                    p.zero_grad()
                ad.backward(bundle.total)
                adam.step()
                step += 1
                epoch_rows.append(_format_row(step, epoch, bundle.values(), None))

            is_eval = epoch % cfg.eval_every == 0 or epoch == cfg.epochs
            if is_eval and epoch_rows:
                dev_cer = evaluate(model, dev_set, beam_size=cfg.beam_size,
                                   length_normalize=cfg.length_normalize)
                epoch_rows[-1][-1] = f"{dev_cer:.6f}"
                if dev_cer < best_dev:
                    best_dev = dev_cer
                    save_checkpoint(best_path, named, config_text)
                if stop_train_cer > 0:
                    train_cer = evaluate(model, train_set,
                                         beam_size=cfg.beam_size,
                                         length_normalize=cfg.length_normalize)
                    if train_cer < stop_train_cer:
                        stop = True
            writer.writerows(epoch_rows)
            if stop:
                break

    if not best_path.exists():
        save_checkpoint(best_path, named, config_text)
    if train_cer == float("inf"):
        train_cer = evaluate(model, train_set, beam_size=cfg.beam_size,
                             length_normalize=cfg.length_normalize)
    result = TrainResult(metrics_path=metrics_path, best_path=best_path,
                         best_dev_cer=best_dev, final_train_cer=train_cer,
                         epochs_run=epochs_run)
    return result, model, heads


def load_model_for_eval(ckpt_path, cfg: TrainConfig):
    """Rebuild the model (and any heads) and restore checkpoint parameters."""
    rng = np.random.default_rng([cfg.seed, 0])
    model = AsrModel(cfg.model_config(), cfg.cif_config(), rng)
    heads = build_heads(cfg, rng)
    _, arrays = load_checkpoint(ckpt_path)
    holder = _ParamHolder(all_named_parameters(model, heads))
    restore_model(holder, arrays)
    return model, heads


class _ParamHolder:
    """Adapter so checkpoint restore can cover model plus distill heads."""

    def __init__(self, named):
        self._named = list(named)

    def named_parameters(self):
        return self._named


def sweep(base_cfg: TrainConfig, taus, ks, out_path):
    """Train one model per (temperature, negatives) grid point.

    Failures are logged and leave the row's error-rate cells empty; the rest
    of the grid still runs.
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for tau in taus:
        for k in ks:
            run_cfg = dataclasses.replace(
                base_cfg, temperature=float(tau), negatives=int(k),
                out_dir=str(Path(base_cfg.out_dir) / f"sweep-t{tau}-k{k}"))
            try:
                result, model, _ = train_run(run_cfg)
                test_set = load_dataset(run_cfg.data_dir, "test")
                test_cer = evaluate(model, test_set,
                                    beam_size=run_cfg.beam_size,
                                    length_normalize=run_cfg.length_normalize)
                rows.append([tau, k, f"{result.best_dev_cer:.6f}",
                             f"{test_cer:.6f}"])
            except Exception as exc:
                logger.error("sweep point tau=%s K=%s failed: %s", tau, k, exc)
                rows.append([tau, k, "", ""])
    with open(out_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["tau", "negatives", "dev_cer", "test_cer"])
        writer.writerows(rows)
    return out_path
