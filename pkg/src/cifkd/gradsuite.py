"""The named gradient-check suite behind the `gradcheck` command.

Every entry compares the engine's reverse-mode gradients against central
finite differences in 64-bit mode. The cases cover the integrate-and-fire
bridge (weights and encoder states), the quantity loss, all four
distillation losses through their projection heads, CTC, label-smoothed
cross-entropy, and the fully assembled training objective on a micro batch
of two utterances with every parameter perturbed.

Firing plans are frozen before differencing: the boundary pattern is a
step function of the weights, so probes must not be allowed to flip it.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .cif import CifConfig, apply_firing_plan, build_firing_plan, quantity_loss, scale_weights
from .config import TrainConfig
from .distill import (
    DistillConfig,
    ProjectionHead,
    acoustic_distill_loss,
    linguistic_distill_loss,
)
from .gradcheck import GradCheckReport, grad_check
from .losses import ce_loss_smoothed, ctc_loss, total_loss
from .model import BOS, AsrModel

DEFAULT_TOL = 1e-3


def _t(rng, shape, scale=1.0):
    return ad.tensor(scale * rng.normal(size=shape), requires_grad=True)


def _case_integrate_and_fire(rng):
    # Weights scaled to fire 3 times over 8 steps; the plan is built once
    # from the initial values and held fixed while probing a and H.
    raw = rng.uniform(0.2, 0.9, size=8)
    scaled = raw * (3.0 / raw.sum())
    plan = build_firing_plan(scaled, CifConfig())
    a = ad.tensor(scaled, requires_grad=True)
    H = _t(rng, (8, 5))
    w = rng.normal(size=(plan.fired, 5))

    def f(a_, H_):
        C = apply_firing_plan(plan, a_, H_)
        return ad.sum_(ad.mul(C, ad.tensor(w)))

    return [a, H], f


def _case_quantity_loss(rng):
    a = ad.tensor(rng.uniform(0.1, 0.9, size=10), requires_grad=True)
    return [a], lambda a_: quantity_loss(a_, 4)


def _distill_fixture(rng, kind):
    cfg = DistillConfig(ad_loss_kind=kind, negatives=2, temperature=0.5)
    head = ProjectionHead(6, 4, rng, "head")
    C_batch = [_t(rng, (3, 6)), _t(rng, (2, 6))]
    teacher = [rng.normal(size=(3, 4)), rng.normal(size=(2, 4))]
    xs = [*C_batch, head.w, head.b]

    def f(c0, c1, _w, _b):
        return acoustic_distill_loss([c0, c1], teacher, head, cfg, seed=7)

    return xs, f


def _case_contrastive(rng):
    return _distill_fixture(rng, "CONT")


def _case_acoustic_mse(rng):
    return _distill_fixture(rng, "MSE")


def _case_acoustic_cosine(rng):
    return _distill_fixture(rng, "COS")


def _case_linguistic_regression(rng):
    cfg = DistillConfig()
    head = ProjectionHead(6, 4, rng, "head")
    S_batch = [_t(rng, (3, 6)), _t(rng, (2, 6))]
    teacher = [rng.normal(size=(3, 4)), rng.normal(size=(2, 4))]

    def f(s0, s1, _w, _b):
        return linguistic_distill_loss([s0, s1], teacher, head, cfg)

    return [*S_batch, head.w, head.b], f


def _case_ctc(rng):
    logits = _t(rng, (6, 4))
    return [logits], lambda l: ctc_loss(l, [1, 1, 2])


def _case_label_smoothed_ce(rng):
    logits = _t(rng, (4, 5))
    return [logits], lambda l: ce_loss_smoothed(l, [4, 0, 2, 1], 0.1)


def _micro_batch_config():
    return TrainConfig(vocab_size=6, d_model=8, n_heads=2, enc_blocks=1,
                       dec_blocks=1, ffn_mult=1, feat_dim=8, front_channels=2,
                       teacher_dim=4, lambda_ad=1.0, lambda_ld=1.0,
                       negatives=2, temperature=0.5, label_smoothing=0.1)


def _case_total_micro_batch(rng):
    """d(total)/d(every parameter) on two tiny utterances."""
    cfg = _micro_batch_config()
    model = AsrModel(cfg.model_config(), cfg.cif_config(), rng)
    ad_head = ProjectionHead(cfg.d_model, cfg.teacher_dim, rng, "ad_head")
    ld_head = ProjectionHead(cfg.d_model, cfg.teacher_dim, rng, "ld_head")
    utts = [(rng.normal(size=(32, cfg.feat_dim)), [4, 1]),
            (rng.normal(size=(24, cfg.feat_dim)), [5, 1])]
    teacher = [rng.normal(size=(len(tgt), cfg.teacher_dim)) for _, tgt in utts]
    loss_cfg = cfg.loss_config()
    distill_cfg = cfg.distill_config()

    # Freeze one firing plan per utterance from the initial weights.
    plans = []
    with ad.no_grad():
        for feats, tgt in utts:
            H = model.encode(ad.tensor(feats))
            a = model.cif.compute_weights(H)
            plans.append(build_firing_plan(
                scale_weights(a, len(tgt), cfg.threshold).data, cfg.cif_config()))
    assert all(p.fired == len(tgt) for p, (_, tgt) in zip(plans, utts))

    def f(*_params):
        ce_parts, ctc_parts, qua_parts, C_batch, S_batch = [], [], [], [], []
        for (feats, tgt), plan in zip(utts, plans):
            H = model.encode(ad.tensor(feats))
            a = model.cif.compute_weights(H)
            qua_parts.append(quantity_loss(a, len(tgt)))
            C = apply_firing_plan(plan, scale_weights(a, len(tgt)), H)
            logits, S = model.decode_step(C, [BOS] + list(tgt[:-1]))
            ce_parts.append(ce_loss_smoothed(logits, tgt, cfg.label_smoothing))
            ctc_parts.append(ctc_loss(model.ctc_head(H), tgt))
            C_batch.append(C)
            S_batch.append(S)

        def batch_mean(parts):
            return ad.mean(ad.concat([ad.reshape(p, (1,)) for p in parts], 0))

        ad_term = acoustic_distill_loss(C_batch, teacher, ad_head, distill_cfg,
                                        seed=3)
        ld_term = linguistic_distill_loss(S_batch, teacher, ld_head, distill_cfg)
        bundle = total_loss(batch_mean(ce_parts), batch_mean(ctc_parts),
                            batch_mean(qua_parts), loss_cfg,
                            ad_term=ad_term, ld_term=ld_term,
                            lambda_ad=1.0, lambda_ld=1.0)
        return bundle.total

    params = [p for _, p in model.named_parameters()]
    params += [ad_head.w, ad_head.b, ld_head.w, ld_head.b]
    return params, f


SUITE = {
    "integrate_and_fire": _case_integrate_and_fire,
    "quantity_loss": _case_quantity_loss,
    "acoustic_contrastive": _case_contrastive,
    "acoustic_mse": _case_acoustic_mse,
    "acoustic_cosine": _case_acoustic_cosine,
    "linguistic_regression": _case_linguistic_regression,
    "ctc": _case_ctc,
    "label_smoothed_ce": _case_label_smoothed_ce,
    "total_micro_batch": _case_total_micro_batch,
}


def run_suite(tol: float = DEFAULT_TOL, seed: int = 0):
    """Yields (name, GradCheckReport) for every check, in a fixed order."""
    results = []
    for idx, (name, builder) in enumerate(SUITE.items()):
        with ad.precision(np.float64):
            rng = np.random.default_rng([seed, idx])
            xs, f = builder(rng)
            results.append((name, grad_check(f, xs, tol=tol)))
    return results
