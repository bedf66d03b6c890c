"""Distillation losses against a fixed token-embedding teacher.

Acoustic side: the fired token vectors are projected to the teacher width and
pulled toward the teacher embeddings, either contrastively against in-batch
negatives or by plain MSE / cosine regression. Linguistic side: the decoder
states get the same MSE treatment. Teacher embeddings never receive gradient;
they enter the graph as constants.

Alignment is strict: student position i pairs with teacher position i, so
per-utterance lengths must match exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, tensor

logger = logging.getLogger(__name__)

AD_LOSS_KINDS = ("CONT", "MSE", "COS")


@dataclass
class DistillConfig:
    temperature: float = 0.02
    negatives: int = 700          # clamped to the pool size on small batches
    lambda_ad: float = 1.0
    lambda_ld: float = 1.0
    alpha_mse: float = 0.01
    alpha_cos: float = 10.0
    alpha_lrd: float = 0.01
    ad_loss_kind: str = "CONT"

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        for name in ("lambda_ad", "lambda_ld", "alpha_mse", "alpha_cos", "alpha_lrd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.ad_loss_kind not in AD_LOSS_KINDS:
            raise ValueError(f"ad_loss_kind must be one of {AD_LOSS_KINDS}")


class ProjectionHead:
    """Linear map from student width to teacher width."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 name: str = "proj"):
        self.name = name
        self.w = tensor(rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_in, d_out)),
                        requires_grad=True)
        self.b = tensor(np.zeros(d_out), requires_grad=True)

    def named_parameters(self):
        return [(f"{self.name}.w", self.w), (f"{self.name}.b", self.b)]

    def project(self, x: Tensor) -> Tensor:
        return ad.bias_add(ad.matmul(x, self.w), self.b)


def project_and_normalize(x: Tensor, head: ProjectionHead) -> Tensor:
    """Project rows to teacher width and scale each to unit L2 norm."""
    return ad.l2_normalize(head.project(x), axis=-1)


def normalize_rows(e: np.ndarray, min_norm: float = 1e-12) -> np.ndarray:
    """Unit-normalize teacher rows outside the graph."""
    norms = np.sqrt((e ** 2).sum(axis=-1, keepdims=True))
    if np.any(norms < min_norm):
        raise ValueError("zero-norm teacher row")
    return e / norms


@dataclass
class BatchTokenPool:
    """Every teacher token embedding of the batch, with (utterance, position) tags."""

    embeddings: np.ndarray          # (P, D)
    provenance: list                # P pairs (utterance index, position)

    @property
    def size(self) -> int:
        return self.embeddings.shape[0]


def build_pool(teacher_batch) -> BatchTokenPool:
    """Flatten a batch of (I_n x D) teacher arrays into one pool."""
    rows, tags = [], []
    for n, e in enumerate(teacher_batch):
        for i in range(e.shape[0]):
            rows.append(e[i])
            tags.append((n, i))
    if not rows:
        raise ValueError("empty teacher batch")
    return BatchTokenPool(embeddings=np.stack(rows), provenance=tags)


def sample_negatives(pool: BatchTokenPool, positive, k: int, rng) -> np.ndarray:
    """Uniform sample without replacement from the pool minus the positive.

    Pool entries whose embedding equals the positive's exactly are excluded
    too: a "negative" indistinguishable from the positive caps the softmax
    target below 1 and cancels its own pull, so contrasting against it is
    meaningless.  Context-free teachers emit such duplicates for repeated
    tokens; contextual ones never do.

    ``rng`` is a Generator or an int seed; the same seed gives the same sample.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    pos_rows = [idx for idx, tag in enumerate(pool.provenance) if tag == positive]
    if not pos_rows:
        raise ValueError(f"positive {positive} not found in pool")
    pos_vec = pool.embeddings[pos_rows[0]]
    candidates = [idx for idx, tag in enumerate(pool.provenance)
                  if tag != positive
                  and not np.array_equal(pool.embeddings[idx], pos_vec)]
    if not candidates:
        raise ValueError("no negatives available: pool holds only the positive")
    if k > len(candidates):
        logger.warning("negative count clamped from %d to %d (pool size %d)",
                       k, len(candidates), pool.size)
        k = len(candidates)
    chosen = rng.choice(len(candidates), size=k, replace=False)
    return pool.embeddings[np.asarray(candidates)[chosen]]


def _check_lengths(student, teacher, what: str):
    if len(student) != len(teacher):
        raise ValueError(f"{what}: batch sizes differ "
                         f"({len(student)} student vs {len(teacher)} teacher)")
    for n, (s, e) in enumerate(zip(student, teacher)):
        if s.shape != tuple(e.shape):
            raise ValueError(f"{what}: utterance {n} shape mismatch "
                             f"({s.shape} student vs {e.shape} teacher)")


def acd_contrastive_loss(student_norm, teacher_norm, negatives,
                         temperature: float) -> Tensor:
    """InfoNCE-style pull toward the aligned teacher token.

    student_norm: per-utterance (I_n x D) unit-row tensors; teacher_norm: the
    matching unit-row arrays; negatives[n][i]: (K x D) array for that position.
    The positive similarity sits in the denominator alongside the negatives,
    so the loss is log(1 + sum_k exp((neg_k - pos)/tau)) per position.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    _check_lengths(student_norm, teacher_norm, "contrastive")
    per_utt = []
    for n, (c_n, e_n) in enumerate(zip(student_norm, teacher_norm)):
        terms = []
        for i in range(e_n.shape[0]):
            others = np.vstack([negatives[n][i], e_n[i][None]])  # positive last
            sims = ad.scale(ad.matmul(tensor(others, dtype=c_n.data.dtype),
                                      ad.slice_(c_n, i)), 1.0 / temperature)
            terms.append(ad.scale(ad.slice_(ad.log_softmax(sims), -1), -1.0))
        total = terms[0]
        for t in terms[1:]:
            total = ad.add(total, t)
        per_utt.append(ad.scale(total, 1.0 / len(terms)))
    batch = per_utt[0]
    for t in per_utt[1:]:
        batch = ad.add(batch, t)
    return ad.scale(batch, 1.0 / len(per_utt))


def _regression_mse(student, teacher, alpha: float, what: str) -> Tensor:
    _check_lengths(student, teacher, what)
    per_utt = []
    for s_n, e_n in zip(student, teacher):
        d = ad.add(s_n, tensor(e_n, dtype=s_n.data.dtype), negate_rhs=True)
        per_utt.append(ad.scale(ad.sum_(ad.mul(d, d)), 1.0 / e_n.shape[0]))
    total = per_utt[0]
    for t in per_utt[1:]:
        total = ad.add(total, t)
    return ad.scale(total, alpha / len(per_utt))


def acd_mse_loss(student_proj, teacher, alpha_mse: float) -> Tensor:
    """Per token, squared distance summed over the teacher width (not averaged)."""
    return _regression_mse(student_proj, teacher, alpha_mse, "acoustic mse")


def acd_cos_loss(student_proj, teacher, alpha_cos: float) -> Tensor:
    """Per token, 1 - cosine similarity; rows are normalized inside the loss."""
    _check_lengths(student_proj, teacher, "acoustic cos")
    per_utt = []
    for s_n, e_n in zip(student_proj, teacher):
        e_unit = normalize_rows(np.asarray(e_n, dtype=np.float64))
        c_unit = ad.l2_normalize(s_n, axis=-1)
        cos = ad.sum_(ad.mul(c_unit, tensor(e_unit, dtype=s_n.data.dtype)), axis=1)
        per_utt.append(ad.add(ad.scale(ad.mean(cos), -1.0), 1.0))
    total = per_utt[0]
    for t in per_utt[1:]:
        total = ad.add(total, t)
    return ad.scale(total, alpha_cos / len(per_utt))


def lrd_mse_loss(student_proj, teacher, alpha: float) -> Tensor:
    """Decoder-state regression; same form as the acoustic MSE."""
    return _regression_mse(student_proj, teacher, alpha, "linguistic mse")


def acoustic_distill_loss(C_batch, teacher_batch, head: ProjectionHead,
                          cfg: DistillConfig, seed: int) -> Tensor:
    """Project the fired vectors and apply the configured acoustic loss."""
    if cfg.ad_loss_kind == "CONT":
        student = [project_and_normalize(c, head) for c in C_batch]
        teacher = [normalize_rows(np.asarray(e, dtype=np.float64))
                   for e in teacher_batch]
        pool = build_pool(teacher)
        rng = np.random.default_rng(seed)
        negatives = [[sample_negatives(pool, (n, i), cfg.negatives, rng)
                      for i in range(e.shape[0])]
                     for n, e in enumerate(teacher)]
        return acd_contrastive_loss(student, teacher, negatives, cfg.temperature)
    student = [head.project(c) for c in C_batch]
    if cfg.ad_loss_kind == "MSE":
        return acd_mse_loss(student, teacher_batch, cfg.alpha_mse)
    return acd_cos_loss(student, teacher_batch, cfg.alpha_cos)


def linguistic_distill_loss(S_batch, teacher_batch, head: ProjectionHead,
                            cfg: DistillConfig) -> Tensor:
    """Project the decoder states and regress onto the teacher embeddings."""
    return lrd_mse_loss([head.project(s) for s in S_batch], teacher_batch,
                        cfg.alpha_lrd)
