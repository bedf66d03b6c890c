"""ASR losses: label-smoothed CE, CTC, and the weighted total assembly.

CTC runs as a single graph node with an analytic backward: the forward pass
does the usual log-space alpha recursion over the blank-interleaved target,
and the gradient of -log P with respect to the frame log-probabilities is the
negated state-posterior mass aggregated per class. That is far cheaper than
composing the recursion out of elementary ops, and it is validated in tests
against both finite differences and exhaustive path enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, tensor
from .model import PAD

NEG_INF = -np.inf


class CtcLengthError(ValueError):
    """Target cannot be aligned within the available frames."""


@dataclass
class LossConfig:
    w_ce: float = 1.0
    w_ctc: float = 0.5
    w_qua: float = 1.0
    label_smoothing: float = 0.1

    def __post_init__(self):
        for name in ("w_ce", "w_ctc", "w_qua"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0 <= self.label_smoothing < 1:
            raise ValueError("label_smoothing must be in [0, 1)")


@dataclass
class LossBundle:
    ce: Tensor
    ctc: Tensor
    qua: Tensor
    ad: Tensor
    ld: Tensor
    total: Tensor

    def values(self) -> dict:
        return {k: float(getattr(self, k).data) for k in
                ("ce", "ctc", "qua", "ad", "ld", "total")}


def ce_loss_smoothed(logits: Tensor, targets, epsilon: float,
                     pad_id: int = PAD) -> Tensor:
    """Mean smoothed cross-entropy over non-padding positions.

    True class gets mass 1-epsilon; epsilon spreads uniformly over the other
    V-1 classes.
    """
    ids = np.asarray(targets, dtype=np.int64)
    n, v = logits.shape
    if ids.shape != (n,):
        raise ad.ShapeError(f"ce: {n} logit rows vs targets {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= v):
        raise ValueError(f"ce: target id out of range 0..{v - 1}")
    valid = ids != pad_id
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("ce: no non-padding targets")
    q = np.full((n, v), epsilon / (v - 1))
    q[np.arange(n), ids] = 1.0 - epsilon
    q[~valid] = 0.0
    logp = ad.log_softmax(logits, axis=-1)
    return ad.scale(ad.sum_(ad.mul(logp, tensor(q, dtype=logits.data.dtype))),
                    -1.0 / n_valid)


def min_ctc_frames(target) -> int:
    ids = np.asarray(target)
    repeats = int(np.sum(ids[1:] == ids[:-1])) if ids.size > 1 else 0
    return ids.size + repeats


def ctc_loss(logits: Tensor, target, blank: int = None) -> Tensor:
    """-log P(target | frames) for frame logits over V real classes + blank.

    The blank class is the appended last column unless given explicitly.
    """
    ids = np.asarray(target, dtype=np.int64)
    U, n_classes = logits.shape
    if blank is None:
        blank = n_classes - 1
    if ids.size == 0:
        raise ValueError("ctc: empty target")
    if ids.min() < 0 or ids.max() >= n_classes or blank in ids:
        raise ValueError("ctc: target id out of class range")
    if U < min_ctc_frames(ids):
        raise CtcLengthError(
            f"CTC length violation: {U} frames cannot carry "
            f"{ids.size} labels ({min_ctc_frames(ids)} needed)")

    logp = ad.log_softmax(logits, axis=-1)
    lp = logp.data
    ext = np.empty(2 * ids.size + 1, dtype=np.int64)  # blank-interleaved target
    ext[0::2] = blank
    ext[1::2] = ids
    S = ext.size

    # can_skip[s]: the s-2 -> s transition is legal (distinct non-blank labels)
    can_skip = np.zeros(S, dtype=bool)
    can_skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])

    alpha = np.full((U, S), NEG_INF)
    alpha[0, 0] = lp[0, ext[0]]
    if S > 1:
        alpha[0, 1] = lp[0, ext[1]]
    for t in range(1, U):
        stay = alpha[t - 1]
        prev = np.concatenate(([NEG_INF], alpha[t - 1, :-1]))
        skip = np.concatenate(([NEG_INF, NEG_INF], alpha[t - 1, :-2]))
        skip[~can_skip] = NEG_INF
        alpha[t] = np.logaddexp(np.logaddexp(stay, prev), skip) + lp[t, ext]

    log_p = np.logaddexp(alpha[U - 1, S - 1],
                         alpha[U - 1, S - 2] if S > 1 else NEG_INF)
    if not np.isfinite(log_p):
        raise CtcLengthError("CTC length violation: no feasible alignment")

    # beta excludes the frame-t emission, so alpha[t] * beta[t] sums to P at
    # every t and the posterior per (t, class) is a clean product
    beta = np.full((U, S), NEG_INF)
    beta[U - 1, S - 1] = 0.0
    if S > 1:
        beta[U - 1, S - 2] = 0.0
    for t in range(U - 2, -1, -1):
        nxt = beta[t + 1] + lp[t + 1, ext]
        stay = nxt
        succ = np.concatenate((nxt[1:], [NEG_INF]))
        skip = np.concatenate((nxt[2:], [NEG_INF, NEG_INF]))
        blocked = np.concatenate((~can_skip[2:], [True, True]))
        skip[blocked] = NEG_INF
        beta[t] = np.logaddexp(np.logaddexp(stay, succ), skip)

    def bw(g):
        with np.errstate(invalid="ignore"):
            occ = alpha + beta - log_p  # (U, S) log posterior per state
        grad = np.zeros_like(lp)
        for s in range(S):
            col = occ[:, s]
            finite = np.isfinite(col)
            grad[finite, ext[s]] -= np.exp(col[finite])
        return [(logp, g * grad)]

    out = np.asarray(-log_p, dtype=logits.data.dtype)
    return ad.custom_op("ctc", out, (logp,), bw)


def total_loss(ce: Tensor, ctc: Tensor, qua: Tensor, loss_cfg: LossConfig,
               ad_term: Tensor = None, ld_term: Tensor = None,
               lambda_ad: float = 0.0, lambda_ld: float = 0.0) -> LossBundle:
    """Weighted sum of the ASR losses plus any enabled distillation terms.

    Disabled terms (None or zero weight) are left out of the graph entirely,
    so a run without distillation is computationally identical to a build
    that never produced those losses.
    """
    total = ad.scale(ce, loss_cfg.w_ce)
    total = ad.add(total, ad.scale(ctc, loss_cfg.w_ctc))
    total = ad.add(total, ad.scale(qua, loss_cfg.w_qua))
    zero = tensor(np.zeros(()))
    if ad_term is not None and lambda_ad > 0:
        total = ad.add(total, ad.scale(ad_term, lambda_ad))
    else:
        ad_term = zero
    if ld_term is not None and lambda_ld > 0:
        total = ad.add(total, ad.scale(ld_term, lambda_ld))
    else:
        ld_term = zero
    return LossBundle(ce=ce, ctc=ctc, qua=qua, ad=ad_term, ld=ld_term, total=total)
