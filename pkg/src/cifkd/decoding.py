"""Greedy and beam decoding over the fired acoustic positions.

Decoding is length-synchronous: the fired sequence C fixes the number of
decoder positions, and hypotheses stop early only by emitting <EOS>. Scores
are raw cumulative log-probabilities; an optional flag divides by hypothesis
length at the final ranking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import tensor
from .model import BOS, EOS


@dataclass
class Hypothesis:
    tokens: list
    score: float
    finished: bool = False

    def ranking_score(self, length_normalize: bool) -> float:
        if not length_normalize or not self.tokens:
            return self.score
        return self.score / len(self.tokens)


def _step_log_probs(model, C, prefix) -> np.ndarray:
    """Log-probs over the next token after ``prefix`` (may be empty)."""
    j = len(prefix)
    c_prefix = ad.slice_(C, slice(0, j + 1))
    prev = [BOS] + list(prefix)
    logits, _ = model.decode_step(c_prefix, prev)
    return ad.log_softmax(ad.slice_(logits, j), axis=-1).data


def beam_search(model, C, beam_size: int = 10, max_len: int = None,
                length_normalize: bool = False) -> list:
    """Best token sequence for the fired acoustics C; B=1 is exactly greedy."""
    if beam_size < 1:
        raise ValueError("beam size must be >= 1")
    n_fired = C.shape[0]
    if n_fired == 0:
        return []
    steps = n_fired if max_len is None else min(n_fired, max_len)
    beam = [Hypothesis(tokens=[], score=0.0)]
    for _ in range(steps):
        candidates = []
        for hyp in beam:
            if hyp.finished:
                candidates.append(hyp)
                continue
            logp = _step_log_probs(model, C, hyp.tokens)
            # stable sort: ties resolve to the lowest id, same as argmax
            for tok in np.argsort(-logp, kind="stable")[:beam_size]:
                tok = int(tok)
                candidates.append(Hypothesis(tokens=hyp.tokens + [tok],
                                             score=hyp.score + float(logp[tok]),
                                             finished=tok == EOS))
        candidates.sort(key=lambda h: h.score, reverse=True)
        beam = candidates[:beam_size]
        if all(h.finished for h in beam):
            break
    best = max(beam, key=lambda h: h.ranking_score(length_normalize))
    return best.tokens


def greedy_decode(model, C, max_len: int = None) -> list:
    return beam_search(model, C, beam_size=1, max_len=max_len)


def decode_utterance(model, features: np.ndarray, beam_size: int = 10,
                     length_normalize: bool = False) -> list:
    """Feature matrix to token ids: encode, fire unscaled with tail, decode."""
    from .cif import integrate_and_fire

    with ad.no_grad():
        X = tensor(features)
        H = model.encode(X)
        a = model.cif.compute_weights(H)
        C, _ = integrate_and_fire(a, H, model.cif_cfg, tail_handling=True)
        if C.shape[0] == 0:
            return []
        return beam_search(model, C, beam_size=beam_size,
                           length_normalize=length_normalize)
