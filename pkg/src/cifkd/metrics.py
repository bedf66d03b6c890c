"""Edit-distance error rates."""

from __future__ import annotations

import numpy as np


def levenshtein(hyp, ref) -> int:
    """Edit distance with unit substitution/insertion/deletion costs."""
    hyp, ref = list(hyp), list(ref)
    prev = np.arange(len(ref) + 1)
    for i, h in enumerate(hyp, start=1):
        cur = np.empty(len(ref) + 1, dtype=np.int64)
        cur[0] = i
        for j, r in enumerate(ref, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (h != r))
        prev = cur
    return int(prev[-1])


def error_rate(hyp, ref) -> float:
    """Levenshtein(hyp, ref) / len(ref); the reference may not be empty."""
    ref = list(ref)
    if not ref:
        raise ValueError("error_rate: empty reference")
    return levenshtein(hyp, ref) / len(ref)


def corpus_error_rate(pairs) -> float:
    """Total edits over total reference length for (hyp, ref) pairs."""
    edits = total = 0
    for hyp, ref in pairs:
        ref = list(ref)
        total += len(ref)
        edits += levenshtein(hyp, ref)
    if total == 0:
        raise ValueError("error_rate: empty reference corpus")
    return edits / total
