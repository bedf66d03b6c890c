"""Continuous integrate-and-fire: weight generation, scaling, firing, quantity loss.

A weight sequence ``a`` over the U encoder steps is accumulated along time;
each time the running total crosses the threshold the step's weight is split
between the token that just closed and the one that opens, and the closed
token's vector is the weight-sum of its steps. The split is equivalent to
carving the cumulative-weight axis into consecutive buckets of size
``threshold``, which is how the allocation matrix is built here: entry (u, i)
is the overlap of step u's cumulative-weight interval with token i's bucket.

Firing positions are decided by the forward scan and treated as constant in
backward; gradients flow through the allocation values into both the weights
and the encoder states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, tensor


class DegenerateWeightsError(ValueError):
    """Weight sequence sums to zero; nothing can fire."""


class WeightOverflowError(ValueError):
    """A single step's weight exceeds the firing threshold."""


@dataclass
class CifConfig:
    threshold: float = 1.0        # firing threshold
    conv_kernel: int = 3
    conv_channels: int = 0        # 0 -> same as model width
    tail_fraction: float = 0.5    # fire the residual if it reaches this fraction

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if not 0 < self.tail_fraction <= 1:
            raise ValueError("tail_fraction must be in (0, 1]")


@dataclass
class FiringPlan:
    """Allocation of encoder steps to fired tokens, fixed for one utterance."""

    allocation: np.ndarray            # (U, fired) nonnegative overlaps
    firing_steps: list                # step index where each token closes
    fired: int
    tail_fired: bool = False
    # affine map vec(allocation) = coeff @ a + offset, used to rebuild the
    # allocation inside the gradient graph with the firing pattern frozen
    _coeff: np.ndarray = field(default=None, repr=False)
    _offset: np.ndarray = field(default=None, repr=False)


# float-tolerance for "the running total reached a bucket boundary"
_BOUNDARY_FUZZ = 1e-6


class CifHead:
    """Weight generator: same-padded conv over H, then a 1-unit FC and sigmoid."""

    def __init__(self, d_model: int, cfg: CifConfig, rng: np.random.Generator):
        channels = cfg.conv_channels or d_model
        k = cfg.conv_kernel
        self.cfg = cfg
        self.conv_w = tensor(rng.normal(0.0, 1.0 / np.sqrt(k * d_model),
                                        size=(k, d_model, channels)), requires_grad=True)
        self.conv_b = tensor(np.zeros(channels), requires_grad=True)
        # Small FC init keeps initial weights near 0.5: saturated or very
        # uneven starting weights make the training-time scaling overflow
        # the firing threshold for most utterances.
        self.fc_w = tensor(rng.normal(0.0, 0.1 / np.sqrt(channels),
                                      size=(channels, 1)), requires_grad=True)
        self.fc_b = tensor(np.zeros(1), requires_grad=True)

    def named_parameters(self):
        return [("cif.conv_w", self.conv_w), ("cif.conv_b", self.conv_b),
                ("cif.fc_w", self.fc_w), ("cif.fc_b", self.fc_b)]

    def compute_weights(self, H: Tensor) -> Tensor:
        """Per-step weights in (0, 1); shape (U,)."""
        z = ad.conv1d(H, self.conv_w, self.conv_b)
        logits = ad.add(ad.matmul(z, self.fc_w), self.fc_b)  # (U, 1) + (1,) scalar-ish
        return ad.sigmoid(ad.reshape(logits, (z.shape[0],)))


def scale_weights(a: Tensor, target_len: int, threshold: float = 1.0) -> Tensor:
    """Rescale weights so their sum is exactly target_len * threshold.

    Training-time only: forces exactly ``target_len`` firings. The scaling
    factor is part of the graph, so gradients flow through it. Raises if the
    sum is zero or if any rescaled weight would exceed the threshold (a step
    may not fire more than once).
    """
    if target_len < 1:
        raise ValueError("target_len must be >= 1")
    total = float(a.data.sum())
    if total <= 0:
        raise DegenerateWeightsError("degenerate weights: sum is zero")
    s = ad.sum_(a)
    factor = ad.scale(ad.reciprocal(s), target_len * threshold)
    scaled = ad.mul(a, factor)
    limit = threshold * (1.0 + 16 * _BOUNDARY_FUZZ)
    if np.any(scaled.data > limit):
        worst = float(scaled.data.max())
        raise WeightOverflowError(
            f"weight exceeds threshold after scaling: {worst:.4f} > {threshold}")
    return scaled


def quantity_loss(a: Tensor, target_len: int) -> Tensor:
    """|sum(a) - target_len| on unscaled weights."""
    d = ad.add(ad.sum_(a), -float(target_len))
    return ad.add(ad.relu(d), ad.relu(ad.scale(d, -1.0)))


def build_firing_plan(a_values: np.ndarray, cfg: CifConfig,
                      tail_handling: bool = True) -> FiringPlan:
    """Scan the weights and fix the firing pattern and allocation structure."""
    a64 = np.asarray(a_values, dtype=np.float64).reshape(-1)
    U = a64.size
    beta = float(cfg.threshold)
    fuzz = _BOUNDARY_FUZZ * beta
    if np.any(a64 < 0):
        raise ValueError("negative weight")
    if np.any(a64 > beta + 16 * fuzz):
        raise WeightOverflowError(
            f"weight exceeds threshold: {a64.max():.4f} > {beta}")

    prefix = np.cumsum(a64)
    total = prefix[-1] if U else 0.0
    full = int(np.floor(total / beta + _BOUNDARY_FUZZ))
    residual = total - full * beta
    tail_fired = bool(tail_handling and residual >= cfg.tail_fraction * beta - fuzz
                      and residual > fuzz)
    fired = full + (1 if tail_fired else 0)

    if fired == 0:
        return FiringPlan(allocation=np.zeros((U, 0)), firing_steps=[], fired=0,
                          tail_fired=False,
                          _coeff=np.zeros((0, U)), _offset=np.zeros(0))

    allocation = np.zeros((U, fired))
    coeff = np.zeros((U * fired, U))
    offset = np.zeros(U * fired)
    firing_steps = []

    def prefix_row(u):
        """d(prefix[u]) / d(a) as an indicator row; u == -1 is the empty prefix."""
        row = np.zeros(U)
        if u >= 0:
            row[:u + 1] = 1.0
        return row

    for col in range(fired):
        lo = col * beta
        is_tail = col == full  # only when tail_fired
        hi = total if is_tail else (col + 1) * beta
        u_start = int(np.searchsorted(prefix, lo + fuzz, side="left"))
        if is_tail:
            u_end = U - 1
        else:
            u_end = int(np.searchsorted(prefix, hi - fuzz, side="left"))
        firing_steps.append(u_end)
        for u in range(u_start, u_end + 1):
            flat = u * fired + col
            # upper bound of the overlap: the step's own running total, unless
            # this step closes the bucket (then the bucket edge, a constant)
            if not is_tail and prefix[u] >= hi - fuzz:
                upper = hi
                upper_row = None
            else:
                upper = prefix[u]
                upper_row = prefix_row(u)
            # lower bound: the bucket edge if this step opens the bucket,
            # otherwise the previous step's running total
            prev = prefix[u - 1] if u > 0 else 0.0
            if prev <= lo + fuzz:
                lower = lo
                lower_row = None
            else:
                lower = prev
                lower_row = prefix_row(u - 1)
            allocation[u, col] = max(0.0, upper - lower)
            row = np.zeros(U)
            const = 0.0
            if upper_row is None:
                const += upper
            else:
                row += upper_row
            if lower_row is None:
                const -= lower
            else:
                row -= lower_row
            coeff[flat] = row
            offset[flat] = const

    return FiringPlan(allocation=allocation, firing_steps=firing_steps, fired=fired,
                      tail_fired=tail_fired, _coeff=coeff, _offset=offset)


def apply_firing_plan(plan: FiringPlan, a: Tensor, H: Tensor) -> Tensor:
    """Weighted-sum the encoder states per fired token; differentiable in a and H."""
    U, d = H.shape
    if plan.fired == 0:
        return tensor(np.zeros((0, d), dtype=H.data.dtype), dtype=H.data.dtype)
    dtype = a.data.dtype
    coeff = tensor(plan._coeff.astype(dtype), dtype=dtype)
    offs = tensor(plan._offset.astype(dtype), dtype=dtype)
    alloc = ad.reshape(ad.add(ad.matmul(coeff, a), offs), (U, plan.fired))
    return ad.matmul(ad.transpose(alloc), H)


def integrate_and_fire(a: Tensor, H: Tensor, cfg: CifConfig,
                       tail_handling: bool = True):
    """Accumulate weights, fire at threshold crossings, return (C, plan).

    C has one row per fired token. Firing positions come from the scan of the
    current weight values and are constant in backward.
    """
    if a.shape[0] != H.shape[0]:
        raise ad.ShapeError(f"integrate_and_fire: {a.shape[0]} weights vs "
                            f"{H.shape[0]} encoder steps")
    plan = build_firing_plan(a.data, cfg, tail_handling=tail_handling)
    return apply_firing_plan(plan, a, H), plan


def integrate_streaming(a_values, H_values, cfg: CifConfig,
                        tail_handling: bool = True) -> np.ndarray:
    """Literal accumulate/split scan; the independent oracle for the dense path."""
    a64 = np.asarray(a_values, dtype=np.float64).reshape(-1)
    H64 = np.asarray(H_values, dtype=np.float64)
    beta = float(cfg.threshold)
    fuzz = _BOUNDARY_FUZZ * beta
    acc_w = 0.0
    acc_state = np.zeros(H64.shape[1])
    fired = []
    for u in range(a64.size):
        w = a64[u]
        if acc_w + w >= beta - fuzz:
            closing = beta - acc_w
            fired.append(acc_state + closing * H64[u])
            acc_w = w - closing
            acc_state = acc_w * H64[u]
        else:
            acc_w += w
            acc_state = acc_state + w * H64[u]
    if tail_handling and acc_w >= cfg.tail_fraction * beta - fuzz and acc_w > fuzz:
        fired.append(acc_state)
    if not fired:
        return np.zeros((0, H64.shape[1]))
    return np.stack(fired)
