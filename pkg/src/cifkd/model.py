"""Student model: down-sampling encoder, fired-vector decoder, CTC head.

The encoder halves the time axis three times (2x2 patch conv, then two
width-2 max pools between the first blocks), so U = floor(floor(floor(T/2)/2)/2)
and the total rate reduction is 8. Blocks are simplified transformer blocks:
self-attention, feed-forward, and a depth-1 convolution sub-layer, each with a
residual connection and post-norm.

The decoder is position-synchronous with the fired acoustic vectors: input i
is linear(c_i) + embedding(previous token i) + fixed sinusoidal position code,
run through causally masked blocks. Hidden states before the output projection
are exposed for the linguistic regression loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, tensor

PAD, EOS, BOS, UNK = 0, 1, 2, 3
RESERVED_TOKENS = ("<PAD>", "<EOS>", "<BOS>", "<UNK>")


@dataclass
class ModelConfig:
    vocab_size: int = 20
    d_model: int = 64
    n_heads: int = 4
    enc_blocks: int = 4
    dec_blocks: int = 2
    ffn_mult: int = 2
    feat_dim: int = 80
    front_channels: int = 4
    max_positions: int = 256

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.vocab_size <= len(RESERVED_TOKENS):
            raise ValueError("vocab must extend beyond the reserved ids")


def sinusoidal_positions(n: int, d: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    idx = np.arange(d)[None, :]
    angles = pos / np.power(10000.0, (2 * (idx // 2)) / d)
    table = np.where(idx % 2 == 0, np.sin(angles), np.cos(angles))
    return table


def _linear_init(rng, d_in, d_out):
    return rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_in, d_out))


class Linear:
    def __init__(self, d_in, d_out, rng, name, scale=1.0):
        self.name = name
        self.w = tensor(scale * _linear_init(rng, d_in, d_out), requires_grad=True)
        self.b = tensor(np.zeros(d_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.bias_add(ad.matmul(x, self.w), self.b)

    def named_parameters(self):
        return [(f"{self.name}.w", self.w), (f"{self.name}.b", self.b)]


class LayerNorm:
    def __init__(self, d, name):
        self.name = name
        self.gain = tensor(np.ones(d), requires_grad=True)
        self.bias = tensor(np.zeros(d), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gain, self.bias)

    def named_parameters(self):
        return [(f"{self.name}.gain", self.gain), (f"{self.name}.bias", self.bias)]


class MultiHeadAttention:
    """Per-head projection matrices; optional causal mask."""

    def __init__(self, d, n_heads, rng, name, causal=False):
        self.name = name
        self.causal = causal
        self.n_heads = n_heads
        self.dh = d // n_heads
        self.wq, self.wk, self.wv = [], [], []
        for h in range(n_heads):
            self.wq.append(tensor(_linear_init(rng, d, self.dh), requires_grad=True))
            self.wk.append(tensor(_linear_init(rng, d, self.dh), requires_grad=True))
            self.wv.append(tensor(_linear_init(rng, d, self.dh), requires_grad=True))
        self.out = Linear(d, d, rng, f"{name}.out")

    def __call__(self, x: Tensor) -> Tensor:
        L = x.shape[0]
        mask = None
        if self.causal and L > 1:
            m = np.triu(np.full((L, L), -1e9), k=1)
            mask = tensor(m, dtype=x.data.dtype)
        heads = []
        for h in range(self.n_heads):
            q = ad.matmul(x, self.wq[h])
            k = ad.matmul(x, self.wk[h])
            v = ad.matmul(x, self.wv[h])
            scores = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / np.sqrt(self.dh))
            if mask is not None:
                scores = ad.add(scores, mask)
            heads.append(ad.matmul(ad.softmax(scores, axis=-1), v))
        merged = heads[0] if self.n_heads == 1 else ad.concat(heads, axis=1)
        return self.out(merged)

    def named_parameters(self):
        params = []
        for h in range(self.n_heads):
            params += [(f"{self.name}.q{h}", self.wq[h]),
                       (f"{self.name}.k{h}", self.wk[h]),
                       (f"{self.name}.v{h}", self.wv[h])]
        return params + self.out.named_parameters()


class FeedForward:
    def __init__(self, d, mult, rng, name):
        self.inner = Linear(d, d * mult, rng, f"{name}.inner")
        self.outer = Linear(d * mult, d, rng, f"{name}.outer")

    def __call__(self, x: Tensor) -> Tensor:
        return self.outer(ad.relu(self.inner(x)))

    def named_parameters(self):
        return self.inner.named_parameters() + self.outer.named_parameters()


class ConvSublayer:
    def __init__(self, d, rng, name):
        self.name = name
        self.w = tensor(rng.normal(0.0, 1.0 / np.sqrt(3 * d), size=(3, d, d)),
                        requires_grad=True)
        self.b = tensor(np.zeros(d), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.relu(ad.conv1d(x, self.w, self.b))

    def named_parameters(self):
        return [(f"{self.name}.w", self.w), (f"{self.name}.b", self.b)]


class Block:
    """attention -> feed-forward -> conv, each residual + post-norm."""

    def __init__(self, d, n_heads, ffn_mult, rng, name, causal=False, conv=True):
        self.attn = MultiHeadAttention(d, n_heads, rng, f"{name}.attn", causal=causal)
        self.norm1 = LayerNorm(d, f"{name}.norm1")
        self.ffn = FeedForward(d, ffn_mult, rng, f"{name}.ffn")
        self.norm2 = LayerNorm(d, f"{name}.norm2")
        self.conv = ConvSublayer(d, rng, f"{name}.conv") if conv else None
        self.norm3 = LayerNorm(d, f"{name}.norm3") if conv else None

    def __call__(self, x: Tensor) -> Tensor:
        x = self.norm1(ad.add(x, self.attn(x)))
        x = self.norm2(ad.add(x, self.ffn(x)))
        if self.conv is not None:
            x = self.norm3(ad.add(x, self.conv(x)))
        return x

    def named_parameters(self):
        params = (self.attn.named_parameters() + self.norm1.named_parameters()
                  + self.ffn.named_parameters() + self.norm2.named_parameters())
        if self.conv is not None:
            params += self.conv.named_parameters() + self.norm3.named_parameters()
        return params


class Encoder:
    def __init__(self, cfg: ModelConfig, rng):
        c = cfg.front_channels
        self.cfg = cfg
        self.patch_w = tensor(rng.normal(0.0, 0.5, size=(2, 2, 1, c)),
                              requires_grad=True)
        self.patch_b = tensor(np.zeros(c), requires_grad=True)
        self.front = Linear((cfg.feat_dim // 2) * c, cfg.d_model, rng, "enc.front")
        self.pe = sinusoidal_positions(cfg.max_positions, cfg.d_model)
        self.blocks = [Block(cfg.d_model, cfg.n_heads, cfg.ffn_mult, rng,
                             f"enc.b{i}") for i in range(cfg.enc_blocks)]

    def __call__(self, X: Tensor) -> Tensor:
        T = X.shape[0]
        if T < 8:
            raise ad.ShapeError(f"encode: need at least 8 frames, got {T}")
        z = ad.conv2d(X, self.patch_w, self.patch_b)      # (T//2, F//2, c)
        t2 = z.shape[0]
        z = ad.reshape(z, (t2, z.shape[1] * z.shape[2]))
        h = self.front(z)
        h = ad.add(h, tensor(self.pe[:t2], dtype=h.data.dtype))
        for i, block in enumerate(self.blocks):
            h = block(h)
            if i < 2:
                h = ad.max_pool1d(h)
        for _ in range(max(0, 2 - len(self.blocks))):
            h = ad.max_pool1d(h)
        return h

    def named_parameters(self):
        params = [("enc.patch_w", self.patch_w), ("enc.patch_b", self.patch_b)]
        params += self.front.named_parameters()
        for block in self.blocks:
            params += block.named_parameters()
        return params


class Decoder:
    def __init__(self, cfg: ModelConfig, rng):
        d = cfg.d_model
        self.cfg = cfg
        self.acoustic = Linear(d, d, rng, "dec.acoustic")
        self.embed = tensor(rng.normal(0.0, 1.0 / np.sqrt(d),
                                       size=(cfg.vocab_size, d)), requires_grad=True)
        self.pe = sinusoidal_positions(cfg.max_positions, d)
        self.blocks = [Block(d, cfg.n_heads, cfg.ffn_mult, rng, f"dec.b{i}",
                             causal=True, conv=False)
                       for i in range(cfg.dec_blocks)]
        # Cool classifier init: near-uniform output at step 0, so the
        # initial cross-entropy sits at ln V.
        self.out = Linear(d, cfg.vocab_size, rng, "dec.out", scale=0.1)

    def __call__(self, C: Tensor, prev_tokens) -> tuple:
        """Returns (logits (I x V), S (I x d)); S feeds the linguistic loss."""
        prev = np.asarray(prev_tokens, dtype=np.int64)
        if C.shape[0] != prev.shape[0]:
            raise ad.ShapeError(
                f"decoder: {C.shape[0]} fired vectors vs {prev.shape[0]} tokens")
        x = ad.add(self.acoustic(C), ad.embedding_lookup(self.embed, prev))
        x = ad.add(x, tensor(self.pe[:prev.shape[0]], dtype=x.data.dtype))
        for block in self.blocks:
            x = block(x)
        return self.out(x), x

    def named_parameters(self):
        params = self.acoustic.named_parameters() + [("dec.embed", self.embed)]
        for block in self.blocks:
            params += block.named_parameters()
        return params + self.out.named_parameters()


class AsrModel:
    """Encoder + CIF bridge + decoder + CTC head, one parameter namespace."""

    def __init__(self, cfg: ModelConfig, cif_cfg, rng):
        from .cif import CifHead
        self.cfg = cfg
        self.encoder = Encoder(cfg, rng)
        self.cif = CifHead(cfg.d_model, cif_cfg, rng)
        self.cif_cfg = cif_cfg
        self.decoder = Decoder(cfg, rng)
        self.ctc_head = Linear(cfg.d_model, cfg.vocab_size + 1, rng, "ctc",
                               scale=0.1)

    def encode(self, X: Tensor) -> Tensor:
        return self.encoder(X)

    def decode_step(self, C: Tensor, prev_tokens):
        return self.decoder(C, prev_tokens)

    def named_parameters(self):
        return (self.encoder.named_parameters() + self.cif.named_parameters()
                + self.decoder.named_parameters() + self.ctc_head.named_parameters())

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()
