"""Datasets: synthetic speech-like corpus generation and on-disk formats.

Synthetic utterances: every token id owns a fixed 80-bin spectral template;
a token emits roughly ``mu`` frames of its template (length jittered +-25%)
plus Gaussian noise. Transcripts end with <EOS>, which emits frames of its
own quiet template, and a few frames of near-silence pad each end of the
utterance. The margins keep the encoder output longer than the token count,
which the training-time weight scaling needs (a step may never carry more
than one full firing).

Formats (little-endian): features "HKDFEA1\\0" | u32 version | u32 feat dim |
u32 count | per record u32 id_len + id + u32 T + T*dim float32. Transcripts:
"id<TAB>space-separated token ids". Vocabulary: one token string per line,
line number = id.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import EOS, RESERVED_TOKENS

FEA_MAGIC = b"HKDFEA1\0"
FEA_VERSION = 1


class DatasetFormatError(ValueError):
    """Malformed feature container or transcript file."""


@dataclass
class Utterance:
    utt_id: str
    features: np.ndarray       # (T, feat_dim) float32
    tokens: list               # target ids, ending with <EOS>

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        if not np.all(np.isfinite(self.features)):
            raise DatasetFormatError(f"non-finite features in {self.utt_id!r}")
        if not self.tokens:
            raise DatasetFormatError(f"empty target in {self.utt_id!r}")


@dataclass
class Dataset:
    split: str
    utterances: list = field(default_factory=list)

    def __len__(self):
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    def transcripts(self) -> dict:
        return {u.utt_id: list(u.tokens) for u in self.utterances}


def write_features(path, utterances, feat_dim: int = 80):
    with open(path, "wb") as f:
        f.write(FEA_MAGIC)
        f.write(struct.pack("<III", FEA_VERSION, feat_dim, len(utterances)))
        for utt in utterances:
            raw = utt.utt_id.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", utt.features.shape[0]))
            f.write(utt.features.astype("<f4", copy=False).tobytes(order="C"))


def _read_exact(f, n, what):
    buf = f.read(n)
    if len(buf) != n:
        raise DatasetFormatError(f"truncated features while reading {what}")
    return buf


def read_features(path) -> dict:
    """id -> (T, dim) float32 feature matrices."""
    out = {}
    with open(path, "rb") as f:
        if _read_exact(f, 8, "magic") != FEA_MAGIC:
            raise DatasetFormatError(f"bad magic in {path}")
        version, dim, count = struct.unpack("<III", _read_exact(f, 12, "header"))
        if version != FEA_VERSION:
            raise DatasetFormatError(f"unsupported version {version}")
        for _ in range(count):
            (id_len,) = struct.unpack("<I", _read_exact(f, 4, "id length"))
            utt_id = _read_exact(f, id_len, "id").decode("utf-8")
            (T,) = struct.unpack("<I", _read_exact(f, 4, "frame count"))
            payload = _read_exact(f, T * dim * 4, f"frames of {utt_id!r}")
            if utt_id in out:
                raise DatasetFormatError(f"duplicate utterance id {utt_id!r}")
            out[utt_id] = np.frombuffer(payload, dtype="<f4").reshape(T, dim)
    return out


def write_transcripts(path, transcripts: dict):
    with open(path, "w", encoding="utf-8") as f:
        for utt_id, tokens in transcripts.items():
            f.write(f"{utt_id}\t{' '.join(str(t) for t in tokens)}\n")


def read_transcripts(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise DatasetFormatError(f"{path}:{line_no}: missing tab separator")
            utt_id, rest = line.split("\t", 1)
            if utt_id in out:
                raise DatasetFormatError(f"duplicate utterance id {utt_id!r}")
            try:
                out[utt_id] = [int(t) for t in rest.split()]
            except ValueError:
                raise DatasetFormatError(
                    f"{path}:{line_no}: non-integer token id") from None
    return out


def write_vocab(path, tokens):
    with open(path, "w", encoding="utf-8") as f:
        for tok in tokens:
            f.write(tok + "\n")


def read_vocab(path) -> list:
    with open(path, encoding="utf-8") as f:
        tokens = [line.rstrip("\n") for line in f if line.rstrip("\n")]
    if tokens[:4] != list(RESERVED_TOKENS):
        raise DatasetFormatError(
            f"vocabulary must start with the reserved tokens {RESERVED_TOKENS}")
    return tokens


def default_vocab(vocab_size: int) -> list:
    """Reserved ids then single letters (a, b, ...), then tNN names."""
    names = list(RESERVED_TOKENS)
    for i in range(vocab_size - len(names)):
        names.append(chr(ord("a") + i) if i < 26 else f"t{i:02d}")
    return names


def load_dataset(data_dir, split: str) -> Dataset:
    data_dir = Path(data_dir)
    feats = read_features(data_dir / f"{split}.fea")
    transcripts = read_transcripts(data_dir / f"{split}.txt")
    if set(feats) != set(transcripts):
        missing = set(feats) ^ set(transcripts)
        raise DatasetFormatError(
            f"{split}: features and transcripts disagree on ids {sorted(missing)[:5]}")
    ds = Dataset(split=split)
    for utt_id in feats:
        ds.utterances.append(Utterance(utt_id, feats[utt_id], transcripts[utt_id]))
    return ds


@dataclass
class SynthConfig:
    vocab_size: int = 20
    n_train: int = 50
    n_dev: int = 16
    n_test: int = 16
    seed: int = 0
    mu: float = 8.0               # frames per token
    min_tokens: int = 3
    max_tokens: int = 8
    jitter: float = 0.25          # +-25% token length jitter
    noise: float = 0.1
    silence_frames: int = 8       # leading and trailing near-silence margin
    feat_dim: int = 80

    def __post_init__(self):
        if self.vocab_size < 5:
            raise ValueError("need at least one non-reserved token")
        if not 1 <= self.min_tokens <= self.max_tokens:
            raise ValueError("bad token count range")


def make_templates(cfg: SynthConfig, rng) -> np.ndarray:
    """Fixed spectral template per token id; <EOS> gets a quiet one."""
    templates = np.zeros((cfg.vocab_size, cfg.feat_dim))
    for t in range(cfg.vocab_size):
        templates[t] = rng.normal(size=cfg.feat_dim)
    templates[EOS] *= 0.1
    return templates


def synth_utterance_features(tokens, templates, cfg: SynthConfig, rng) -> np.ndarray:
    """Emit ~mu frames per token plus silence margins; zero jitter is exact."""
    frames = []
    silence = np.zeros(cfg.feat_dim)
    for _ in range(cfg.silence_frames):
        frames.append(silence + cfg.noise * rng.normal(size=cfg.feat_dim))
    for tok in tokens:
        n = cfg.mu
        if cfg.jitter > 0:
            n = cfg.mu * (1.0 + rng.uniform(-cfg.jitter, cfg.jitter))
        n = max(1, int(round(n)))
        for _ in range(n):
            frames.append(templates[tok] + cfg.noise * rng.normal(size=cfg.feat_dim))
    for _ in range(cfg.silence_frames):
        frames.append(silence + cfg.noise * rng.normal(size=cfg.feat_dim))
    if cfg.silence_frames > 0:
        # The trailing margin grows until the encoder output (T // 8 steps)
        # strictly exceeds the token count, so weight scaling always has a
        # step to spare.
        while len(frames) < 8 * (len(tokens) + 1):
            frames.append(silence + cfg.noise * rng.normal(size=cfg.feat_dim))
    return np.stack(frames).astype(np.float32)


def _sample_transcript(cfg: SynthConfig, rng) -> list:
    """Content tokens without immediate repeats, closed by <EOS>."""
    n = int(rng.integers(cfg.min_tokens, cfg.max_tokens + 1))
    first_content = len(RESERVED_TOKENS)
    tokens, prev = [], None
    for _ in range(n):
        while True:
            tok = int(rng.integers(first_content, cfg.vocab_size))
            if tok != prev:
                break
        tokens.append(tok)
        prev = tok
    return tokens + [EOS]


def generate_synthetic(out_dir, cfg: SynthConfig):
    """Write train/dev/test feature+transcript files plus the vocabulary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    templates = make_templates(cfg, rng)
    write_vocab(out_dir / "vocab.txt", default_vocab(cfg.vocab_size))
    counter = 0
    for split, count in (("train", cfg.n_train), ("dev", cfg.n_dev),
                         ("test", cfg.n_test)):
        utts = []
        for _ in range(count):
            tokens = _sample_transcript(cfg, rng)
            feats = synth_utterance_features(tokens, templates, cfg, rng)
            utts.append(Utterance(f"{split}-{counter:04d}", feats, tokens))
            counter += 1
        write_features(out_dir / f"{split}.fea", utts, cfg.feat_dim)
        write_transcripts(out_dir / f"{split}.txt", {u.utt_id: u.tokens for u in utts})
    return out_dir
