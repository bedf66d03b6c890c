"""Fixed teacher embeddings: binary store I/O, alignment checks, synthetic teacher.

Teacher vectors are produced offline (the exporter drops the [CLS] output but
keeps the sentence-final position, so a sentence of I-1 tokens yields I rows,
the last pairing with the target's <EOS> slot). This module only loads and
validates them; nothing here runs a language model.

File format (little-endian): magic "HKDEMB1\\0", u32 version=1, u32 D,
u32 record count, then per record u32 id length, UTF-8 id bytes, u32 I,
and I*D float32 values row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"HKDEMB1\0"
VERSION = 1


class EmbeddingFormatError(ValueError):
    """Malformed or truncated embedding file."""


class AlignmentError(ValueError):
    """Teacher sequence length differs from the target token length."""


@dataclass
class TeacherSequence:
    utt_id: str
    E: np.ndarray  # (I, D) float32

    def __post_init__(self):
        self.E = np.ascontiguousarray(self.E, dtype=np.float32)
        if self.E.ndim != 2:
            raise ValueError(f"teacher embeddings must be 2-D, got {self.E.shape}")

    @property
    def length(self) -> int:
        return self.E.shape[0]

    @property
    def dim(self) -> int:
        return self.E.shape[1]


@dataclass
class EmbeddingStore:
    dim: int
    _records: dict = field(default_factory=dict)

    def add(self, seq: TeacherSequence):
        if seq.utt_id in self._records:
            raise EmbeddingFormatError(f"duplicate utterance id {seq.utt_id!r}")
        if seq.dim != self.dim:
            raise EmbeddingFormatError(
                f"record {seq.utt_id!r} has dim {seq.dim}, store has {self.dim}")
        self._records[seq.utt_id] = seq

    def get(self, utt_id: str) -> TeacherSequence:
        try:
            return self._records[utt_id]
        except KeyError:
            raise KeyError(f"no teacher embeddings for utterance {utt_id!r}") from None

    def __contains__(self, utt_id: str) -> bool:
        return utt_id in self._records

    def __len__(self) -> int:
        return len(self._records)

    def ids(self):
        return list(self._records)


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise EmbeddingFormatError(f"truncated file while reading {what}")
    return buf


def load_embedding_file(path, expect_dim: int = None) -> EmbeddingStore:
    """Parse an embedding file, validating structure and dimensions."""
    with open(path, "rb") as f:
        if _read_exact(f, 8, "magic") != MAGIC:
            raise EmbeddingFormatError(f"bad magic in {path}")
        version, dim, count = struct.unpack("<III", _read_exact(f, 12, "header"))
        if version != VERSION:
            raise EmbeddingFormatError(f"unsupported version {version}")
        if expect_dim is not None and dim != expect_dim:
            raise EmbeddingFormatError(
                f"teacher dim {dim} does not match configured dim {expect_dim}")
        store = EmbeddingStore(dim=dim)
        for _ in range(count):
            (id_len,) = struct.unpack("<I", _read_exact(f, 4, "id length"))
            utt_id = _read_exact(f, id_len, "utterance id").decode("utf-8")
            (length,) = struct.unpack("<I", _read_exact(f, 4, "token count"))
            payload = _read_exact(f, length * dim * 4, f"embeddings of {utt_id!r}")
            E = np.frombuffer(payload, dtype="<f4").reshape(length, dim)
            store.add(TeacherSequence(utt_id=utt_id, E=E))
        if f.read(1):
            raise EmbeddingFormatError("trailing bytes after last record")
    return store


def save_embedding_file(store: EmbeddingStore, path):
    """Write the store in the binary format; loading it back is bit-identical."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", VERSION, store.dim, len(store)))
        for utt_id in store.ids():
            seq = store.get(utt_id)
            raw = utt_id.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", seq.length))
            f.write(seq.E.astype("<f4", copy=False).tobytes(order="C"))


def align_check(teacher: TeacherSequence, target_len: int):
    """Strict one-to-one pairing: teacher length must equal the target length."""
    if teacher.length != target_len:
        raise AlignmentError(
            f"teacher/target length mismatch for {teacher.utt_id!r}: "
            f"teacher {teacher.length} vs target {target_len}")


class SyntheticTeacher:
    """Context-free stand-in teacher: token id t always maps to unit vector u_t."""

    def __init__(self, vocab_size: int, dim: int, seed: int):
        rng = np.random.default_rng(seed)
        table = rng.normal(size=(vocab_size, dim))
        table /= np.linalg.norm(table, axis=1, keepdims=True)
        self.table = table.astype(np.float32)
        self.vocab_size = vocab_size
        self.dim = dim

    def embed(self, tokens) -> np.ndarray:
        ids = np.asarray(tokens, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise ValueError(f"token id out of range 0..{self.vocab_size - 1}")
        return self.table[ids]

    def build_store(self, transcripts: dict) -> EmbeddingStore:
        """transcripts: utterance id -> token id sequence (including <EOS>)."""
        store = EmbeddingStore(dim=self.dim)
        for utt_id, tokens in transcripts.items():
            store.add(TeacherSequence(utt_id=utt_id, E=self.embed(tokens)))
        return store


def synthetic_teacher(vocab_size: int, dim: int, seed: int) -> SyntheticTeacher:
    return SyntheticTeacher(vocab_size, dim, seed)
