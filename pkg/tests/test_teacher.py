"""Embedding store round trips, alignment checks, synthetic teacher."""

import struct

import numpy as np
import pytest

from cifkd.teacher import (
    MAGIC,
    AlignmentError,
    EmbeddingFormatError,
    EmbeddingStore,
    TeacherSequence,
    align_check,
    load_embedding_file,
    save_embedding_file,
    synthetic_teacher,
)


def make_store(rng, dim=4, n=3):
    store = EmbeddingStore(dim=dim)
    for k in range(n):
        length = int(rng.integers(1, 6))
        store.add(TeacherSequence(utt_id=f"utt{k:03d}",
                                  E=rng.normal(size=(length, dim))))
    return store


class TestStoreIO:
    def test_round_trip_bit_identical(self, tmp_path):
        store = make_store(np.random.default_rng(0))
        path = tmp_path / "emb.bin"
        save_embedding_file(store, path)
        loaded = load_embedding_file(path)
        assert loaded.dim == store.dim
        assert loaded.ids() == store.ids()
        for utt_id in store.ids():
            a, b = store.get(utt_id).E, loaded.get(utt_id).E
            assert a.dtype == b.dtype == np.float32
            np.testing.assert_array_equal(a.view(np.uint32), b.view(np.uint32))

    def test_empty_store_round_trip(self, tmp_path):
        path = tmp_path / "empty.bin"
        save_embedding_file(EmbeddingStore(dim=8), path)
        loaded = load_embedding_file(path)
        assert len(loaded) == 0 and loaded.dim == 8

    def test_hand_built_record(self, tmp_path):
        # one record, I=3, D=4, payload 0..11, assembled byte by byte
        payload = np.arange(12, dtype="<f4")
        blob = MAGIC + struct.pack("<III", 1, 4, 1)
        blob += struct.pack("<I", 5) + b"utt-a" + struct.pack("<I", 3)
        blob += payload.tobytes()
        path = tmp_path / "hand.bin"
        path.write_bytes(blob)
        store = load_embedding_file(path)
        seq = store.get("utt-a")
        assert seq.length == 3 and seq.dim == 4
        np.testing.assert_array_equal(seq.E, payload.reshape(3, 4))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTMAGIC" + struct.pack("<III", 1, 4, 0))
        with pytest.raises(EmbeddingFormatError, match="magic"):
            load_embedding_file(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "v9.bin"
        path.write_bytes(MAGIC + struct.pack("<III", 9, 4, 0))
        with pytest.raises(EmbeddingFormatError, match="version"):
            load_embedding_file(path)

    def test_truncated_record(self, tmp_path):
        blob = MAGIC + struct.pack("<III", 1, 4, 1)
        blob += struct.pack("<I", 3) + b"abc" + struct.pack("<I", 2)
        blob += b"\x00" * 10  # needs 2*4*4 = 32 bytes
        path = tmp_path / "trunc.bin"
        path.write_bytes(blob)
        with pytest.raises(EmbeddingFormatError, match="truncated"):
            load_embedding_file(path)

    def test_trailing_garbage(self, tmp_path):
        path = tmp_path / "trail.bin"
        path.write_bytes(MAGIC + struct.pack("<III", 1, 2, 0) + b"x")
        with pytest.raises(EmbeddingFormatError, match="trailing"):
            load_embedding_file(path)

    def test_duplicate_id(self, tmp_path):
        rec = struct.pack("<I", 1) + b"a" + struct.pack("<I", 1) + b"\x00" * 8
        path = tmp_path / "dup.bin"
        path.write_bytes(MAGIC + struct.pack("<III", 1, 2, 2) + rec + rec)
        with pytest.raises(EmbeddingFormatError, match="duplicate"):
            load_embedding_file(path)

    def test_dim_mismatch_with_config(self, tmp_path):
        path = tmp_path / "dim.bin"
        save_embedding_file(EmbeddingStore(dim=4), path)
        with pytest.raises(EmbeddingFormatError, match="dim"):
            load_embedding_file(path, expect_dim=16)

    def test_store_rejects_wrong_width_record(self):
        store = EmbeddingStore(dim=4)
        with pytest.raises(EmbeddingFormatError, match="dim"):
            store.add(TeacherSequence("x", np.zeros((2, 3))))

    def test_missing_utterance_lookup(self):
        with pytest.raises(KeyError, match="nope"):
            EmbeddingStore(dim=2).get("nope")


class TestAlignCheck:
    def test_matching_lengths_pass(self):
        seq = TeacherSequence("u1", np.zeros((5, 2)))
        align_check(seq, 5)

    def test_mismatch_names_both_lengths_and_id(self):
        seq = TeacherSequence("u7", np.zeros((6, 2)))
        with pytest.raises(AlignmentError) as exc:
            align_check(seq, 5)
        msg = str(exc.value)
        assert "u7" in msg and "6" in msg and "5" in msg and "mismatch" in msg

    def test_sentence_final_position_counted(self):
        # a 4-token sentence exports 5 teacher rows; targets of length 5
        # (4 tokens + <EOS>) align exactly
        teacher = synthetic_teacher(vocab_size=10, dim=8, seed=0)
        tokens = [5, 6, 7, 8, 1]  # 4 content tokens + <EOS>=1
        seq = TeacherSequence("u1", teacher.embed(tokens))
        align_check(seq, len(tokens))


class TestSyntheticTeacher:
    def test_same_seed_same_vectors(self):
        a = synthetic_teacher(12, 16, seed=3).embed([0, 5, 11])
        b = synthetic_teacher(12, 16, seed=3).embed([0, 5, 11])
        np.testing.assert_array_equal(a, b)

    def test_unit_norm(self):
        t = synthetic_teacher(20, 32, seed=1)
        np.testing.assert_allclose(np.linalg.norm(t.table, axis=1), 1.0, atol=1e-5)

    def test_token_identity_is_context_free(self):
        t = synthetic_teacher(10, 8, seed=2)
        out = t.embed([3, 3, 4])
        np.testing.assert_array_equal(out[0], out[1])
        assert not np.array_equal(out[0], out[2])

    def test_distinct_tokens_spread_out(self):
        # seeded draw: any |cosine| >= 0.5 would mean two of 20 tokens nearly
        # collide in 32 dimensions, vanishingly unlikely for this fixed seed
        t = synthetic_teacher(20, 32, seed=7)
        gram = t.table @ t.table.T
        off = gram[~np.eye(20, dtype=bool)]
        assert np.all(np.abs(off) < 0.5)

    def test_out_of_range_token_rejected(self):
        with pytest.raises(ValueError, match="range"):
            synthetic_teacher(5, 4, seed=0).embed([5])

    def test_build_store(self):
        t = synthetic_teacher(10, 6, seed=4)
        store = t.build_store({"a": [1, 2], "b": [3, 4, 1]})
        assert len(store) == 2 and store.dim == 6
        assert store.get("b").length == 3
        np.testing.assert_array_equal(store.get("a").E, t.embed([1, 2]))
