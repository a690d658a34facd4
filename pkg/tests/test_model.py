import math

import numpy as np
import pytest

from ctcsum import ctc, model
from ctcsum.errors import (
    CheckpointFormatError,
    DivergenceError,
    InfeasibleTargetError,
    OutOfVocabularyError,
    ShapeError,
)
from ctcsum.numerics import derive_rng
from ctcsum.text import CorpusPair


def small_config(**kw):
    base = dict(vocab_in=10, n_labels=5, d_emb=6, d_hidden=8, n_layers=2)
    base.update(kw)
    return model.ModelConfig(**base)


@pytest.fixture
def params():
    return model.init_params(small_config(), derive_rng(7, "init"))


class TestForward:
    def test_shape_and_normalization(self, params):
        for T in (1, 4, 9):
            y, _ = model.forward(params, list(range(T % 10)) or [0] * T)
        y, _ = model.forward(params, [1, 2, 3, 4])
        assert y.shape == (4, 5)
        np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-12)

    def test_zero_params_give_uniform_rows(self):
        p = model.init_params(small_config(), derive_rng(0, "init"))
        for t in p.tensors.values():
            t[:] = 0.0
        y, _ = model.forward(p, [0, 3, 7])
        np.testing.assert_allclose(y, 1 / 5, atol=1e-15)

    def test_oov_rejected(self, params):
        with pytest.raises(OutOfVocabularyError):
            model.forward(params, [0, 10])
        with pytest.raises(OutOfVocabularyError):
            model.forward(params, [-1])

    def test_empty_rejected(self, params):
        with pytest.raises(ShapeError):
            model.forward(params, [])

    def test_forward_cells_are_prefix_pure(self, params):
        # first layer forward-direction state at t only sees x[0..t];
        # deeper layers mix directions through their inputs
        ids = [1, 2, 3, 4, 5, 6]
        _, full = model.forward(params, ids)
        _, prefix = model.forward(params, ids[:4])
        np.testing.assert_array_equal(full.layer_caches[0][0]["c"][:4], prefix.layer_caches[0][0]["c"])

    def test_backward_cells_are_suffix_pure(self, params):
        ids = [1, 2, 3, 4, 5, 6]
        _, full = model.forward(params, ids)
        _, suffix = model.forward(params, ids[2:])
        # bwd caches run on reversed input: index 0 is the last frame
        np.testing.assert_array_equal(full.layer_caches[0][1]["c"][:4], suffix.layer_caches[0][1]["c"])

    def test_reversal_changes_values_not_shape(self, params):
        a, _ = model.forward(params, [1, 2, 3])
        b, _ = model.forward(params, [3, 2, 1])
        assert a.shape == b.shape
        assert not np.allclose(a, b)

    def test_deterministic(self, params):
        a, _ = model.forward(params, [5, 4, 3])
        b, _ = model.forward(params, [5, 4, 3])
        np.testing.assert_array_equal(a, b)


class TestBackward:
    def test_zero_grad_logits(self, params):
        _, cache = model.forward(params, [1, 2, 3])
        grads = model.backward(cache, np.zeros_like(cache.logits))
        for g in grads.values():
            np.testing.assert_array_equal(g, 0.0)

    def test_shape_mismatch(self, params):
        _, cache = model.forward(params, [1, 2, 3])
        with pytest.raises(ShapeError):
            model.backward(cache, np.zeros((2, 5)))

    def test_bit_identical_across_calls(self, params):
        _, cache = model.forward(params, [1, 2, 3, 4])
        gl = derive_rng(3, "gl").normal(size=cache.logits.shape)
        a = model.backward(cache, gl)
        b = model.backward(cache, gl)
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_end_to_end_finite_differences(self):
        # step 1e-3: central-difference noise is eps*loss/h ~ 1e-13, well under
        # the 1e-4 relative gate even for weakly coupled weights (see ledger)
        cfg = small_config()
        p = model.init_params(cfg, derive_rng(11, "init"))
        for t in p.tensors.values():
            t += derive_rng(12, "jitter").uniform(-0.3, 0.3, size=t.shape)
        ids = [1, 4, 2, 9, 0, 3]
        target = [2, 1, 4]

        def loss_of():
            _, c = model.forward(p, ids)
            return ctc.ctc_loss_and_grad(c.logits, target).loss

        _, cache = model.forward(p, ids)
        res = ctc.ctc_loss_and_grad(cache.logits, target)
        grads = model.backward(cache, res.grad_logits)
        rng = derive_rng(13, "pick")
        step = 1e-3
        for name, g in grads.items():
            flat = p.tensors[name].ravel()
            for idx in rng.choice(flat.size, size=min(4, flat.size), replace=False):
                old = flat[idx]
                flat[idx] = old + step
                up = loss_of()
                flat[idx] = old - step
                down = loss_of()
                flat[idx] = old
                fd = (up - down) / (2 * step)
                rel = abs(fd - g.ravel()[idx]) / max(abs(fd), abs(g.ravel()[idx]), 1e-8)
                assert rel <= 1e-4, f"{name}[{idx}]: fd={fd!r} analytic={g.ravel()[idx]!r}"

    def test_single_weight_directional_derivative(self):
        # perturb one live weight by +/-1e-4: loss difference matches grad * 2h
        cfg = small_config()
        p = model.init_params(cfg, derive_rng(21, "init"))
        for t in p.tensors.values():
            t += derive_rng(22, "jitter").uniform(-0.3, 0.3, size=t.shape)
        ids = [3, 1, 4, 1, 5, 9]
        target = [1, 2]
        _, cache = model.forward(p, ids)
        res = ctc.ctc_loss_and_grad(cache.logits, target)
        grads = model.backward(cache, res.grad_logits)
        flat_g = grads["proj.w"].ravel()
        idx = int(np.argmax(np.abs(flat_g)))
        h = 1e-4
        flat_p = p.tensors["proj.w"].ravel()
        old = flat_p[idx]
        flat_p[idx] = old + h
        _, c = model.forward(p, ids)
        up = ctc.ctc_loss_and_grad(c.logits, target).loss
        flat_p[idx] = old - h
        _, c = model.forward(p, ids)
        down = ctc.ctc_loss_and_grad(c.logits, target).loss
        flat_p[idx] = old
        assert (up - down) == pytest.approx(2 * h * flat_g[idx], rel=1e-4)


class TestClip:
    def test_norm_bound_holds(self):
        rng = derive_rng(5, "clip")
        grads = {"a": rng.normal(size=(4, 4)) * 10, "b": rng.normal(size=7) * 10}
        pre = model.clip_global_norm(grads, 1.5)
        post = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        assert pre > 1.5
        assert post <= 1.5 + 1e-9

    def test_no_scaling_below_threshold(self):
        grads = {"a": np.array([0.1, 0.2])}
        before = grads["a"].copy()
        model.clip_global_norm(grads, 10.0)
        np.testing.assert_array_equal(grads["a"], before)


class TestTrain:
    def _pairs(self, n=1):
        return [CorpusPair(str(i), [1, 2, 3, 4, 5, 6], [2, 1]) for i in range(n)]

    def test_memorizes_single_pair(self):
        cfg = model.TrainConfig(epochs=900, batch_size=1, seed=9, d_emb=8, d_hidden=12)
        params, reports = model.train(self._pairs(), cfg, vocab_in=10, n_labels=5)
        assert reports[-1].mean_loss < 0.01
        # trend check: the tail of the trace sits far below the head
        assert reports[-1].mean_loss < reports[0].mean_loss / 100

    def test_same_seed_identical_trace(self):
        pairs = [
            CorpusPair("0", [1, 2, 3, 4], [1]),
            CorpusPair("1", [4, 3, 2, 1, 5], [2, 1]),
            CorpusPair("2", [5, 5, 2, 2], [3]),
        ]
        cfg = model.TrainConfig(epochs=3, batch_size=2, seed=123, d_emb=6, d_hidden=8)
        _, r1 = model.train(pairs, cfg, vocab_in=10, n_labels=5)
        _, r2 = model.train(pairs, cfg, vocab_in=10, n_labels=5)
        assert [r.mean_loss for r in r1] == [r.mean_loss for r in r2]
        assert [r.skipped for r in r1] == [r.skipped for r in r2]

    def test_infeasible_pairs_skipped_and_counted(self):
        pairs = [
            CorpusPair("0", [1, 2, 3, 4], [1]),
            CorpusPair("1", [1], [2, 3]),  # needs 2 frames, has 1
        ]
        cfg = model.TrainConfig(epochs=2, batch_size=2, seed=1, d_emb=4, d_hidden=4)
        _, reports = model.train(pairs, cfg, vocab_in=10, n_labels=5)
        assert all(r.skipped == 1 for r in reports)

    def test_all_infeasible_rejected(self):
        pairs = [CorpusPair("0", [1], [2, 3])]
        cfg = model.TrainConfig(epochs=1, batch_size=1, seed=1)
        with pytest.raises(InfeasibleTargetError):
            model.train(pairs, cfg, vocab_in=10, n_labels=5)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            model.train([], model.TrainConfig(), vocab_in=10, n_labels=5)

    def test_divergence_names_step(self):
        cfg = model.TrainConfig(
            epochs=5, batch_size=1, seed=2, d_emb=4, d_hidden=4, optimizer="sgd", learning_rate=1e12, clip_norm=1e12
        )
        with pytest.raises(DivergenceError, match=r"step \d+"):
            model.train(self._pairs(4), cfg, vocab_in=10, n_labels=5)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            model.TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            model.TrainConfig(clip_norm=0)
        with pytest.raises(ValueError):
            model.TrainConfig(optimizer="adagrad")


class TestEmbeddingHook:
    def test_rows_overwritten(self):
        p = model.init_params(small_config(), derive_rng(1, "init"))
        table = {"tok2": np.arange(6, dtype=float)}
        hits = model.apply_embedding_table(p, ["tok0", "tok1", "tok2"], table)
        assert hits == 1
        np.testing.assert_array_equal(p.tensors["embed"][2], np.arange(6.0))

    def test_dim_mismatch(self):
        p = model.init_params(small_config(), derive_rng(1, "init"))
        with pytest.raises(ShapeError):
            model.apply_embedding_table(p, ["a"], {"a": np.ones(5)})


class TestCheckpoint:
    def _checkpoint(self, seed=3):
        p = model.init_params(small_config(), derive_rng(seed, "init"))
        return model.Checkpoint(
            params=p,
            input_tokens=["<blank>", "<unk>", "<num>", "<foreign>", "甲", "乙"],
            output_tokens=["<blank>", "<unk>", "<num>", "<foreign>", "丙"],
            step=17,
            meta={"train": {"seed": seed}, "prepare": {"mode": "character", "k": 1}},
        )

    def test_crc64_check_value(self):
        assert model.crc64(b"123456789") == 0x995DC9BBDF1939FA

    def test_round_trip_exact_at_stored_precision(self, tmp_path):
        ckpt = self._checkpoint()
        path = tmp_path / "m.ctch"
        model.save_checkpoint(ckpt, path)
        loaded = model.load_checkpoint(path)
        assert loaded.step == 17
        assert loaded.input_tokens == ckpt.input_tokens
        assert loaded.output_tokens == ckpt.output_tokens
        assert loaded.meta == ckpt.meta
        for name, t in ckpt.params.tensors.items():
            np.testing.assert_array_equal(loaded.params.tensors[name], t.astype(np.float32).astype(np.float64))

    def test_save_load_save_is_byte_stable(self, tmp_path):
        ckpt = self._checkpoint()
        p1 = tmp_path / "a.ctch"
        p2 = tmp_path / "b.ctch"
        model.save_checkpoint(ckpt, p1)
        model.save_checkpoint(model.load_checkpoint(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_flipped_payload_byte_fails_checksum(self, tmp_path):
        path = tmp_path / "m.ctch"
        model.save_checkpoint(self._checkpoint(), path)
        blob = bytearray(path.read_bytes())
        blob[60] ^= 0x01
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointFormatError, match="checksum"):
            model.load_checkpoint(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.ctch"
        model.save_checkpoint(self._checkpoint(), path)
        blob = bytearray(path.read_bytes())
        blob[0] = ord("X")
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointFormatError, match="magic"):
            model.load_checkpoint(path)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "m.ctch"
        model.save_checkpoint(self._checkpoint(), path)
        blob = bytearray(path.read_bytes())
        blob[4] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointFormatError, match="version 99"):
            model.load_checkpoint(path)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "m.ctch"
        model.save_checkpoint(self._checkpoint(), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:10])
        with pytest.raises(CheckpointFormatError):
            model.load_checkpoint(path)
        path.write_bytes(blob[: len(blob) - 8])
        with pytest.raises(CheckpointFormatError):
            model.load_checkpoint(path)
