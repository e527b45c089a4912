import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aedhwr import tensor as T
from aedhwr.decoder import AttentionDecoder, AttentionRecord, DecoderConfig, attention_overlay
from aedhwr.encoder import AnnotationGrid
from aedhwr.ink import END_ID, PAD_ID, START_ID, Vocabulary
from aedhwr.raster import RasterImage
from aedhwr.tensor import Tensor, UsageError
from helpers import TOL, model_gradcheck

V, C = 8, 5
VOCAB = Vocabulary(list("abcd"))


def make_decoder(seed=0, max_len=10):
    with T.precision(np.float64):
        return AttentionDecoder(V, C, DecoderConfig(6, 4, 7, max_len), np.random.default_rng(seed)).astype(np.float64)


def make_grid(vectors, mask=None, hw=None):
    vectors = np.asarray(vectors, dtype=np.float64)
    n, length, _ = vectors.shape
    mask = np.zeros((n, length), dtype=bool) if mask is None else np.asarray(mask)
    h, w = hw or (1, length)
    return AnnotationGrid(Tensor(vectors, dtype=np.float64), mask, h, w)


def random_grid(rng, n=2, length=6, masked=(0, 2)):
    mask = np.zeros((n, length), dtype=bool)
    for i, k in enumerate(masked[:n]):
        if k:
            mask[i, -k:] = True
    return make_grid(rng.normal(size=(n, length, C)), mask)


def first_step(dec, grid):
    with T.no_grad():
        return dec.step(dec.init_state(grid), grid)


# -------------------------------------------------------------- init_state


def test_init_constant_annotations():
    dec = make_decoder()
    v = np.array([0.3, -1.0, 2.0, 0.5, 0.0])
    state = dec.init_state(make_grid(np.tile(v, (1, 4, 1))))
    np.testing.assert_allclose(state.h.data[0], np.tanh(v @ dec.init_h.w.data + dec.init_h.b.data))
    assert state.y_prev.tolist() == [START_ID]
    assert not state.o_prev.data.any()


def test_init_zero_map_gives_zero_state():
    dec = make_decoder()
    dec.init_h.w.data[...] = 0
    dec.init_h.b.data[...] = 0
    state = dec.init_state(random_grid(np.random.default_rng(0)))
    assert not state.h.data.any()


def test_init_uses_mean_of_unmasked_half():
    rng = np.random.default_rng(1)
    vecs = rng.normal(size=(1, 6, C))
    mask = np.array([[False, False, False, True, True, True]])
    dec = make_decoder()
    state = dec.init_state(make_grid(vecs, mask))
    mean = vecs[0, :3].mean(axis=0)
    np.testing.assert_allclose(state.c.data[0], np.tanh(mean @ dec.init_c.w.data + dec.init_c.b.data), atol=1e-12)


def test_init_all_masked_is_usage_error():
    with pytest.raises(UsageError):
        make_decoder().init_state(make_grid(np.ones((1, 3, C)), np.ones((1, 3), dtype=bool)))


# --------------------------------------------------------------- attention


def test_single_position_attention():
    a = np.array([[[1.0, 2.0, 3.0, 4.0, 5.0]]])
    _, _, rec = first_step(make_decoder(), make_grid(a))
    assert rec.weights.tolist() == [[1.0]]
    np.testing.assert_array_equal(rec.context[0], a[0, 0])


def test_identical_annotations_give_that_vector():
    a = np.tile(np.array([0.5, -0.25, 1.0, 2.0, -3.0]), (1, 7, 1))
    _, _, rec = first_step(make_decoder(), make_grid(a))
    np.testing.assert_allclose(rec.context[0], a[0, 0], atol=1e-12)


def test_context_is_explicit_weighted_sum():
    rng = np.random.default_rng(4)
    grid = random_grid(rng, n=2, length=9, masked=(0, 4))
    dec = make_decoder(3)
    state = dec.init_state(grid)
    with T.no_grad():
        for _ in range(3):
            _, state, rec = dec.step(state, grid)
            for i in range(2):
                explicit = sum(rec.weights[i, j] * grid.vectors.data[i, j] for j in range(9))
                np.testing.assert_allclose(rec.context[i], explicit, atol=1e-5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12), st.integers(0, 11))
def test_attention_is_distribution_on_unmasked(seed, length, n_masked):
    n_masked = min(n_masked, length - 1)
    rng = np.random.default_rng(seed)
    grid = random_grid(rng, n=2, length=length, masked=(n_masked, 0))
    dec = make_decoder(seed % 7)
    state = dec.init_state(grid)
    with T.no_grad():
        for _ in range(3):
            _, state, rec = dec.step(state, grid)
            w = rec.weights
            assert np.all(w >= 0)
            np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-6)
            assert np.all(w[grid.mask] == 0.0)
            for i in range(2):
                valid = grid.vectors.data[i][~grid.mask[i]]
                assert np.all(rec.context[i] >= valid.min(axis=0) - 1e-12)
                assert np.all(rec.context[i] <= valid.max(axis=0) + 1e-12)


# ------------------------------------------------------------------- loss


def np_oracle_loss(dec, vectors, mask, targets):
    """Straight-line numpy re-implementation of the teacher-forced objective."""
    P = {n: p.data for n, p in dec.named_parameters()}
    H = dec.cfg.hidden_size

    def sig(z):
        return 1 / (1 + np.exp(-z))

    per_sample = []
    for a, m, tgt in zip(vectors, mask, targets):
        valid = a[~m]
        mean = valid.mean(axis=0)
        h = np.tanh(mean @ P["init_h.w"] + P["init_h.b"])
        c = np.tanh(mean @ P["init_c.w"] + P["init_c.b"])
        o = np.zeros(H)
        y = START_ID
        losses = []
        for sym in tgt:
            x = np.concatenate([P["embed"][y], o])
            z = x @ P["lstm.wx"] + h @ P["lstm.wh"] + P["lstm.b"]
            i_, f_, g_, o_ = sig(z[:H]), sig(z[H : 2 * H]), np.tanh(z[2 * H : 3 * H]), sig(z[3 * H :])
            c = f_ * c + i_ * g_
            h = o_ * np.tanh(c)
            o = h
            e = np.array([
                (np.tanh(h @ P["att_query.w"] + a[j] @ P["att_key.w"]) @ P["att_v"][:, 0]) if not m[j] else -np.inf
                for j in range(len(a))
            ])
            alpha = np.exp(e - e.max())
            alpha /= alpha.sum()
            ctx = alpha @ a
            logits = np.concatenate([h, ctx]) @ P["out.w"] + P["out.b"]
            logp = logits - logits.max() - np.log(np.exp(logits - logits.max()).sum())
            losses.append(-logp[sym])
            y = sym
        per_sample.append(np.mean(losses))
    return float(np.mean(per_sample))


@pytest.mark.parametrize("seed", range(3))
def test_loss_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    grid = random_grid(rng, n=3, length=7, masked=(0, 3, 1))
    targets = [[4, 5, END_ID], [6, END_ID], [7, 7, 4, 5, END_ID]]
    dec = make_decoder(seed)
    got = float(dec.teacher_forced_loss(grid, targets).data)
    assert abs(got - np_oracle_loss(dec, grid.vectors.data, grid.mask, targets)) <= 1e-5


def test_uniform_logits_give_ln_v():
    dec = make_decoder()
    dec.out.w.data[...] = 0
    dec.out.b.data[...] = 0
    grid = random_grid(np.random.default_rng(0), n=1)
    loss = dec.teacher_forced_loss(grid, [[4, 5, 6, END_ID]])
    assert float(loss.data) == pytest.approx(math.log(V), abs=1e-12)


def test_end_only_target_is_single_step():
    dec = make_decoder(2)
    grid = random_grid(np.random.default_rng(2), n=1)
    logits, _, _ = first_step(dec, grid)
    expected = -(logits.data[0, END_ID] - np.log(np.exp(logits.data[0]).sum()))
    assert float(dec.teacher_forced_loss(grid, [[END_ID]]).data) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("bad", [[4, PAD_ID, END_ID], [4, 5], [END_ID, 4, END_ID], []])
def test_malformed_targets(bad):
    with pytest.raises(UsageError):
        make_decoder().teacher_forced_loss(random_grid(np.random.default_rng(0), n=1), [bad])


def test_decoder_gradcheck_toy():
    dec = make_decoder(5)
    grid = random_grid(np.random.default_rng(5), n=2, length=6, masked=(0, 2))
    targets = [[4, 6, END_ID], [5, END_ID]]
    errors, _ = model_gradcheck(dec, lambda: dec.teacher_forced_loss(grid, targets), per_tensor=32)
    assert len(errors) == len(list(dec.named_parameters()))
    assert max(errors.values()) < TOL


# ------------------------------------------------------------------ greedy


def test_end_ranked_first_gives_empty_text():
    dec = make_decoder()
    dec.out.w.data[...] = 0
    dec.out.b.data[...] = 0
    dec.out.b.data[END_ID] = 5
    [(text, recs)] = dec.decode_greedy(random_grid(np.random.default_rng(0), n=1), VOCAB)
    assert text == "" and recs == []


def test_length_cap():
    dec = make_decoder(max_len=5)
    dec.out.w.data[...] = 0
    dec.out.b.data[...] = 0
    dec.out.b.data[6] = 5
    [(text, recs)] = dec.decode_greedy(random_grid(np.random.default_rng(0), n=1), VOCAB)
    assert text == "ccccc" and len(recs) == 5


def test_argmax_ties_pick_lowest_index():
    dec = make_decoder(max_len=3)
    dec.out.w.data[...] = 0
    dec.out.b.data[...] = 0
    dec.out.b.data[[5, 6]] = 5
    [(text, _)] = dec.decode_greedy(random_grid(np.random.default_rng(0), n=1), VOCAB)
    assert text == "bbb"


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000), st.integers(2, 15))
def test_greedy_deterministic_and_terminates(seed, cap):
    dec = make_decoder(seed % 5, max_len=cap)
    grid = random_grid(np.random.default_rng(seed), n=2)
    a = dec.decode_greedy(grid, VOCAB)
    b = dec.decode_greedy(grid, VOCAB)
    for (ta, ra), (tb, rb) in zip(a, b):
        assert ta == tb and len(ta) <= cap
        assert all(x.weights.tobytes() == y.weights.tobytes() for x, y in zip(ra, rb))


def test_batched_greedy_equals_single():
    dec = make_decoder(1)
    grid = random_grid(np.random.default_rng(8), n=2, masked=(0, 3))
    both = dec.decode_greedy(grid, VOCAB)
    for i in range(2):
        [(text, recs)] = dec.decode_greedy(grid.select(i), VOCAB)
        assert text == both[i][0]
        for r, s in zip(recs, both[i][1]):
            np.testing.assert_allclose(r.weights, s.weights, atol=1e-12)


# ----------------------------------------------------------------- overlay


def blank(h=16, w=32):
    return RasterImage(np.full((h, w), 255, dtype=np.uint8))


def test_overlay_one_hot_block():
    w = np.zeros(8)
    w[5] = 1.0
    _, heat = attention_overlay(blank(), AttentionRecord(w, np.zeros(1)), (2, 4))
    nz = np.argwhere(heat.pixels > 0)
    assert nz.min(axis=0).tolist() == [8, 8] and nz.max(axis=0).tolist() == [15, 15]
    assert len(nz) == 64 and (heat.pixels[8:16, 8:16] == 255).all()


def test_overlay_uniform_value():
    L = 8
    _, heat = attention_overlay(blank(), AttentionRecord(np.full(L, 1 / L), np.zeros(1)), (2, 4))
    assert (heat.pixels == round(255 / L)).all()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_overlay_mass_is_conserved(seed):
    rng = np.random.default_rng(seed)
    w = rng.random(8)
    w /= w.sum()
    _, heat = attention_overlay(blank(), AttentionRecord(w, np.zeros(1)), (2, 4))
    # each of the 8 cells rounds to within half a grey level, on 64 pixels
    assert abs(heat.pixels.sum() / 255 - 64) <= 8 * 64 * 0.5 / 255


def test_overlay_size_mismatch():
    with pytest.raises(UsageError):
        attention_overlay(blank(), AttentionRecord(np.full(6, 1 / 6), np.zeros(1)), (2, 4))
