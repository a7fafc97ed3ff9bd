import math

import numpy as np
import pytest

from tt_aste.errors import ConfigError, GeometryError
from tt_aste.decoder import (
    AOPE_CLASSES,
    ASTE_CLASSES,
    INVALID,
    DecoderParams,
    VertexPredictions,
    candidate_labels,
    enumerate_candidates,
    extract_triplets,
    inference_candidates,
    predict_vertices,
    rectangle_repr,
    rectangle_reprs,
    sentiment_logits,
    sentiment_loss,
    total_loss,
    vertex_loss,
)
from tt_aste.numerics import ParameterStore, Tensor, grad_check
from tt_aste.tagging import Pair, Polarity, Region, SentenceRecord, encode_labels, make_triplet

PEAK = 40.0


def _params(d=4, k=4, seed=0):
    store = ParameterStore(seed, 0.5)
    return store, DecoderParams.create(store, d, k)


def _peaked(grid):
    """2-class logits that put all mass on the gold class of each cell."""
    out = np.zeros(grid.shape + (2,))
    out[..., 1] = np.where(grid == 1, PEAK, -PEAK)
    return out


def _perfect(rec, k=4):
    lab = encode_labels(rec)
    preds = VertexPredictions(Tensor(_peaked(lab.tl)), Tensor(_peaked(lab.br)))
    cands = inference_candidates(preds)
    labels = candidate_labels(cands, lab.regions, k)
    logits = np.full((len(cands), k), -PEAK)
    logits[np.arange(len(cands)), labels] = PEAK
    return lab, preds, cands, logits


# --- vertices ------------------------------------------------------------------


def test_vertex_shapes_and_zero_weights():
    _, p = _params()
    R = Tensor(np.random.default_rng(0).normal(size=(5, 5, 4)))
    v = predict_vertices(R, p)
    assert v.p_tl.shape == v.p_br.shape == (5, 5, 2)
    for w in (p.tl_w, p.br_w):
        w.value.data[:] = 0.0
    v = predict_vertices(R, p)
    assert np.all(v.p_tl.data == 0) and np.all(v.p_br.data == 0)


def test_vertex_heads_match_per_cell_oracle():
    _, p = _params()
    R = np.random.default_rng(1).normal(size=(3, 3, 4))
    v = predict_vertices(Tensor(R), p)
    for i in range(3):
        for j in range(3):
            np.testing.assert_allclose(v.p_tl.data[i, j], R[i, j] @ p.tl_w.data + p.tl_b.data, atol=1e-12)
            np.testing.assert_allclose(v.p_br.data[i, j], R[i, j] @ p.br_w.data + p.br_b.data, atol=1e-12)


def test_vertex_loss_uniform_is_two_ln2():
    lab = encode_labels(SentenceRecord(list("abcd"), [make_triplet((0, 0), (2, 3), "POS")]))
    z = Tensor(np.zeros((4, 4, 2)))
    assert abs(vertex_loss(VertexPredictions(z, z), lab).item() - 2 * math.log(2)) < 1e-12
    # positive weighting leaves uniform logits at the same per-cell value scaled on positives only
    got = vertex_loss(VertexPredictions(z, z), lab, pos_weight=3.0).item()
    assert abs(got - 2 * math.log(2) * (15 + 3) / 16) < 1e-12


def test_vertex_loss_peaked_is_zero():
    lab = encode_labels(SentenceRecord(list("abcd"), [make_triplet((1, 1), (3, 3), "NEG")]))
    v = VertexPredictions(Tensor(_peaked(lab.tl)), Tensor(_peaked(lab.br)))
    assert vertex_loss(v, lab).item() < 1e-12


def test_vertex_loss_ignores_padding():
    lab = encode_labels(SentenceRecord(list("abc"), [make_triplet((0, 0), (2, 2), "POS")]))
    rng = np.random.default_rng(2)
    tl, br = rng.normal(size=(3, 3, 2)), rng.normal(size=(3, 3, 2))
    base = vertex_loss(VertexPredictions(Tensor(tl), Tensor(br)), [lab]).item()
    padded = []
    for x in (tl, br):
        big = rng.normal(size=(1, 4, 4, 2)) * 100
        big[0, :3, :3] = x
        padded.append(Tensor(big))
    assert abs(vertex_loss(VertexPredictions(*padded), [lab]).item() - base) < 1e-12


def test_vertex_loss_descends_along_gradient():
    lab = encode_labels(SentenceRecord(list("abcd"), [make_triplet((0, 1), (3, 3), "POS")]))
    store = ParameterStore(3, 1.0)
    tl, br = store.create("tl", (4, 4, 2)), store.create("br", (4, 4, 2))
    loss = vertex_loss(VertexPredictions(tl.value, br.value), lab)
    loss.backward()
    g = [tl.grad.copy(), br.grad.copy()]
    prev = loss.item()
    for step in (1e-3, 2e-3, 4e-3):
        stepped = VertexPredictions(Tensor(tl.data - step * g[0]), Tensor(br.data - step * g[1]))
        cur = vertex_loss(stepped, lab).item()
        assert cur < prev
        prev = cur


# --- candidates ----------------------------------------------------------------


def test_candidate_examples():
    assert enumerate_candidates({(1, 3)}, {(1, 4)}) == [((1, 3), (1, 4))]
    assert enumerate_candidates({(2, 2)}, {(1, 1)}) == []
    assert enumerate_candidates({(0, 0)}, {(0, 0), (2, 2)}) == [((0, 0), (0, 0)), ((0, 0), (2, 2))]


def test_candidate_order_and_cap():
    tls = [(2, 0), (0, 1), (0, 0)]
    brs = [(3, 3), (2, 2)]
    cands = enumerate_candidates(tls, brs)
    assert cands == [((0, 0), (2, 2)), ((0, 0), (3, 3)), ((0, 1), (2, 2)), ((0, 1), (3, 3)),
                     ((2, 0), (2, 2)), ((2, 0), (3, 3))]
    assert enumerate_candidates(tls, brs, max_candidates=4) == cands[:4]


def test_candidate_geometry_always_valid():
    rng = np.random.default_rng(4)
    cells = lambda: {tuple(c) for c in rng.integers(0, 6, size=(8, 2))}  # noqa: E731
    for _ in range(20):
        for (a, b), (c, d) in enumerate_candidates(cells(), cells()):
            assert a <= c and b <= d


# --- rectangle representations ---------------------------------------------------


def test_single_cell_rectangle():
    R = Tensor(np.random.default_rng(5).normal(size=(4, 4, 3)))
    r = rectangle_repr(R, ((2, 1), (2, 1))).data
    assert r.shape == (9,)
    np.testing.assert_array_equal(r, np.tile(R.data[2, 1], 3))


@pytest.mark.parametrize("n", [2, 4, 6])
def test_rectangle_pool_matches_loop_oracle(n):
    rng = np.random.default_rng(n)
    R = rng.normal(size=(n, n, 3))
    for _ in range(10):
        a, c = sorted(rng.integers(0, n, size=2))
        b, d = sorted(rng.integers(0, n, size=2))
        want = np.full(3, -np.inf)
        for i in range(a, c + 1):
            for j in range(b, d + 1):
                want = np.maximum(want, R[i, j])
        got = rectangle_repr(Tensor(R), ((a, b), (c, d))).data
        np.testing.assert_array_equal(got[:3], R[a, b])
        np.testing.assert_array_equal(got[3:6], R[c, d])
        np.testing.assert_array_equal(got[6:], want)


def test_inverted_rectangle_raises():
    with pytest.raises(GeometryError):
        rectangle_repr(Tensor(np.zeros((3, 3, 2))), ((2, 2), (1, 1)))


def test_batched_rectangles():
    R = np.random.default_rng(6).normal(size=(2, 3, 3, 2))
    out = rectangle_reprs(Tensor(R), [(1, (0, 0), (2, 1)), (0, (1, 1), (1, 2))]).data
    np.testing.assert_array_equal(out[0], rectangle_repr(Tensor(R[1]), ((0, 0), (2, 1))).data)
    np.testing.assert_array_equal(out[1], rectangle_repr(Tensor(R[0]), ((1, 1), (1, 2))).data)


# --- sentiment ---------------------------------------------------------------------


def test_head_width_rules():
    assert ASTE_CLASSES[-1] == INVALID and len(ASTE_CLASSES) == 4
    assert AOPE_CLASSES == ("VALID", INVALID)
    with pytest.raises(ConfigError):
        _params(k=3)


def test_sentiment_loss_examples():
    assert abs(sentiment_loss([((0, 0), (0, 0))], Tensor(np.zeros((1, 4))), []).item() - math.log(4)) < 1e-12
    assert sentiment_loss([], None, []).item() == 0.0
    gold = [Region((0, 2), (1, 3), Polarity.NEG)]
    peaked = np.full((1, 4), -PEAK)
    peaked[0, ASTE_CLASSES.index(Polarity.NEG)] = PEAK
    assert sentiment_loss([((0, 2), (1, 3))], Tensor(peaked), gold).item() < 1e-12


def test_partial_vertex_match_is_invalid():
    gold = [Region((0, 2), (1, 3), Polarity.POS)]
    cands = [((0, 2), (1, 3)), ((0, 2), (2, 3)), ((1, 2), (1, 3))]
    inv = ASTE_CLASSES.index(INVALID)
    assert candidate_labels(cands, gold, 4) == [0, inv, inv]
    assert candidate_labels(cands, gold, 2) == [0, 1, 1]


def test_total_loss_is_a_sum():
    assert total_loss(Tensor(0.0), Tensor(0.0)).item() == 0.0
    assert total_loss(Tensor(1.5), Tensor(0.5)).item() == 2.0


def test_total_gradient_is_sum_of_parts():
    rec = SentenceRecord(list("abcd"), [make_triplet((0, 0), (2, 3), "POS")])
    lab = encode_labels(rec)
    store, p = _params(d=3)
    R = store.create("R", (4, 4, 3))
    cands = [((0, 2), (0, 3)), ((0, 0), (1, 3))]

    def parts():
        l1 = vertex_loss(predict_vertices(R.value, p), lab)
        reps = rectangle_reprs(R.value, [(0, *c) for c in cands])
        l2 = sentiment_loss(cands, sentiment_logits(reps, p), lab.regions)
        return l1, l2

    grads = []
    for pick in (0, 1, None):
        store.zero_grad()
        l1, l2 = parts()
        (total_loss(l1, l2) if pick is None else (l1, l2)[pick]).backward()
        grads.append(R.grad.copy())
    np.testing.assert_allclose(grads[2], grads[0] + grads[1], atol=1e-12)


def test_total_loss_grad_check():
    rec = SentenceRecord(list("abcd"), [make_triplet((1, 1), (2, 3), "NEU")])
    lab = encode_labels(rec)
    store, p = _params(d=3, seed=7)
    R = store.create("R", (4, 4, 3))
    cands = [((1, 2), (1, 3)), ((0, 0), (3, 3)), ((1, 2), (2, 3))]

    def f(_):
        l1 = vertex_loss(predict_vertices(R.value, p), lab, pos_weight=2.0)
        reps = rectangle_reprs(R.value, [(0, *c) for c in cands])
        return total_loss(l1, sentiment_loss(cands, sentiment_logits(reps, p), lab.regions))

    assert grad_check(f, store) < 1e-6


# --- extraction ----------------------------------------------------------------------


def test_invalid_candidates_dropped():
    rec = SentenceRecord(list("abcd"), [make_triplet((0, 0), (2, 3), "POS")])
    _, preds, cands, logits = _perfect(rec)
    assert extract_triplets(preds, logits, 4) == rec.triplets
    logits[:] = -PEAK
    logits[:, ASTE_CLASSES.index(INVALID)] = PEAK
    assert extract_triplets(preds, logits, 4) == []


def test_no_vertices_gives_nothing():
    z = np.zeros((3, 3, 2))
    z[..., 0] = 1.0
    v = VertexPredictions(Tensor(z), Tensor(z))
    assert extract_triplets(v, np.zeros((0, 4)), 4) == []


def test_region_emitted_once():
    rec = SentenceRecord(list("abcde"), [make_triplet((0, 1), (3, 4), "NEG")])
    _, preds, cands, logits = _perfect(rec)
    assert len(extract_triplets(preds, logits, 4)) == 1


def test_logit_shape_checked():
    rec = SentenceRecord(list("abcd"), [make_triplet((0, 0), (2, 3), "POS")])
    _, preds, _, _ = _perfect(rec)
    with pytest.raises(ValueError):
        extract_triplets(preds, np.zeros((5, 4)), 4)


def _random_record(rng, n):
    trips, used_tl, used_br = [], set(), set()
    for _ in range(rng.integers(1, 4)):
        a0, a1 = sorted(rng.integers(0, n, size=2))
        o0, o1 = sorted(rng.integers(0, n, size=2))
        if (a0, o0) in used_tl or (a1, o1) in used_br:
            continue
        used_tl.add((a0, o0))
        used_br.add((a1, o1))
        trips.append(make_triplet((a0, a1), (o0, o1), rng.choice(["POS", "NEU", "NEG"])))
    return SentenceRecord([f"w{i}" for i in range(n)], trips)


@pytest.mark.parametrize("seed", range(25))
def test_perfect_logits_round_trip(seed):
    rng = np.random.default_rng(seed)
    rec = _random_record(rng, int(rng.integers(2, 10)))
    _, preds, _, logits = _perfect(rec)
    got = extract_triplets(preds, logits, 4)
    assert set(got) == set(rec.triplets)
    for t in got:
        assert t.aspect.start <= t.aspect.end and t.opinion.start <= t.opinion.end


@pytest.mark.parametrize("seed", range(10))
def test_aope_round_trip_emits_pairs_only(seed):
    rng = np.random.default_rng(100 + seed)
    rec = _random_record(rng, int(rng.integers(2, 10)))
    _, preds, _, logits = _perfect(rec, k=2)
    got = extract_triplets(preds, logits, 2)
    assert all(isinstance(x, Pair) for x in got)
    assert set(got) == {Pair(t.aspect, t.opinion) for t in rec.triplets}
