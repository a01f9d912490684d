import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onconer import biaffine
from onconer import tensor as tn
from onconer.biaffine import (
    BiaffineParams, SpanCandidate, all_span_scores, candidates_from_scores, crosses, decode_spans,
    enumerate_spans, greedy_order, span_loss, span_representations, span_scores,
)
from onconer.corpus import Document
from onconer.evaluation import ner_prf
from onconer.model import corpus_examples, preset
from onconer.synthetic import nested_fixture
from onconer.tensor import ParameterStore, Tensor

from oracles import best_clash_free, biaffine_ref


def _params(feat=4, d=3, C=2, seed=0):
    store = ParameterStore()
    return store, BiaffineParams.create(feat, d, C, store, np.random.default_rng(seed))


def cand(s, e, score):
    return SpanCandidate.from_scores(s, e, np.array([0.0, score]))


# ---------------------------------------------------------------------------
# representations and scores

def test_zero_ffnn_gives_tanh_bias():
    _, p = _params()
    p.Ws.data[:] = 0
    p.We.data[:] = 0
    p.bs.data[:] = [0.1, -0.2, 0.3]
    p.be.data[:] = [1.0, 2.0, -1.0]
    hs, he = span_representations(np.random.default_rng(1).normal(size=(5, 4)), p)
    assert hs.shape == he.shape == (5, 3)
    np.testing.assert_allclose(hs.data, np.tile(np.tanh(p.bs.data), (5, 1)))
    np.testing.assert_allclose(he.data, np.tile(np.tanh(p.be.data), (5, 1)))


def test_representation_gradients():
    store, p = _params()
    X = Tensor(np.random.default_rng(2).normal(size=(3, 4)), requires_grad=True)
    f = lambda: tn.sum(tn.mul(*span_representations(X, p)))
    assert tn.grad_check_params(f, [p.Ws, p.bs, p.We, p.be, X]) < 1e-4


def test_constant_scores_from_bias():
    _, p = _params()
    p.U.data[:] = 0
    p.Wm.data[:] = 0
    p.bm.data[:] = [0.7, -1.5]
    H = np.random.default_rng(3).normal(size=(4, 3))
    scores = all_span_scores(H, H, p).data
    np.testing.assert_array_equal(scores, np.broadcast_to([0.7, -1.5], (4, 4, 2)))


def test_scalar_biaffine():
    store = ParameterStore()
    p = BiaffineParams(*(store.add(k, v) for k, v in [
        ("Ws", np.zeros((1, 1))), ("bs", np.zeros(1)), ("We", np.zeros((1, 1))), ("be", np.zeros(1)),
        ("U", np.ones((1, 1, 1))), ("Wm", np.zeros((1, 2))), ("bm", np.zeros(1))]))
    assert span_scores(np.array([[2.0]]), np.array([[3.0]]), p, 0, 0).data[0] == 6.0


def test_dense_matches_loops():
    _, p = _params(d=3, C=3, seed=4)
    rng = np.random.default_rng(5)
    hs, he = np.tanh(rng.normal(size=(4, 3))), np.tanh(rng.normal(size=(4, 3)))
    dense = all_span_scores(hs, he, p).data
    np.testing.assert_allclose(dense, biaffine_ref(hs, he, p.U.data, p.Wm.data, p.bm.data), atol=1e-13)
    for s in range(4):
        for e in range(4):
            np.testing.assert_allclose(span_scores(hs, he, p, s, e).data, dense[s, e], atol=1e-13)


def test_score_gradients():
    store, p = _params(d=2, C=2, seed=6)
    X = Tensor(np.random.default_rng(7).normal(size=(3, 4)), requires_grad=True)
    f = lambda: tn.sum(tn.tanh(all_span_scores(*span_representations(X, p), p)))
    assert tn.grad_check_params(f, [t for _, t in store] + [X]) < 1e-4


def test_candidate_order_does_not_change_scores():
    _, p = _params()
    X = np.random.default_rng(8).normal(size=(5, 4))
    scores = all_span_scores(*span_representations(X, p), p).data
    c1 = {(c.start, c.end): c.score for c in candidates_from_scores(scores, 5)}
    spans = enumerate_spans(5, 5)
    np.random.default_rng(0).shuffle(spans)
    for s, e in spans:
        assert SpanCandidate.from_scores(s, e, scores[s, e]).score == c1[(s, e)]


# ---------------------------------------------------------------------------
# decoding

def test_crossing_spans_keep_best():
    out = decode_spans([cand(0, 2, 5.0), cand(1, 3, 4.0)])
    assert [(c.start, c.end) for c in out] == [(0, 2)]


def test_nested_spans_both_kept():
    out = decode_spans([cand(0, 3, 5.0), cand(1, 2, 4.0)])
    assert [(c.start, c.end) for c in out] == [(0, 3), (1, 2)]


def test_nonpositive_candidates_dropped():
    assert decode_spans([cand(0, 0, 0.0), cand(1, 1, -2.0)]) == []


def test_crosses():
    assert crosses((0, 2), (1, 3)) and crosses((1, 3), (0, 2))
    assert not crosses((0, 3), (1, 2)) and not crosses((0, 1), (2, 3)) and not crosses((1, 1), (1, 1))


candidate_sets = st.lists(
    st.tuples(st.integers(0, 5), st.integers(0, 3), st.floats(-2, 5, allow_nan=False)),
    max_size=6,
).map(lambda xs: list({(s, min(5, s + k)): (s, min(5, s + k), sc) for s, k, sc in xs}.values()))


@settings(max_examples=300, deadline=None)
@given(candidate_sets)
def test_decode_matches_exhaustive_subset_search(items):
    cands = [cand(s, e, sc) for s, e, sc in items]
    order = [(c.start, c.end) for c in greedy_order(cands)]
    got = {(c.start, c.end) for c in decode_spans(cands)}
    assert got == best_clash_free(order)


@settings(max_examples=200, deadline=None)
@given(candidate_sets)
def test_decode_output_clash_free_and_positive(items):
    out = decode_spans([cand(s, e, sc) for s, e, sc in items])
    assert all(c.score > 0 for c in out)
    for i, a in enumerate(out):
        for b in out[i + 1:]:
            assert not crosses((a.start, a.end), (b.start, b.end))


# ---------------------------------------------------------------------------
# loss

def test_zero_logits_loss_is_ln2():
    scores = Tensor(np.zeros((3, 3, 2)))
    assert span_loss(scores, [(0, 1)], 3).item() == pytest.approx(math.log(2), abs=1e-15)


def test_separated_logits_loss_vanishes():
    T = 3
    data = np.zeros((T, T, 2))
    data[..., 0] = 50.0
    data[0, 1] = [0.0, 50.0]
    assert span_loss(Tensor(data), [(0, 1)], T).item() < 1e-20


def test_long_gold_span_is_excluded(caplog):
    loss = span_loss(Tensor(np.zeros((5, 5, 2))), [(0, 4)], 2)
    assert loss.item() == pytest.approx(math.log(2))
    assert "exceeds max_span_len" in caplog.text


def test_loss_gradients():
    rng = np.random.default_rng(9)
    scores = Tensor(rng.normal(size=(4, 4, 3)), requires_grad=True)
    f = lambda: span_loss(scores, [(0, 2, 1), (1, 1, 2)], 3)
    assert tn.grad_check_params(f, [scores]) < 1e-4


# ---------------------------------------------------------------------------
# tagger

def test_include_dev_adds_dev_examples(corpus):
    base = biaffine.training_examples(corpus["train"])
    more = biaffine.training_examples(corpus["train"], corpus["dev"], include_dev=True)
    assert len(more) - len(base) == len(corpus_examples(corpus["dev"]))


def test_trained_biaffine(trained_biaffine, corpus):
    model, result, _ = trained_biaffine
    gold = [d.mentions for d in corpus["train"]]
    assert ner_prf(gold, [biaffine.predict(model, d) for d in corpus["train"]]).f1 >= 0.95
    assert biaffine.predict(model, Document("e", "", [])) == []
    fixture = nested_fixture()
    assert {m.span for m in fixture.mentions} <= {m.span for m in biaffine.predict(model, fixture)}


def test_train_with_dev_monitoring(corpus):
    cfg = preset("test-small", "biaffine").with_overrides(epochs=2)
    _, result = biaffine.train(corpus["train"][:2], cfg, dev=corpus["dev"][:1])
    assert all(e.dev_f1 is not None for e in result.history)
    _, result = biaffine.train(corpus["train"][:2], cfg, include_dev=True, dev=corpus["dev"][:1])
    assert all(e.dev_f1 is None for e in result.history)
