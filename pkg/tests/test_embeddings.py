import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onconer import tensor as tn
from onconer.corpus import ParseError
from onconer.embeddings import (
    SHAPE_CLASSES, CharLSTMProvider, EmbeddingLayer, EmbeddingProvider, MetaEmbedderParams,
    WordFeatures, compute_word_features, embed_concat, feature_vectors, load_vectors, meta_combine,
    meta_embed, save_vectors, word_shape,
)
from onconer.tensor import ParameterStore, Tensor

from oracles import meta_ref


def provider(name, dim, words, seed=0, oov="zero"):
    rng = np.random.default_rng(seed)
    return EmbeddingProvider(name, dim, words, rng.normal(size=(len(words), dim)), oov)


# ---------------------------------------------------------------------------
# vector files

def test_load_two_word_file(tmp_path):
    p = tmp_path / "v.vec"
    p.write_text("2 3\ncarcinoma 0.1 0.2 0.3\ntumor 1 2 3\n", encoding="utf-8")
    prov = load_vectors(p)
    assert prov.dim == 3
    np.testing.assert_array_equal(prov.lookup("tumor"), [1, 2, 3])
    np.testing.assert_array_equal(prov.lookup("Tumor"), [1, 2, 3])  # lowercase fallback
    np.testing.assert_array_equal(prov.lookup("absent"), np.zeros(3))


def test_load_errors_have_line_numbers(tmp_path):
    p = tmp_path / "bad.vec"
    p.write_text("2 3\ncarcinoma 0.1 0.2 0.3\ntumor 1 2\n", encoding="utf-8")
    with pytest.raises(ParseError) as err:
        load_vectors(p)
    assert err.value.line == 3
    p.write_text("2 3\ncarcinoma 0.1 x 0.3\n", encoding="utf-8")
    with pytest.raises(ParseError):
        load_vectors(p)


def test_duplicate_word_last_wins(tmp_path):
    p = tmp_path / "d.vec"
    p.write_text("2 1\na 1\na 2\n", encoding="utf-8")
    np.testing.assert_array_equal(load_vectors(p).lookup("a"), [2.0])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.text("abcñé", min_size=1, max_size=6), min_size=1, max_size=6, unique=True),
       st.integers(1, 4), st.integers(0, 1000))
def test_vectors_roundtrip(tmp_path_factory, words, dim, seed):
    prov = provider("p", dim, words, seed)
    path = tmp_path_factory.mktemp("vec") / "p.vec"
    save_vectors(prov, path)
    back = load_vectors(path)
    assert back.words == prov.words
    np.testing.assert_array_equal(back.weights.data, prov.weights.data)


def test_trained_unk_row():
    store = ParameterStore()
    prov = EmbeddingProvider.random("w", ["a", "b"], 4, np.random.default_rng(0), store)
    np.testing.assert_array_equal(prov.lookup("zzz"), prov.weights.data[-1])
    out = prov.embed(["a", "zzz"])
    tn.backward(tn.sum(out))
    assert prov.weights.grad[-1].sum() == pytest.approx(4.0)


def test_zero_policy_gives_unk_no_gradient():
    store = ParameterStore()
    prov = EmbeddingProvider("w", 2, ["a"], np.ones((1, 2)), "zero", trainable=True, store=store)
    tn.backward(tn.sum(prov.embed(["a", "b"])))
    np.testing.assert_array_equal(prov.weights.grad[-1], [0.0, 0.0])


# ---------------------------------------------------------------------------
# concatenation

def test_concat_single_provider_is_lookup():
    p = provider("a", 3, ["x", "y"])
    np.testing.assert_array_equal(embed_concat([p], "y"), p.lookup("y"))


def test_concat_dims_add():
    assert embed_concat([provider("a", 3, ["x"]), provider("b", 5, ["x"])], "x").shape == (8,)


@settings(max_examples=30)
@given(st.permutations([0, 1, 2]), st.sampled_from(["x", "y", "unk"]))
def test_concat_permutation_permutes_segments(perm, word):
    provs = [provider(f"p{i}", d, ["x", "y"], seed=i) for i, d in enumerate((2, 3, 4))]
    base = [p.lookup(word) for p in provs]
    out = embed_concat([provs[i] for i in perm], word)
    np.testing.assert_array_equal(out, np.concatenate([base[i] for i in perm]))


def test_char_provider_shapes_and_order():
    store = ParameterStore()
    cp = CharLSTMProvider("c", "abcde", 3, 4, np.random.default_rng(0), store)
    out = cp.embed(["ab", "abcde", "ab", "c"]).data
    assert out.shape == (4, 8)
    np.testing.assert_array_equal(out[0], out[2])
    np.testing.assert_allclose(out[1], cp.lookup("abcde"), atol=1e-15)


def test_char_provider_gradients():
    store = ParameterStore()
    cp = CharLSTMProvider("c", "abc", 2, 2, np.random.default_rng(1), store)
    f = lambda: tn.sum(tn.tanh(cp.embed(["ab", "cab", "a"])))
    assert tn.grad_check_params(f, [t for _, t in store]) < 1e-4


# ---------------------------------------------------------------------------
# word features

def test_word_features_examples():
    assert compute_word_features("carcinoma", {"carcinoma": 16}) == WordFeatures("all-lower", 4, 9)
    assert word_shape("NK2") == "has-digit"
    assert compute_word_features("nunca", {}).freq_bin == 0
    assert word_shape("Carcinoma") == "init-cap"
    assert word_shape("HER") == "all-upper"
    assert word_shape("pT1c") == "has-digit"
    assert word_shape("McDonald") == "mixed"
    assert word_shape("(") == "other"


@given(st.text(max_size=30), st.integers(0, 10**6))
def test_word_features_in_range(token, count):
    f = compute_word_features(token, {token: count})
    assert f.shape_class in SHAPE_CLASSES
    assert 0 <= f.freq_bin < 10 and 0 <= f.length_bin < 10


# ---------------------------------------------------------------------------
# meta-embeddings

def _meta_setup(dims, T=4, seed=0):
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    params = MetaEmbedderParams.create(dims, store, rng, attention_dim=5)
    embedded = [Tensor(rng.normal(size=(T, d))) for d in dims]
    feats = [WordFeatures(SHAPE_CLASSES[i % 6], i % 10, (3 * i) % 10) for i in range(T)]
    return store, params, embedded, feats


def test_meta_matches_loop_reference():
    store, params, embedded, feats = _meta_setup([3, 5, 2])
    out, alpha = meta_combine(params, embedded, feats)
    f = feature_vectors(params, feats).data
    ref_out, ref_alpha = meta_ref([q.data for q in params.Q], [b.data for b in params.b],
                                  params.W.data, params.V.data, f, [e.data for e in embedded])
    np.testing.assert_allclose(out.data, ref_out, atol=1e-13)
    np.testing.assert_allclose(alpha.data, ref_alpha, atol=1e-13)


def test_meta_single_provider():
    store, params, embedded, feats = _meta_setup([4])
    out, alpha = meta_combine(params, embedded, feats)
    np.testing.assert_array_equal(alpha.data, np.ones((4, 1)))
    x = np.tanh(embedded[0].data @ params.Q[0].data.T + params.b[0].data)
    np.testing.assert_allclose(out.data, x, atol=1e-15)


def test_meta_identical_inputs():
    store, params, embedded, feats = _meta_setup([3, 3])
    params.Q[1].data[:] = params.Q[0].data
    params.b[1].data[:] = params.b[0].data
    same = [embedded[0], Tensor(embedded[0].data.copy())]
    out, _ = meta_combine(params, same, feats)
    x = np.tanh(embedded[0].data @ params.Q[0].data.T + params.b[0].data)
    np.testing.assert_allclose(out.data, x, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=4), st.integers(0, 10_000))
def test_meta_attention_is_distribution(dims, seed):
    _, params, embedded, feats = _meta_setup(dims, seed=seed)
    out, alpha = meta_combine(params, embedded, feats)
    a = alpha.data
    np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)
    assert (a > 0).all()
    assert (np.abs(out.data) < 1).all()


def test_meta_gradients():
    store, params, embedded, feats = _meta_setup([3, 4], T=3, seed=5)
    for e in embedded:
        e.requires_grad = True
    f = lambda: tn.sum(tn.tanh(meta_combine(params, embedded, feats)[0]))
    assert tn.grad_check_params(f, [t for _, t in store] + embedded) < 1e-4


def test_meta_embed_single_token():
    store = ParameterStore()
    rng = np.random.default_rng(0)
    provs = [provider("a", 3, ["x"]), provider("b", 2, ["x"], seed=1)]
    params = MetaEmbedderParams.create([3, 2], store, rng)
    assert params.A == 25 and params.E == 3
    assert meta_embed(params, provs, "x", compute_word_features("x", {})).shape == (3,)


def test_embedding_layer_dims():
    store = ParameterStore()
    rng = np.random.default_rng(0)
    provs = [provider("a", 3, ["x"]), provider("b", 5, ["x"])]
    assert EmbeddingLayer(provs, "concat", store, rng).dim == 8
    layer = EmbeddingLayer(provs, "meta", store, rng)
    assert layer.dim == 5 and layer(["x", "y"]).shape == (2, 5)
    with pytest.raises(ValueError):
        EmbeddingLayer(provs, "sum", store, rng)
