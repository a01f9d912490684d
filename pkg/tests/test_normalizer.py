import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onconer.corpus import Mention
from onconer.normalizer import (
    Gazetteer, GazetteerError, NormalizationResult, build_from_counts, build_gazetteer, cascade_report,
    levenshtein, normalize, normalize_mentions,
)
from onconer.synthetic import load_bundled

from oracles import levenshtein_rec


def coded(surface, code, start=0):
    return Mention(start, start + len(surface), surface, code=code)


def test_majority_code_per_surface():
    gaz = build_gazetteer([coded("carcinoma", "8010/3")] * 3 + [coded("carcinoma", "8000/6")])
    assert gaz.exact["carcinoma"] == ("8010/3", 4)
    assert sum(gaz.code_counts.values()) == 4


def test_tie_goes_to_smallest_code():
    gaz = build_gazetteer([coded("tumor", "8000/1"), coded("tumor", "8000/0")])
    assert gaz.exact["tumor"][0] == "8000/0"


def test_single_mention_single_entry():
    gaz = build_gazetteer([coded("sarcoma", "8800/3")])
    assert len(gaz) == 1 and gaz.entries == [("sarcoma", "8800/3")]


def test_uncoded_mention_rejected():
    with pytest.raises(GazetteerError):
        build_gazetteer([Mention(0, 3, "abc")])


def test_global_counts_sum_to_training_mentions():
    train = load_bundled("train")
    mentions = [m for d in train for m in d.mentions]
    gaz = build_gazetteer(mentions)
    assert sum(gaz.code_counts.values()) == len(mentions)
    assert all(n > 0 for n in gaz.code_counts.values())
    for key in gaz.lower:
        assert any(s.lower() == key for s in gaz.exact)


def test_tsv_roundtrip_keeps_minority_codes():
    gaz = build_gazetteer([coded("carcinoma", "8010/3")] * 2 + [coded("carcinoma", "8000/6"),
                                                               coded("Carcinoma", "8000/6")])
    back = Gazetteer.from_tsv(gaz.to_tsv())
    assert back.exact == gaz.exact and back.lower == gaz.lower and back.code_counts == gaz.code_counts
    assert back.code_counts["8000/6"] == 2


@pytest.mark.parametrize("content", ["carcinoma\t8010/3\n", "carcinoma\t8010/3\tx\n", "carcinoma\t8010/3\t0\n"])
def test_tsv_errors(content):
    with pytest.raises(GazetteerError):
        Gazetteer.from_tsv(content)


# ---------------------------------------------------------------------------
# edit distance

def test_levenshtein_examples():
    assert levenshtein("", "abc") == 3
    assert levenshtein("carcinoma", "carcinoma") == 0
    assert levenshtein("kitten", "sitting") == 3


@settings(max_examples=300)
@given(st.text("abcñ", max_size=8), st.text("abcñ", max_size=8))
def test_levenshtein_matches_recursion(a, b):
    assert levenshtein(a, b) == levenshtein_rec(a, b)


@settings(max_examples=200)
@given(st.text("abc", max_size=6), st.text("abc", max_size=6), st.text("abc", max_size=6))
def test_levenshtein_metric_axioms(a, b, c):
    assert levenshtein(a, b) == levenshtein(b, a)
    assert (levenshtein(a, b) == 0) == (a == b)
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


# ---------------------------------------------------------------------------
# cascade

def small_gazetteer():
    return build_gazetteer([coded("carcinoma", "8010/3"), coded("melanoma", "8720/3"), coded("Linfoma", "9590/3")])


def test_cascade_stages():
    gaz = small_gazetteer()
    assert normalize(gaz, "carcinoma") == NormalizationResult("8010/3", "exact", 0)
    assert normalize(gaz, "Carcinoma") == NormalizationResult("8010/3", "lower", 0)
    assert normalize(gaz, "LINFOMA") == NormalizationResult("9590/3", "lower", 0)
    assert normalize(gaz, "carcinomaa") == NormalizationResult("8010/3", "levenshtein", 1)
    assert normalize(gaz, "Carcinomaa", max_stage=2) is None


def test_distance_ties_prefer_frequent_code():
    gaz = build_gazetteer([coded("abc", "2"), coded("abd", "1")] + [coded("zzz", "2")] * 3)
    assert normalize(gaz, "abx") == NormalizationResult("2", "levenshtein", 1)
    gaz = build_gazetteer([coded("abc", "2"), coded("abd", "1")])
    assert normalize(gaz, "abx").code == "1"


def test_result_contract():
    with pytest.raises(ValueError):
        NormalizationResult("1", "exact", 2)
    with pytest.raises(ValueError):
        NormalizationResult("1", "fuzzy", 0)


def test_empty_gazetteer():
    with pytest.raises(GazetteerError):
        normalize(Gazetteer(), "x")


def test_known_surfaces_keep_their_code():
    train = [m for d in load_bundled("train") for m in d.mentions]
    gaz = build_gazetteer(train)
    for surface, (code, _) in gaz.exact.items():
        for stage in (1, 2, 3):
            assert normalize(gaz, surface, max_stage=stage).code == code


@settings(max_examples=50)
@given(st.text("abcdeñ ", min_size=1, max_size=10))
def test_normalize_is_deterministic(surface):
    gaz = small_gazetteer()
    assert normalize(gaz, surface) == normalize(gaz, surface)


def test_cascade_coverage_monotone_on_held_out_split():
    gaz = build_gazetteer(m for d in load_bundled("train") for m in d.mentions)
    gold = [m for d in load_bundled("dev") for m in d.mentions]
    report = cascade_report(gaz, gold)
    assigned = [r.correct + r.false for r in report]
    assert assigned == sorted(assigned)
    assert report[-1].unmatched == 0
    assert report[0].unmatched > report[-1].unmatched
    assert all(r.correct + r.false + r.unmatched == len(gold) for r in report)


def test_normalize_mentions_sets_codes():
    out = normalize_mentions(small_gazetteer(), [Mention(0, 8, "Melanoma")])
    assert out[0].code == "8720/3"


def test_random_queries_always_resolve():
    gaz = build_gazetteer([coded("carcinoma", "8010/3"), coded("sarcoma", "8800/3")])
    rnd = random.Random(0)
    for _ in range(100):
        s = "".join(rnd.choice("acinorms") for _ in range(rnd.randint(1, 12)))
        assert normalize(gaz, s).code in {"8010/3", "8800/3"}
