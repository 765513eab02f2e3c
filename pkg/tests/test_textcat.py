import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dialectid.textcat import (
    NGramProfile,
    TextCatError,
    TextCatModel,
    build_profile,
    classify_textcat,
    extract_ngrams,
    out_of_place_distance,
    profile_from_counts,
)

from oracles import naive_distance, naive_ngrams, naive_profile

words = st.text(alphabet="abcdeklmnt", min_size=1, max_size=9)
texts = st.lists(words, min_size=1, max_size=15).map(" ".join)


def random_text(rng, n_words=30):
    return " ".join("".join(rng.choice("aeiouknmtlsxz") for _ in range(rng.randint(1, 10)))
                    for _ in range(n_words))


def test_bigrams_of_ab():
    assert extract_ngrams("ab", 2, 2) == {"_a": 1, "ab": 1, "b_": 1}


def test_bigrams_of_nikpia():
    got = extract_ngrams("nikpia", 2, 2)
    assert got == {g: 1 for g in ["_n", "ni", "ik", "kp", "pi", "ia", "a_"]}


def test_empty_text():
    assert extract_ngrams("") == {}
    with pytest.raises(TextCatError):
        build_profile([""])


def test_profile_rank_by_count():
    p = profile_from_counts({"bc": 3, "ab": 5})
    assert p.ranks == {"ab": 0, "bc": 1}


def test_profile_tie_is_lexicographic():
    p = profile_from_counts({"zz": 2, "aa": 2, "mm": 2})
    assert p.ngrams == ("aa", "mm", "zz")


def test_profile_is_truncated():
    rng = random.Random(0)
    p = build_profile([random_text(rng, 2000)])
    assert len(p) == 2000


def test_distance_examples():
    q = profile_from_counts({"ab": 2, "bc": 1})
    r = profile_from_counts({"bc": 2, "ab": 1})
    assert out_of_place_distance(q, r) == 2
    assert out_of_place_distance(q, q) == 0
    miss = profile_from_counts({"qq": 1})
    assert out_of_place_distance(miss, r) == 2000


@settings(max_examples=50, deadline=None)
@given(texts, texts)
def test_distance_nonnegative_and_identity(a, b):
    pa, pb = build_profile([a], 50), build_profile([b], 50)
    assert out_of_place_distance(pa, pa) == 0
    assert out_of_place_distance(pa, pb) >= 0


@settings(max_examples=50, deadline=None)
@given(texts, texts)
def test_absent_ngram_adds_penalty(a, b):
    ref = build_profile([b], 100)
    q = build_profile([a], 100)
    if len(q) == 100:
        return
    extra = NGramProfile("q", q.ngrams + ("#absent#",), q.counts + (0,), profile_size=100)
    assert out_of_place_distance(extra, ref) == out_of_place_distance(q, ref) + 100


@settings(max_examples=50, deadline=None)
@given(st.lists(words, min_size=2, max_size=12), st.randoms(use_true_random=False), texts)
def test_order_invariance(tokens, rnd, other):
    shuffled = tokens[:]
    rnd.shuffle(shuffled)
    ref = build_profile([other], 200)
    a = out_of_place_distance(build_profile([" ".join(tokens)], 200), ref)
    b = out_of_place_distance(build_profile([" ".join(shuffled)], 200), ref)
    assert a == b


def test_matches_naive_reference():
    rng = random.Random(11)
    ref_text = random_text(rng, 300)
    ref_naive = naive_profile([ref_text], 300)
    ref = build_profile([ref_text], 300)
    assert list(ref.ngrams) == ref_naive
    for _ in range(100):
        t = random_text(rng, rng.randint(1, 40))
        assert dict(extract_ngrams(t)) == naive_ngrams(t)
        q = build_profile([t], 300)
        assert list(q.ngrams) == naive_profile([t], 300)
        assert out_of_place_distance(q, ref) == naive_distance(list(q.ngrams), ref_naive, 300)


def test_classify_training_text():
    alpha = {"AA": "aeiklm", "BB": "ounstx", "CC": "eoxzkt"}
    texts = [" ".join("".join(random.Random(i * 7 + j).choice(alpha[lab]) for _ in range(8))
                      for j in range(100)) for i, lab in enumerate(alpha)]
    model = TextCatModel.train(texts, list(alpha), 500)
    for text, lab in zip(texts, alpha):
        ranked = classify_textcat(text, model)
        assert ranked[0][0] == lab
        assert abs(sum(p for _, _, p in ranked) - 1.0) < 1e-9


def test_identical_profiles_tie_by_label_order():
    model = TextCatModel.train(["kali tlakatl", "kali tlakatl"], ["BB", "AA"], 100)
    ranked = classify_textcat("kali", model)
    assert ranked[0][1] == ranked[1][1]
    assert [r[0] for r in ranked] == ["AA", "BB"]


def test_model_needs_two_profiles():
    with pytest.raises(TextCatError):
        TextCatModel.train(["abc"], ["AA"])


def test_save_load_round_trip(tmp_path):
    model = TextCatModel.train(["kali tlakatl", "siwatl atl"], ["AA", "BB"], 50)
    model.save(tmp_path / "m")
    back = TextCatModel.load(tmp_path / "m")
    assert back.labels == model.labels
    for lab in model.labels:
        assert back.profiles[lab] == model.profiles[lab]
    assert classify_textcat("atl", back) == classify_textcat("atl", model)
