"""Embedder, keyword filter, lexical index and the web stub."""
from __future__ import annotations

import hashlib
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anchorwork.retrieval import (
    Document,
    Evidence,
    HashingEmbedder,
    KeywordFilter,
    KeywordProfile,
    LexicalIndex,
    WebStub,
    filter_corpus,
    keep_document,
)


def bucket(token: str, dim: int = 256) -> int:
    # independent re-derivation of the feature-hashing bucket
    return int.from_bytes(hashlib.blake2b(token.encode(), digest_size=8).digest(), "big") % dim


def fillers(n: int, avoid: set[int]) -> list[str]:
    """``n`` filler tokens whose buckets are distinct and outside ``avoid``."""
    out, used = [], set(avoid)
    i = 0
    while len(out) < n:
        tok = f"filler{i}"
        b = bucket(tok)
        if b not in used:
            used.add(b)
            out.append(tok)
        i += 1
    return out


POS, NEG = ["alpha", "beta", "gamma"], ["omega", "sigma"]
assert len({bucket(t) for t in POS + NEG}) == 5
PROFILE = KeywordProfile(POS, NEG)


def test_embed_contract():
    emb = HashingEmbedder()
    v = emb.embed("Watterson estimator theta")
    assert v.shape == (256,)
    assert abs(np.linalg.norm(v) - 1.0) <= 1e-9
    assert np.array_equal(v, emb.embed("Watterson estimator theta"))
    with pytest.raises(ValueError):
        emb.embed("")
    with pytest.raises(ValueError):
        emb.embed("  ...  ")


def test_embed_bag_of_tokens_by_hand():
    emb = HashingEmbedder()
    expected = np.zeros(256)
    expected[bucket("aa")] += 1
    expected[bucket("bb")] += 1
    expected /= np.sqrt((expected**2).sum())
    assert np.allclose(emb.embed("aa bb"), expected, atol=1e-12)
    assert np.array_equal(emb.embed("aa bb"), emb.embed("bb aa"))
    assert np.array_equal(emb.embed("AA, bb!"), emb.embed("aa bb"))


def test_keep_document_self_match_examples():
    pos_doc = Document("p", "", " ".join(POS))
    neg_doc = Document("n", "", " ".join(NEG))
    f = KeywordFilter(PROFILE)
    cos_pos, cos_neg = f.cosines(pos_doc)
    assert cos_pos == pytest.approx(1.0, abs=1e-12) and cos_neg == 0.0
    assert keep_document(pos_doc, PROFILE)
    assert f.cosines(neg_doc)[1] == pytest.approx(1.0, abs=1e-12)
    assert not keep_document(neg_doc, PROFILE)


def test_keep_document_rejects_cos_pos_015():
    # single-keyword profile: cos_pos = count(alpha) / ||counts||; 3 / sqrt(9 + 19^2 + 5^2 + 2^2 + 1^2) = 3/20
    profile = KeywordProfile(["alpha"], ["omega"])
    toks = fillers(4, {bucket("alpha"), bucket("omega")})
    counts = {"alpha": 3, toks[0]: 19, toks[1]: 5, toks[2]: 2, toks[3]: 1}
    doc = Document("d", "", " ".join(t for t, c in counts.items() for _ in range(c)))
    norm = math.sqrt(sum(c * c for c in counts.values()))
    assert 3 / norm == pytest.approx(0.15, abs=1e-15)
    cos_pos, cos_neg = KeywordFilter(profile).cosines(doc)
    assert cos_pos == pytest.approx(0.15, abs=1e-12) and cos_neg == 0.0
    assert not keep_document(doc, profile)


def test_filter_corpus_examples():
    assert filter_corpus([], PROFILE) == []
    f1, f2 = fillers(2, {bucket(t) for t in POS + NEG})
    docs = [
        Document("d1", "", "alpha beta gamma"),
        Document("d2", "", "omega sigma"),
        Document("d3", "", f"alpha {f1}"),
        Document("d4", "", f"{f1} {f2}"),
    ]
    kept = filter_corpus(docs, PROFILE)
    assert [d.id for d in kept] == ["d1", "d3"]
    assert all(d.kept for d in kept)
    all_pos = [Document(f"x{i}", "", "alpha gamma") for i in range(3)]
    assert [d.id for d in filter_corpus(all_pos, PROFILE)] == ["x0", "x1", "x2"]


def test_filter_uses_title_and_body_prefix():
    f1 = fillers(1, {bucket(t) for t in POS + NEG})[0]
    # 260 fillers fill the first 2080 chars; the keywords only appear after that
    late = Document("late", "", (f1 + " ") * 260 + "alpha beta gamma " * 200)
    assert not KeywordFilter(PROFILE).keep(late)
    assert KeywordFilter(PROFILE, prefix_chars=10_000).keep(late)
    assert KeywordFilter(PROFILE).keep(Document("t", "alpha beta", f1))


def test_default_profile_loads():
    p = KeywordProfile.default()
    assert p.positive and p.negative
    with pytest.raises(ValueError):
        KeywordProfile([], ["x"])


CORPUS = [
    Document("d1", "", "watterson estimator theta four"),
    Document("d2", "", "effective population size"),
    Document("d3", "", "unrelated cooking text"),
]


def test_search_examples():
    index = LexicalIndex.build(CORPUS)
    ev = index.search_top_k("watterson estimator", 1)
    assert [s.doc_id for s in ev.snippets] == ["d1"] and ev.truncated
    everything = index.search_top_k("watterson estimator", 10)
    assert [s.doc_id for s in everything.snippets] == ["d1", "d2", "d3"]
    assert not everything.truncated
    with pytest.raises(ValueError):
        index.search_top_k("", 3)
    assert LexicalIndex.build([]).search_top_k("anything", 3).snippets == ()


def test_search_score_by_hand():
    index = LexicalIndex.build(CORPUS)
    top = index.search_top_k("watterson estimator", 1).snippets[0]
    # two matching terms, each appearing in 1 of 3 chunks: 2 * ln(1 + 3/1)
    assert top.score == pytest.approx(2 * math.log(4), abs=1e-12)


def test_chunking_and_round_trip(tmp_path):
    doc = Document("long", "", "x" * 1100)
    index = LexicalIndex.build([doc], chunk_size=512)
    assert [(c.offset, len(c.text)) for c in index.chunks] == [(0, 512), (512, 512), (1024, 76)]
    path = tmp_path / "index.json"
    index.save(path)
    again = LexicalIndex.load(path)
    assert again.chunks == index.chunks and again.chunk_size == 512
    with pytest.raises(ValueError):
        LexicalIndex.from_dict({"format": "other", "version": 1, "chunks": [], "chunk_size": 1})
    with pytest.raises(ValueError):
        LexicalIndex.build([doc, doc])


words = st.sampled_from(["theta", "mu", "size", "watterson", "drift", "locus", "allele", "rate"])
bodies = st.lists(words, min_size=1, max_size=12).map(" ".join)


@settings(max_examples=60, deadline=None)
@given(st.lists(bodies, min_size=1, max_size=8), st.lists(words, min_size=1, max_size=3), st.integers(1, 6), st.randoms())
def test_search_properties(texts, query_words, k, rnd):
    docs = [Document(f"doc{i:02d}", "", t) for i, t in enumerate(texts)]
    query = " ".join(query_words)
    ev = LexicalIndex.build(docs).search_top_k(query, k)
    assert len(ev.snippets) <= k
    scores = [s.score for s in ev.snippets]
    assert scores == sorted(scores, reverse=True)
    shuffled = list(docs)
    rnd.shuffle(shuffled)
    assert LexicalIndex.build(shuffled).search_top_k(query, k) == ev
    # oracle: brute-force tf-idf ranking with (doc_id, offset) tie-break
    toks = [Counter(t.split()) for t in texts]
    n = len(texts)
    df = Counter(w for tf in toks for w in tf)
    terms = set(query_words)
    ranked = sorted(
        ((sum(tf[w] * math.log(1 + n / df[w]) for w in terms if df[w]), f"doc{i:02d}") for i, tf in enumerate(toks)),
        key=lambda sd: (-sd[0], sd[1]),
    )
    assert [s.doc_id for s in ev.snippets] == [d for _, d in ranked[:k]]


def test_evidence_round_trip_and_render():
    ev = LexicalIndex.build(CORPUS).search_top_k("population", 2)
    assert Evidence.from_dict(ev.to_dict()) == ev
    assert ev.render().startswith("effective population size")


def test_web_stub():
    index = LexicalIndex.build(CORPUS)
    web = WebStub(index, canned={"watterson": "theta = 4 Ne mu"})
    assert web.web_search("watterson").render() == "theta = 4 Ne mu"
    assert web.web_search("population").snippets[0].doc_id == "d2"
    assert web.web_parse("d3", "anything") == "unrelated cooking text"
    assert web.web_parse("https://example.org/x", "q") == "no content"
    assert WebStub().web_search("x").snippets == ()
