import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dialectica.providers import HashingEmbedder
from dialectica.rag import DocumentStore, chunk_spans


def spans_oracle(n, size=512, overlap=64):
    """Start positions every size - overlap tokens until one window reaches the end."""
    out = []
    start = 0
    while True:
        out.append((start, min(start + size, n)))
        if start + size >= n:
            return out
        start += size - overlap


def test_thousand_token_document():
    assert chunk_spans(1000) == [(0, 512), (448, 960), (896, 1000)]


def test_short_document():
    assert chunk_spans(10) == [(0, 10)]
    assert chunk_spans(512) == [(0, 512)]
    assert chunk_spans(0) == []


@given(st.integers(1, 5000), st.integers(2, 600), st.data())
def test_spans_match_oracle_and_cover(n, size, data):
    overlap = data.draw(st.integers(0, size - 1))
    spans = chunk_spans(n, size, overlap)
    assert spans == spans_oracle(n, size, overlap)
    covered = set()
    for a, b in spans:
        covered.update(range(a, b))
    assert covered == set(range(n))


def test_bad_overlap():
    with pytest.raises(ValueError):
        chunk_spans(10, 5, 5)


def words(n, seed):
    rng = np.random.default_rng(seed)
    vocab = [f"w{k}" for k in range(300)]
    return " ".join(rng.choice(vocab, n))


def test_ingest_and_query_identity(tmp_path):
    s = DocumentStore(tmp_path, HashingEmbedder())
    assert s.ingest_document(words(1000, 0), source="report.txt") == 3
    target = s.chunks[1]
    top, sim = s.rag_query(target.text, n=1)[0]
    assert top.chunk_index == 1 and sim == pytest.approx(1.0)
    assert target.provenance == "report.txt#tokens[448:960]"


def test_ranking_matches_brute_force(tmp_path):
    e = HashingEmbedder(dim=64)
    s = DocumentStore(None, e)
    for k in range(6):
        s.ingest_document(words(700, k))
    q = words(40, 99)
    qv = e.embed(q)
    sims = sorted(((-float(qv @ c.embedding), c.doc_id, c.chunk_index) for c in s.chunks))
    got = [(c.doc_id, c.chunk_index) for c, _ in s.rag_query(q, n=len(s.chunks))]
    assert got == [(d, i) for _, d, i in sims]


def test_namespace_isolation(tmp_path):
    s = DocumentStore(tmp_path, HashingEmbedder())
    s.ingest_document("secret agent notes on carbon", namespace="agent:alice")
    s.ingest_document("public report on forests", namespace="shared")
    shared = s.rag_query("carbon", namespaces=("shared",))
    assert all(c.namespace == "shared" for c, _ in shared)
    both = s.rag_query("carbon", namespaces=("shared", "agent:alice"))
    assert both[0][0].namespace == "agent:alice"
    ev = s.evidence("carbon", namespaces=("shared", "agent:alice"))
    assert {e.source for e in ev} == {"rag_private", "rag_shared"}


def test_persistence(tmp_path):
    s = DocumentStore(tmp_path, HashingEmbedder())
    s.ingest_document(words(600, 1), namespace="agent:bob")
    again = DocumentStore(tmp_path, HashingEmbedder())
    assert len(again.chunks) == 2 and again.chunks[0].namespace == "agent:bob"


def test_validation(tmp_path):
    s = DocumentStore(None, HashingEmbedder())
    with pytest.raises(ValueError):
        s.ingest_document("   ")
    with pytest.raises(ValueError):
        s.ingest_document("x", namespace="private")
    with pytest.raises(ValueError):
        s.rag_query("x", n=0)
    assert s.rag_query("x") == []
