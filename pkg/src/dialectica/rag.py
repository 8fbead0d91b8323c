"""Chunked document stores (shared and per-agent) with exact cosine search."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .common import append_jsonl, read_jsonl
from .providers import EvidenceItem

CHUNK_TOKENS = 512
CHUNK_OVERLAP = 64

_TOKEN = re.compile(r"\S+")


def chunk_spans(n_tokens: int, size: int = CHUNK_TOKENS, overlap: int = CHUNK_OVERLAP) -> list[tuple[int, int]]:
    """Half-open token spans covering ``range(n_tokens)``."""
    if overlap >= size:
        raise ValueError("overlap must be smaller than chunk size")
    if n_tokens <= 0:
        return []
    spans, start, step = [], 0, size - overlap
    while True:
        end = min(start + size, n_tokens)
        spans.append((start, end))
        if end == n_tokens:
            return spans
        start += step


@dataclass(frozen=True)
class DocumentChunk:
    doc_id: str
    chunk_index: int
    text: str
    embedding: np.ndarray
    namespace: str
    tags: tuple[str, ...] = ()
    provenance: str = ""
    timestamp: float = 0.0


def _check_namespace(ns: str) -> str:
    if ns == "shared" or (ns.startswith("agent:") and len(ns) > len("agent:")):
        return ns
    raise ValueError(f"namespace must be 'shared' or 'agent:<name>', got {ns!r}")


def _ns_dir(ns: str) -> str:
    return ns.replace(":", "-")


class DocumentStore:
    def __init__(self, root: str | Path | None, embedder, clock=None):
        self.root = Path(root) if root is not None else None
        self.embedder = embedder
        self.clock = clock
        self.chunks: list[DocumentChunk] = []
        if self.root is not None and self.root.exists():
            for path in sorted(self.root.glob("*/chunks.jsonl")):
                for rec in read_jsonl(path):
                    self.chunks.append(DocumentChunk(
                        rec["doc_id"], rec["chunk_index"], rec["text"], np.asarray(rec["embedding"]),
                        rec["namespace"], tuple(rec["tags"]), rec["provenance"], rec["timestamp"]))

    def ingest_document(self, doc: str, namespace: str = "shared", tags=(), doc_id: str | None = None,
                        source: str = "") -> int:
        if not doc or not doc.strip():
            raise ValueError("document must be nonempty")
        _check_namespace(namespace)
        tokens = _TOKEN.findall(doc)
        if doc_id is None:
            doc_id = f"doc{len({c.doc_id for c in self.chunks}):05d}"
        ts = self.clock.now() if self.clock is not None else 0.0
        spans = chunk_spans(len(tokens))
        for k, (a, b) in enumerate(spans):
            text = " ".join(tokens[a:b])
            chunk = DocumentChunk(doc_id, k, text, self.embedder.embed(text), namespace, tuple(tags),
                                  f"{source or doc_id}#tokens[{a}:{b}]", ts)
            self.chunks.append(chunk)
            if self.root is not None:
                append_jsonl(self.root / _ns_dir(namespace) / "chunks.jsonl", {
                    "doc_id": doc_id, "chunk_index": k, "text": text,
                    "embedding": chunk.embedding.tolist(), "namespace": namespace, "tags": list(tags),
                    "provenance": chunk.provenance, "timestamp": ts,
                })
        return len(spans)

    def rag_query(self, query: str, namespaces=("shared",), n: int = 5) -> list[tuple[DocumentChunk, float]]:
        """Top-``n`` chunks by cosine over the requested namespaces (ties: doc id, chunk index)."""
        if n < 1:
            raise ValueError("n must be >= 1")
        wanted = {_check_namespace(ns) for ns in namespaces}
        pool = [c for c in self.chunks if c.namespace in wanted]
        if not pool:
            return []
        q = self.embedder.embed(query)
        sims = np.array([float(q @ c.embedding) for c in pool])
        order = sorted(range(len(pool)), key=lambda k: (-sims[k], pool[k].doc_id, pool[k].chunk_index))
        return [(pool[k], float(sims[k])) for k in order[:n]]

    def evidence(self, query: str, namespaces=("shared",), n: int = 3, now: float = 0.0) -> list[EvidenceItem]:
        out = []
        for chunk, _ in self.rag_query(query, namespaces, n):
            source = "rag_shared" if chunk.namespace == "shared" else "rag_private"
            out.append(EvidenceItem(source, query, chunk.text, now,
                                    f"{chunk.namespace}:{chunk.doc_id}:{chunk.chunk_index}:{chunk.provenance}"))
        return out
