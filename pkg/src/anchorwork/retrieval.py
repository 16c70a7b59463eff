"""Corpus filtering, a hashing embedder and a deterministic lexical index."""
from __future__ import annotations

import hashlib
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, replace
from importlib import resources
from typing import Iterable, Optional, Protocol, Sequence

import numpy as np

INDEX_FORMAT = "anchorwork-lexical-index"
INDEX_VERSION = 1

_TOKEN = re.compile(r"\w+")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    body: str
    kept: Optional[bool] = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("document id must be non-empty")
        if not self.body:
            raise ValueError(f"document {self.id!r} has an empty body")

    def to_dict(self) -> dict:
        d = {"id": self.id, "title": self.title, "body": self.body}
        if self.kept is not None:
            d["kept"] = self.kept
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Document":
        return cls(str(d["id"]), str(d.get("title", "")), str(d["body"]), d.get("kept"))


@dataclass(frozen=True)
class KeywordProfile:
    positive: tuple[str, ...]
    negative: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "positive", tuple(self.positive))
        object.__setattr__(self, "negative", tuple(self.negative))
        if not self.positive or not self.negative:
            raise ValueError("keyword profile needs non-empty positive and negative lists")

    @classmethod
    def default(cls) -> "KeywordProfile":
        raw = (resources.files("anchorwork") / "data" / "keywords.json").read_text(encoding="utf-8")
        d = json.loads(raw)
        return cls(d["positive"], d["negative"])


@dataclass(frozen=True)
class Snippet:
    doc_id: str
    offset: int
    text: str
    score: float

    def to_dict(self) -> dict:
        return {"doc_id": self.doc_id, "offset": self.offset, "text": self.text, "score": self.score}


@dataclass(frozen=True)
class Evidence:
    query: str
    snippets: tuple[Snippet, ...] = ()
    truncated: bool = False

    def render(self) -> str:
        return "\n".join(s.text for s in self.snippets)

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "snippets": [s.to_dict() for s in self.snippets],
            "truncated": self.truncated,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Evidence":
        return cls(d["query"], tuple(Snippet(**s) for s in d["snippets"]), d.get("truncated", False))


class Embedder(Protocol):
    def embed(self, text: str) -> np.ndarray: ...


class HashingEmbedder:
    """Bag-of-tokens feature hashing into ``dim`` buckets, L2-normalised.

    Buckets come from blake2b, so vectors are stable across processes
    (unlike the builtin ``hash``).
    """

    def __init__(self, dim: int = 256):
        self.dim = dim

    def bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.dim

    def embed(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            raise ValueError("cannot embed empty text")
        vec = np.zeros(self.dim)
        for tok in tokens:
            vec[self.bucket(tok)] += 1.0
        return vec / np.linalg.norm(vec)


def centroid(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Normalised mean of unit vectors."""
    mean = np.mean(np.stack(vectors), axis=0)
    return mean / np.linalg.norm(mean)


class KeywordFilter:
    """Keeps documents close to the positive keywords and far from the negative ones."""

    def __init__(
        self,
        profile: KeywordProfile,
        embedder: Optional[Embedder] = None,
        pos_threshold: float = 0.2,
        neg_threshold: float = 0.1,
        prefix_chars: int = 2000,
    ):
        self.profile = profile
        self.embedder = embedder or HashingEmbedder()
        self.pos_threshold = pos_threshold
        self.neg_threshold = neg_threshold
        self.prefix_chars = prefix_chars
        self.positive = centroid([self.embedder.embed(k) for k in profile.positive])
        self.negative = centroid([self.embedder.embed(k) for k in profile.negative])

    def doc_text(self, doc: Document) -> str:
        return f"{doc.title}\n{doc.body[: self.prefix_chars]}"

    def cosines(self, doc: Document) -> tuple[float, float]:
        v = self.embedder.embed(self.doc_text(doc))
        return float(v @ self.positive), float(v @ self.negative)

    def keep(self, doc: Document) -> bool:
        cos_pos, cos_neg = self.cosines(doc)
        return cos_pos > self.pos_threshold and cos_neg < self.neg_threshold


def keep_document(doc: Document, profile: KeywordProfile, **kwargs) -> bool:
    return KeywordFilter(profile, **kwargs).keep(doc)


def filter_corpus(docs: Iterable[Document], profile: KeywordProfile, **kwargs) -> list[Document]:
    """Return the kept documents in input order, each with ``kept=True``."""
    filt = KeywordFilter(profile, **kwargs)
    return [replace(d, kept=True) for d in docs if filt.keep(d)]


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    offset: int
    text: str


def chunk_document(doc: Document, size: int) -> list[Chunk]:
    return [Chunk(doc.id, off, doc.body[off : off + size]) for off in range(0, len(doc.body), size)]


class LexicalIndex:
    """TF-IDF overlap scorer over fixed-size character chunks.

    score(q, c) = sum over distinct query terms t of tf(t, c) * ln(1 + N / df(t)).
    Ties are broken by ascending doc id, then chunk offset, so results never
    depend on insertion order.
    """

    def __init__(self, chunks: Sequence[Chunk], chunk_size: int = 512):
        self.chunk_size = chunk_size
        self.chunks = sorted(chunks, key=lambda c: (c.doc_id, c.offset))
        self._tf = [Counter(tokenize(c.text)) for c in self.chunks]
        df: Counter = Counter()
        for tf in self._tf:
            df.update(tf.keys())
        n = len(self.chunks)
        self._idf = {t: math.log(1.0 + n / d) for t, d in df.items()}

    @classmethod
    def build(cls, docs: Iterable[Document], chunk_size: int = 512) -> "LexicalIndex":
        docs = list(docs)
        ids = [d.id for d in docs]
        if len(set(ids)) != len(ids):
            raise ValueError("document ids must be unique")
        chunks = [c for d in docs for c in chunk_document(d, chunk_size)]
        return cls(chunks, chunk_size)

    def __len__(self) -> int:
        return len(self.chunks)

    def score(self, terms: Iterable[str], i: int) -> float:
        tf = self._tf[i]
        return sum(tf[t] * self._idf.get(t, 0.0) for t in terms)

    def search_top_k(self, query: str, k: int) -> Evidence:
        if not query or not query.strip():
            raise ValueError("query must be non-empty")
        if k < 1:
            raise ValueError("k must be >= 1")
        terms = set(tokenize(query))
        scored = [(self.score(terms, i), i) for i in range(len(self.chunks))]
        # chunks are pre-sorted by (doc_id, offset), so index order is the tie-break
        scored.sort(key=lambda si: (-si[0], si[1]))
        top = [
            Snippet(self.chunks[i].doc_id, self.chunks[i].offset, self.chunks[i].text, s)
            for s, i in scored[:k]
        ]
        return Evidence(query, tuple(top), truncated=len(scored) > k)

    def get_chunk(self, doc_id: str) -> Optional[Chunk]:
        for c in self.chunks:
            if c.doc_id == doc_id:
                return c
        return None

    def to_dict(self) -> dict:
        return {
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "chunk_size": self.chunk_size,
            "chunks": [{"doc_id": c.doc_id, "offset": c.offset, "text": c.text} for c in self.chunks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LexicalIndex":
        if d.get("format") != INDEX_FORMAT:
            raise ValueError("not an anchorwork index artifact")
        if d.get("version") != INDEX_VERSION:
            raise ValueError(f"unsupported index version {d.get('version')!r}")
        return cls([Chunk(**c) for c in d["chunks"]], d["chunk_size"])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, ensure_ascii=False)

    @classmethod
    def load(cls, path) -> "LexicalIndex":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


class WebStub:
    """Offline stand-in for the web tools.

    ``web_search`` answers from an optional index (or a fixed mapping of
    keywords to text); ``web_parse`` returns the first chunk of the indexed
    document whose id equals the link, else ``"no content"``.
    """

    def __init__(self, index: Optional[LexicalIndex] = None, canned: Optional[dict[str, str]] = None, top_k: int = 3):
        self.index = index
        self.canned = dict(canned or {})
        self.top_k = top_k

    def web_search(self, keywords: str) -> Evidence:
        if keywords in self.canned:
            return Evidence(keywords, (Snippet("web", 0, self.canned[keywords], 1.0),))
        if self.index is None or not keywords.strip():
            return Evidence(keywords)
        return self.index.search_top_k(keywords, self.top_k)

    def web_parse(self, link: str, query: str) -> str:
        if self.index is not None:
            chunk = self.index.get_chunk(link)
            if chunk is not None:
                return chunk.text
        return "no content"
