"""Inverted indexes and BM25 scoring at word and subword granularity."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Literal, Sequence

from ctqe.analysis import DEFAULT_ANALYZER, AnalyzerConfig, SubwordVocab, analyze, subword_split

INDEX_FORMAT = "ctqe-index"
INDEX_VERSION = 1

Granularity = Literal["word", "subword"]


class CorpusError(ValueError):
    """Raised for malformed or inconsistent corpus input."""


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise CorpusError("document id must be non-empty")


@dataclass(frozen=True)
class BM25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self) -> None:
        if self.k1 < 0:
            raise ValueError(f"k1 must be >= 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must lie in [0, 1], got {self.b}")


@dataclass(frozen=True, order=True)
class ScoredDoc:
    doc_id: str
    score: float


@dataclass(frozen=True)
class InvertedIndex:
    """Term -> postings map plus the corpus statistics BM25 needs.

    ``texts`` keeps the raw document text so feedback passages and neural
    encoders can be served from the same file.
    """

    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    granularity: Granularity = "word"
    analyzer: AnalyzerConfig = DEFAULT_ANALYZER
    vocab: SubwordVocab | None = None
    texts: dict[str, str] = field(default_factory=dict)

    @property
    def num_docs(self) -> int:
        return len(self.doc_lengths)

    @cached_property
    def avg_doc_len(self) -> float:
        return sum(self.doc_lengths.values()) / self.num_docs

    @cached_property
    def _tf(self) -> dict[str, dict[str, int]]:
        return {term: dict(plist) for term, plist in self.postings.items()}

    def tf(self, term: str, doc_id: str) -> int:
        return self._tf.get(term, {}).get(doc_id, 0)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def idf(self, term: str) -> float:
        df = self.df(term)
        return math.log(1.0 + (self.num_docs - df + 0.5) / (df + 0.5))

    def tokenize(self, text: str) -> list[str]:
        """Tokenize ``text`` the same way documents were tokenized at build time."""
        if self.granularity == "subword":
            assert self.vocab is not None
            return subword_split(text, self.vocab, self.analyzer)
        return analyze(text, self.analyzer)

    def doc_ids(self) -> list[str]:
        return sorted(self.doc_lengths)

    def to_dict(self) -> dict:
        return {
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "granularity": self.granularity,
            "analyzer": self.analyzer.to_dict(),
            "vocab": sorted(self.vocab.entries) if self.vocab is not None else None,
            "doc_lengths": self.doc_lengths,
            "postings": {t: [[d, tf] for d, tf in plist] for t, plist in self.postings.items()},
            "texts": self.texts,
        }

    @classmethod
    def from_dict(cls, data: dict) -> InvertedIndex:
        if data.get("format") != INDEX_FORMAT:
            raise CorpusError("not a ctqe index file")
        if data.get("version") != INDEX_VERSION:
            raise CorpusError(f"unsupported index version {data.get('version')!r}")
        vocab = data.get("vocab")
        return cls(
            postings={t: [(d, int(tf)) for d, tf in plist] for t, plist in data["postings"].items()},
            doc_lengths={d: int(n) for d, n in data["doc_lengths"].items()},
            granularity=data["granularity"],
            analyzer=AnalyzerConfig.from_dict(data["analyzer"]),
            vocab=SubwordVocab(frozenset(vocab)) if vocab is not None else None,
            texts=dict(data.get("texts", {})),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, ensure_ascii=False, sort_keys=True)

    @classmethod
    def load(cls, path: str | Path) -> InvertedIndex:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def build_index(
    docs: Sequence[Document],
    granularity: Granularity = "word",
    analyzer: AnalyzerConfig = DEFAULT_ANALYZER,
    vocab: SubwordVocab | None = None,
) -> InvertedIndex:
    """Build an index over ``docs``.

    For subword granularity without an explicit ``vocab``, the vocabulary is
    every word type of the corpus plus the base alphabet.
    """
    if not docs:
        raise CorpusError("empty corpus")
    seen: set[str] = set()
    for doc in docs:
        if doc.doc_id in seen:
            raise CorpusError(f"duplicate doc_id: {doc.doc_id}")
        seen.add(doc.doc_id)

    if granularity == "subword" and vocab is None:
        vocab = SubwordVocab(frozenset(w for d in docs for w in analyze(d.text, analyzer)))
    elif granularity == "word":
        vocab = None
    elif granularity != "subword":
        raise ValueError(f"unknown granularity {granularity!r}")

    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    for doc in sorted(docs, key=lambda d: d.doc_id):
        if granularity == "subword":
            tokens = subword_split(doc.text, vocab, analyzer)
        else:
            tokens = analyze(doc.text, analyzer)
        doc_lengths[doc.doc_id] = len(tokens)
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((doc.doc_id, tf))

    return InvertedIndex(
        postings=dict(sorted(postings.items())),
        doc_lengths=doc_lengths,
        granularity=granularity,
        analyzer=analyzer,
        vocab=vocab,
        texts={d.doc_id: d.text for d in sorted(docs, key=lambda d: d.doc_id)},
    )


def read_corpus(path: str | Path) -> list[Document]:
    """Read a JSON-Lines corpus with ``doc_id`` and ``text`` fields."""
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                docs.append(Document(str(obj["doc_id"]), obj["text"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: malformed corpus line ({exc})") from exc
    return docs


def _term_score(index: InvertedIndex, params: BM25Params, term: str, doc_id: str) -> float:
    tf = index.tf(term, doc_id)
    if tf == 0:
        return 0.0
    norm = 1.0 - params.b + params.b * index.doc_lengths[doc_id] / index.avg_doc_len
    return index.idf(term) * tf * (params.k1 + 1.0) / (tf + params.k1 * norm)


def bm25_score(
    index: InvertedIndex, params: BM25Params, query_terms: Iterable[str], doc_id: str
) -> float:
    if doc_id not in index.doc_lengths:
        raise KeyError(f"unknown doc_id: {doc_id}")
    qtf = Counter(query_terms)
    return sum(n * _term_score(index, params, t, doc_id) for t, n in qtf.items())


def rank(scores: dict[str, float], top_k: int | None = None) -> list[ScoredDoc]:
    """Order by descending score, ties by ascending doc_id."""
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    if top_k is not None:
        ordered = ordered[:top_k]
    return [ScoredDoc(d, s) for d, s in ordered]


def matching_docs(index: InvertedIndex, terms: Iterable[str]) -> set[str]:
    docs: set[str] = set()
    for term in set(terms):
        docs.update(d for d, _ in index.postings.get(term, ()))
    return docs


def search(
    index: InvertedIndex, params: BM25Params, query_terms: Iterable[str], top_k: int = 1000
) -> list[ScoredDoc]:
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    query_terms = list(query_terms)
    scores = {d: bm25_score(index, params, query_terms, d) for d in matching_docs(index, query_terms)}
    return rank(scores, top_k)
