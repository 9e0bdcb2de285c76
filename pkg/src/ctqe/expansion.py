"""Keyword parsing, candidate-token harvesting and lexical score interpolation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ctqe.analysis import DEFAULT_ANALYZER, AnalyzerConfig, analyze, normalize_candidate
from ctqe.index import BM25Params, InvertedIndex, ScoredDoc, bm25_score, matching_docs, rank, search
from ctqe.llm import GenerationTrace, count_output_tokens, decode_token

DEFAULT_DELIMITERS = ",;\n"


class NoKeywordsError(ValueError):
    """The generation contained no usable keyword."""


class FilterMode(str, enum.Enum):
    """Candidate harvesting arms: every step, every step deduplicated, or
    deduplicated first positions of each keyword (the full method)."""

    ALL = "all"
    DEDUP = "dedup"
    DEDUP_FIRST_POS = "dedup_first_pos"


@dataclass(frozen=True)
class Keyword:
    text: str
    first_step_index: int


@dataclass(frozen=True)
class KeywordSet:
    keywords: tuple[Keyword, ...] = ()

    def __len__(self) -> int:
        return len(self.keywords)

    def __iter__(self):
        return iter(self.keywords)

    @property
    def texts(self) -> list[str]:
        return [k.text for k in self.keywords]

    @property
    def first_steps(self) -> list[int]:
        """Distinct first-step indices in generation order."""
        return sorted({k.first_step_index for k in self.keywords})


@dataclass(frozen=True)
class CandidateSet:
    tokens: tuple[str, ...] = ()
    mode: FilterMode = FilterMode.DEDUP_FIRST_POS

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class ExpandedQuery:
    original_terms: tuple[str, ...]
    keyword_terms: tuple[str, ...] = ()
    repetition: int = 5

    def __post_init__(self) -> None:
        if self.repetition < 1:
            raise ValueError(f"repetition factor must be >= 1, got {self.repetition}")

    @property
    def terms(self) -> list[str]:
        return list(self.original_terms) * self.repetition + list(self.keyword_terms)


@dataclass(frozen=True)
class CTQEConfig:
    alpha: float = 0.9
    repetition: int = 5
    mode: FilterMode = FilterMode.DEDUP_FIRST_POS
    top_k: int = 1000
    delimiters: str = DEFAULT_DELIMITERS
    # drop candidates that already occur among query or keyword terms
    exclude_known_terms: bool = False
    # score only the union of each channel's top-N documents; None is exact
    channel_depth: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.repetition < 1:
            raise ValueError(f"repetition must be >= 1, got {self.repetition}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        object.__setattr__(self, "mode", FilterMode(self.mode))


def parse_keywords(trace: GenerationTrace, delimiters: str = DEFAULT_DELIMITERS) -> KeywordSet:
    """Split the generated text into keywords and locate each one's first token.

    Raises :class:`NoKeywordsError` when nothing survives normalization.
    """
    chars: list[str] = []
    owner: list[int] = []
    for i, step in enumerate(trace.steps):
        piece = decode_token(step.chosen)
        chars.extend(piece)
        owner.extend([i] * len(piece))

    keywords = []
    start = 0
    for pos in range(len(chars) + 1):
        if pos < len(chars) and chars[pos] not in delimiters:
            continue
        fragment = "".join(chars[start:pos])
        text = " ".join(fragment.split()).lower()
        if text:
            lead = start + (len(fragment) - len(fragment.lstrip()))
            keywords.append(Keyword(text, owner[lead]))
        start = pos + 1

    if not keywords:
        raise NoKeywordsError("no keywords in generation")
    return KeywordSet(tuple(keywords))


def extract_first_position_candidates(
    trace: GenerationTrace, keywords: KeywordSet, mode: FilterMode | str = FilterMode.DEDUP_FIRST_POS
) -> list[str]:
    """Raw alternates at each keyword's first step, or at every step for the ablation arms."""
    mode = FilterMode(mode)
    if mode is FilterMode.DEDUP_FIRST_POS:
        steps = [trace.steps[i] for i in keywords.first_steps]
    else:
        steps = list(trace.steps)
    return [tok for step in steps for tok, _ in step.alternates]


def filter_candidates(
    raw: Iterable[str],
    mode: FilterMode | str = FilterMode.DEDUP_FIRST_POS,
    exclude: Iterable[str] = (),
) -> CandidateSet:
    """Normalize, drop tokens shorter than two characters and (outside ``all``) duplicates."""
    mode = FilterMode(mode)
    excluded = set(exclude)
    seen: set[str] = set()
    kept = []
    for tok in raw:
        norm = normalize_candidate(tok)
        if len(norm) < 2 or norm in excluded:
            continue
        if mode is not FilterMode.ALL:
            if norm in seen:
                continue
            seen.add(norm)
        kept.append(norm)
    return CandidateSet(tuple(kept), mode)


def build_expanded_query(
    query_terms: Sequence[str],
    keywords: KeywordSet,
    repetition: int = 5,
    analyzer: AnalyzerConfig = DEFAULT_ANALYZER,
) -> ExpandedQuery:
    keyword_terms = tuple(t for kw in keywords for t in analyze(kw.text, analyzer))
    return ExpandedQuery(tuple(query_terms), keyword_terms, repetition)


def ctqe_lexical_score(
    word_index: InvertedIndex,
    subword_index: InvertedIndex,
    params: BM25Params,
    eq: ExpandedQuery,
    candidates: CandidateSet,
    alpha: float,
    doc_id: str,
) -> float:
    s_expan = bm25_score(word_index, params, eq.terms, doc_id)
    s_cand = bm25_score(subword_index, params, candidates.tokens, doc_id)
    return alpha * (s_expan / eq.repetition) + (1.0 - alpha) * s_cand


@dataclass(frozen=True)
class Expansion:
    """Everything ``search`` needs about one expanded query.

    ``fallback`` marks generations without keywords; those are ranked by
    plain BM25 on the original query.
    """

    query: str
    expanded: ExpandedQuery
    keywords: KeywordSet = KeywordSet()
    candidates: CandidateSet = CandidateSet()
    output_tokens: int = 0
    fallback: bool = False
    trace: GenerationTrace | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "query_terms": list(self.expanded.original_terms),
            "repetition": self.expanded.repetition,
            "keywords": [
                {"text": k.text, "first_step_index": k.first_step_index} for k in self.keywords
            ],
            "keyword_terms": list(self.expanded.keyword_terms),
            "candidates": list(self.candidates.tokens),
            "mode": self.candidates.mode.value,
            "output_tokens": self.output_tokens,
            "fallback": self.fallback,
            "trace": self.trace.to_dict() if self.trace is not None else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> Expansion:
        trace = data.get("trace")
        return cls(
            query=data["query"],
            expanded=ExpandedQuery(
                tuple(data["query_terms"]), tuple(data["keyword_terms"]), data["repetition"]
            ),
            keywords=KeywordSet(
                tuple(Keyword(k["text"], k["first_step_index"]) for k in data["keywords"])
            ),
            candidates=CandidateSet(tuple(data["candidates"]), FilterMode(data["mode"])),
            output_tokens=data["output_tokens"],
            fallback=data["fallback"],
            trace=GenerationTrace.from_dict(trace) if trace is not None else None,
        )


def expand(
    query: str,
    trace: GenerationTrace,
    cfg: CTQEConfig = CTQEConfig(),
    analyzer: AnalyzerConfig = DEFAULT_ANALYZER,
) -> Expansion:
    query_terms = analyze(query, analyzer)
    try:
        keywords = parse_keywords(trace, cfg.delimiters)
    except NoKeywordsError:
        return Expansion(
            query,
            ExpandedQuery(tuple(query_terms), (), cfg.repetition),
            candidates=CandidateSet((), cfg.mode),
            output_tokens=count_output_tokens(trace),
            fallback=True,
            trace=trace,
        )
    eq = build_expanded_query(query_terms, keywords, cfg.repetition, analyzer)
    raw = extract_first_position_candidates(trace, keywords, cfg.mode)
    exclude = set(eq.original_terms) | set(eq.keyword_terms) if cfg.exclude_known_terms else ()
    candidates = filter_candidates(raw, cfg.mode, exclude)
    return Expansion(query, eq, keywords, candidates, count_output_tokens(trace), False, trace)


def rank_ctqe(
    word_index: InvertedIndex,
    subword_index: InvertedIndex,
    params: BM25Params,
    expansion: Expansion,
    alpha: float = 0.9,
    top_k: int = 1000,
    channel_depth: int | None = None,
) -> list[ScoredDoc]:
    """Rank documents matched by either channel by the interpolated score.

    Documents whose interpolated score is zero are left out, so the alpha
    endpoints reproduce the single-channel rankings exactly.
    """
    if expansion.fallback:
        return search(word_index, params, expansion.expanded.original_terms, top_k)

    eq = expansion.expanded
    cand_terms = expansion.candidates.tokens
    if channel_depth is None:
        pool = matching_docs(word_index, eq.terms) | matching_docs(subword_index, cand_terms)
    else:
        pool = {d.doc_id for d in search(word_index, params, eq.terms, channel_depth)}
        pool |= {d.doc_id for d in search(subword_index, params, cand_terms, channel_depth)}

    scores = {}
    for doc_id in pool:
        score = ctqe_lexical_score(
            word_index, subword_index, params, eq, expansion.candidates, alpha, doc_id
        )
        if score > 0.0:
            scores[doc_id] = score
    return rank(scores, top_k)


def retrieve_ctqe(
    word_index: InvertedIndex,
    subword_index: InvertedIndex,
    params: BM25Params,
    query: str,
    trace: GenerationTrace,
    cfg: CTQEConfig = CTQEConfig(),
) -> list[ScoredDoc]:
    expansion = expand(query, trace, cfg, word_index.analyzer)
    return rank_ctqe(
        word_index, subword_index, params, expansion, cfg.alpha, cfg.top_k, cfg.channel_depth
    )
