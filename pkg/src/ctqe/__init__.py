"""Candidate-token query expansion for lexical, dense and learned-sparse retrieval."""

from ctqe.analysis import AnalyzerConfig, SubwordVocab, analyze, normalize_candidate, subword_split
from ctqe.expansion import (
    CandidateSet,
    CTQEConfig,
    ExpandedQuery,
    Expansion,
    FilterMode,
    KeywordSet,
    build_expanded_query,
    ctqe_lexical_score,
    expand,
    extract_first_position_candidates,
    filter_candidates,
    parse_keywords,
    rank_ctqe,
    retrieve_ctqe,
)
from ctqe.index import BM25Params, Document, InvertedIndex, ScoredDoc, bm25_score, build_index, search
from ctqe.llm import (
    GenerationRequest,
    GenerationTrace,
    HttpProvider,
    MockProvider,
    TokenStep,
    build_q2k_prompt,
    count_output_tokens,
    generate,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyzerConfig",
    "BM25Params",
    "CTQEConfig",
    "CandidateSet",
    "Document",
    "ExpandedQuery",
    "Expansion",
    "FilterMode",
    "GenerationRequest",
    "GenerationTrace",
    "HttpProvider",
    "InvertedIndex",
    "KeywordSet",
    "MockProvider",
    "ScoredDoc",
    "SubwordVocab",
    "TokenStep",
    "analyze",
    "bm25_score",
    "build_expanded_query",
    "build_index",
    "build_q2k_prompt",
    "count_output_tokens",
    "ctqe_lexical_score",
    "expand",
    "extract_first_position_candidates",
    "filter_candidates",
    "generate",
    "normalize_candidate",
    "parse_keywords",
    "rank_ctqe",
    "retrieve_ctqe",
    "search",
    "subword_split",
]
