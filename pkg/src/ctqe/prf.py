"""Two-stage retrieval: BM25 feedback passages condition the keyword generation."""

from __future__ import annotations

from dataclasses import dataclass

from ctqe.analysis import DEFAULT_ANALYZER, analyze
from ctqe.expansion import CTQEConfig, Expansion, expand, rank_ctqe
from ctqe.index import BM25Params, InvertedIndex, ScoredDoc, search
from ctqe.llm import GenerationRequest, Provider, build_q2k_prompt, generate


@dataclass(frozen=True)
class PrfConfig:
    depth: int = 10
    max_passage_tokens: int = 128

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.max_passage_tokens < 1:
            raise ValueError(f"max_passage_tokens must be >= 1, got {self.max_passage_tokens}")


@dataclass(frozen=True)
class GenerationConfig:
    max_tokens: int = 16
    temperature: float = 0.0
    top_k_alternates: int = 20

    def request(self, prompt: str) -> GenerationRequest:
        return GenerationRequest(prompt, self.max_tokens, self.temperature, self.top_k_alternates)


def prf_context(
    word_index: InvertedIndex, params: BM25Params, query: str, cfg: PrfConfig = PrfConfig()
) -> list[str]:
    """Top-ranked documents for the raw query, each cut to its first analyzer tokens."""
    hits = search(word_index, params, analyze(query, word_index.analyzer), cfg.depth)
    return [
        " ".join(analyze(word_index.texts[h.doc_id], word_index.analyzer)[: cfg.max_passage_tokens])
        for h in hits
    ]


def expand_query(
    query: str,
    provider: Provider,
    gen_cfg: GenerationConfig = GenerationConfig(),
    ctqe_cfg: CTQEConfig = CTQEConfig(),
    word_index: InvertedIndex | None = None,
    params: BM25Params = BM25Params(),
    prf_cfg: PrfConfig | None = None,
) -> Expansion:
    """Generate keywords for ``query`` and turn them into an :class:`Expansion`.

    Passing ``prf_cfg`` (with ``word_index``) conditions the prompt on the
    first-stage BM25 passages.
    """
    passages = None
    if prf_cfg is not None:
        if word_index is None:
            raise ValueError("feedback expansion needs the word index")
        passages = prf_context(word_index, params, query, prf_cfg)
    trace = generate(gen_cfg.request(build_q2k_prompt(query, passages)), provider)
    analyzer = word_index.analyzer if word_index is not None else DEFAULT_ANALYZER
    return expand(query, trace, ctqe_cfg, analyzer)


def retrieve_ctqe_prf(
    word_index: InvertedIndex,
    subword_index: InvertedIndex,
    params: BM25Params,
    query: str,
    provider: Provider,
    gen_cfg: GenerationConfig = GenerationConfig(),
    ctqe_cfg: CTQEConfig = CTQEConfig(),
    prf_cfg: PrfConfig = PrfConfig(),
) -> list[ScoredDoc]:
    expansion = expand_query(query, provider, gen_cfg, ctqe_cfg, word_index, params, prf_cfg)
    return rank_ctqe(
        word_index,
        subword_index,
        params,
        expansion,
        ctqe_cfg.alpha,
        ctqe_cfg.top_k,
        ctqe_cfg.channel_depth,
    )
