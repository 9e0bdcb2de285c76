"""Binds a :class:`PipelineConfig` to indexes, a provider and an encoder."""

from __future__ import annotations

import time
from pathlib import Path

from ctqe.analysis import analyze
from ctqe.config import PipelineConfig
from ctqe.expansion import CandidateSet, ExpandedQuery, Expansion, rank_ctqe
from ctqe.fusion import Encoder, ProcessEncoder, retrieve_dense, retrieve_sparse, test_encoder
from ctqe.index import InvertedIndex, ScoredDoc
from ctqe.llm import HttpProvider, MockProvider, Provider
from ctqe.prf import expand_query
from ctqe.evaluation import PipelineOutput

WORD_INDEX_FILE = "word.json"
SUBWORD_INDEX_FILE = "subword.json"


def index_paths(index_dir: str | Path) -> tuple[Path, Path]:
    d = Path(index_dir)
    return d / WORD_INDEX_FILE, d / SUBWORD_INDEX_FILE


def make_provider(cfg: PipelineConfig) -> Provider:
    g = cfg.generation
    if g.provider == "mock":
        if not g.mock_script:
            raise ValueError("mock provider needs generation.mock_script")
        return MockProvider.load(g.mock_script)
    return HttpProvider(
        endpoint=g.endpoint,
        model=g.model,
        api_key_env=g.api_key_env,
        cache_dir=g.cache_dir,
        max_retries=g.max_retries,
    )


class Engine:
    """One configured retrieval pipeline; providers and encoders are created lazily."""

    def __init__(self, cfg: PipelineConfig, word_index: InvertedIndex, subword_index: InvertedIndex):
        self.cfg = cfg
        self.word_index = word_index
        self.subword_index = subword_index
        self.params = cfg.bm25_params()
        self._provider: Provider | None = None
        self._encoder: Encoder | None = None
        self._doc_cache: dict | None = None

    @classmethod
    def open(cls, cfg: PipelineConfig, index_dir: str | Path | None = None) -> Engine:
        word_path, subword_path = index_paths(index_dir or cfg.index_dir)
        return cls(cfg, InvertedIndex.load(word_path), InvertedIndex.load(subword_path))

    @property
    def provider(self) -> Provider:
        if self._provider is None:
            self._provider = make_provider(self.cfg)
        return self._provider

    @property
    def encoder(self) -> Encoder:
        if self._encoder is None:
            cmd = self.cfg.encoder.command
            self._encoder = ProcessEncoder(cmd) if cmd else test_encoder(self.cfg.encoder.seed)
        return self._encoder

    def plain_expansion(self, query: str) -> Expansion:
        terms = tuple(analyze(query, self.word_index.analyzer))
        return Expansion(query, ExpandedQuery(terms, (), 1), candidates=CandidateSet(), fallback=True)

    def expand(self, query: str) -> Expansion:
        if not self.cfg.expansion.enabled:
            return self.plain_expansion(query)
        return expand_query(
            query,
            self.provider,
            self.cfg.generation_config(),
            self.cfg.ctqe_config(),
            self.word_index,
            self.params,
            self.cfg.prf_config(),
        )

    def search(self, expansion: Expansion) -> list[ScoredDoc]:
        cfg = self.cfg
        if cfg.retriever == "bm25":
            ctqe = cfg.ctqe_config()
            return rank_ctqe(
                self.word_index,
                self.subword_index,
                self.params,
                expansion,
                ctqe.alpha,
                ctqe.top_k,
                ctqe.channel_depth,
            )
        texts = self.word_index.texts
        if self._doc_cache is None:
            encode = self.encoder.encode_dense if cfg.retriever == "dense" else self.encoder.encode_sparse
            self._doc_cache = {d: encode(texts[d]) for d in sorted(texts)}
        if cfg.retriever == "dense":
            return retrieve_dense(
                self.encoder, texts, expansion, cfg.dense_weights(), cfg.top_k, self._doc_cache
            )
        return retrieve_sparse(
            self.encoder, texts, expansion, cfg.sparse_weights(), cfg.top_k, self._doc_cache
        )

    def run(self, query: str) -> PipelineOutput:
        start = time.perf_counter()
        expansion = self.expand(query)
        llm_seconds = time.perf_counter() - start if self.cfg.expansion.enabled else 0.0
        return PipelineOutput(self.search(expansion), expansion.output_tokens, llm_seconds)
