"""Pipeline configuration: YAML file, command-line overrides, defaults."""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ctqe.expansion import CTQEConfig, FilterMode
from ctqe.fusion import DenseFusionWeights, SparseFusionWeights
from ctqe.index import BM25Params
from ctqe.prf import GenerationConfig, PrfConfig

RETRIEVERS = ("bm25", "dense", "sparse")
PROVIDERS = ("mock", "http")


class ConfigError(ValueError):
    pass


@dataclass
class BM25Section:
    k1: float = 0.9
    b: float = 0.4


@dataclass
class ExpansionSection:
    enabled: bool = True
    alpha: float = 0.9
    repetition: int = 5
    mode: str = FilterMode.DEDUP_FIRST_POS.value
    exclude_known_terms: bool = False
    channel_depth: int | None = None


@dataclass
class GenerationSection:
    provider: str = "mock"
    mock_script: str | None = None
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4.1-mini"
    api_key_env: str = "OPENAI_API_KEY"
    cache_dir: str | None = None
    max_retries: int = 3
    max_tokens: int = 16
    temperature: float = 0.0
    top_k_alternates: int = 20


@dataclass
class PrfSection:
    enabled: bool = False
    depth: int = 10
    max_passage_tokens: int = 128


@dataclass
class DenseSection:
    alpha_q: float = 0.5
    alpha_w: float = 0.1
    alpha_c: float = 0.1


@dataclass
class SparseSection:
    beta_q: float = 0.5
    beta_w: float = 0.1
    beta_c: float = 0.1
    zero_top_n: int = 20


@dataclass
class EncoderSection:
    seed: int = 0
    command: list[str] | None = None


@dataclass
class PipelineConfig:
    name: str = "ctqe"
    retriever: str = "bm25"
    top_k: int = 1000
    index_dir: str = "index"
    bm25: BM25Section = field(default_factory=BM25Section)
    expansion: ExpansionSection = field(default_factory=ExpansionSection)
    generation: GenerationSection = field(default_factory=GenerationSection)
    prf: PrfSection = field(default_factory=PrfSection)
    dense: DenseSection = field(default_factory=DenseSection)
    sparse: SparseSection = field(default_factory=SparseSection)
    encoder: EncoderSection = field(default_factory=EncoderSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> PipelineConfig:
        cfg = _build(cls, data, "")
        cfg.validate()
        return cfg

    def validate(self) -> None:
        """Construct every component config so their invariants are checked."""
        if self.retriever not in RETRIEVERS:
            raise ConfigError(f"unknown retriever {self.retriever!r}; choose from {RETRIEVERS}")
        if self.generation.provider not in PROVIDERS:
            raise ConfigError(f"unknown provider {self.generation.provider!r}")
        try:
            self.ctqe_config()
            self.generation_config()
            self.prf_config()
            self.bm25_params()
            self.dense_weights()
            self.sparse_weights()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def bm25_params(self) -> BM25Params:
        return BM25Params(self.bm25.k1, self.bm25.b)

    def ctqe_config(self) -> CTQEConfig:
        e = self.expansion
        return CTQEConfig(
            alpha=e.alpha,
            repetition=e.repetition,
            mode=FilterMode(e.mode),
            top_k=self.top_k,
            exclude_known_terms=e.exclude_known_terms,
            channel_depth=e.channel_depth,
        )

    def generation_config(self) -> GenerationConfig:
        g = self.generation
        return GenerationConfig(g.max_tokens, g.temperature, g.top_k_alternates)

    def prf_config(self) -> PrfConfig | None:
        cfg = PrfConfig(self.prf.depth, self.prf.max_passage_tokens)
        return cfg if self.prf.enabled else None

    def dense_weights(self) -> DenseFusionWeights:
        return DenseFusionWeights(self.dense.alpha_q, self.dense.alpha_w, self.dense.alpha_c)

    def sparse_weights(self) -> SparseFusionWeights:
        s = self.sparse
        return SparseFusionWeights(s.beta_q, s.beta_w, s.beta_c, s.zero_top_n)


def _build(cls: type, data: Any, where: str) -> Any:
    if not isinstance(data, dict):
        raise ConfigError(f"section {where or '<root>'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown config key(s) in {where or '<root>'}: {', '.join(sorted(unknown))}")
    kwargs = {}
    for name, value in data.items():
        factory = fields[name].default_factory
        if factory is not dataclasses.MISSING and dataclasses.is_dataclass(factory):
            kwargs[name] = _build(factory, value, f"{where}{name}.")
        else:
            kwargs[name] = value
    return cls(**kwargs)


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = value
    return out


def set_path(data: dict, dotted: str, value: Any) -> None:
    *parents, leaf = dotted.split(".")
    node = data
    for p in parents:
        node = node.setdefault(p, {})
    node[leaf] = value


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    """Defaults, then the YAML file at ``path``, then dotted-key ``overrides``."""
    data = PipelineConfig().to_dict()
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        data = merge(data, loaded)
    for dotted, value in (overrides or {}).items():
        set_path(data, dotted, value)
    return PipelineConfig.from_dict(data)
