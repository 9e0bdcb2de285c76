"""TREC run/qrels I/O, nDCG@k, and token/latency accounting."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from ctqe.index import ScoredDoc

logger = logging.getLogger(__name__)

Qrels = dict[str, dict[str, int]]


class FormatError(ValueError):
    """Malformed qrels or run file."""


@dataclass
class RunFile:
    rankings: dict[str, list[tuple[str, float]]] = field(default_factory=dict)
    tag: str = "ctqe"

    def add(self, qid: str, ranking: Iterable[ScoredDoc | tuple[str, float]]) -> None:
        entries = [(r.doc_id, r.score) if isinstance(r, ScoredDoc) else tuple(r) for r in ranking]
        docs = [d for d, _ in entries]
        if len(set(docs)) != len(docs):
            raise FormatError(f"query {qid}: duplicate doc_id in ranking")
        for (_, a), (_, b) in zip(entries, entries[1:]):
            if b > a:
                raise FormatError(f"query {qid}: scores increase with rank")
        self.rankings[qid] = entries

    def __len__(self) -> int:
        return len(self.rankings)


def read_qrels(path: str | Path) -> Qrels:
    qrels: Qrels = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise FormatError(f"{path}:{lineno}: expected 'qid iter docid rel'")
            qid, _, doc_id, rel = parts
            try:
                grade = int(rel)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: relevance {rel!r} is not an integer") from exc
            if grade < 0:
                raise FormatError(f"{path}:{lineno}: negative relevance {grade}")
            qrels.setdefault(qid, {})[doc_id] = grade
    return qrels


def write_run(path: str | Path, run: RunFile) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for qid, entries in run.rankings.items():
            for rank, (doc_id, score) in enumerate(entries, 1):
                fh.write(f"{qid} Q0 {doc_id} {rank} {score:.6f} {run.tag}\n")


def read_run(path: str | Path) -> RunFile:
    rows: dict[str, list[tuple[int, str, float]]] = {}
    tag = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise FormatError(f"{path}:{lineno}: expected 'qid Q0 docid rank score tag'")
            qid, _, doc_id, rank, score, tag = parts
            try:
                rows.setdefault(qid, []).append((int(rank), doc_id, float(score)))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: bad rank or score") from exc
    run = RunFile(tag=tag or "ctqe")
    for qid, entries in rows.items():
        entries.sort()
        for (r1, _, s1), (r2, _, s2) in zip(entries, entries[1:]):
            if r1 == r2:
                raise FormatError(f"{path}: query {qid} repeats rank {r1}")
            if s2 > s1:
                raise FormatError(f"{path}: query {qid} score increases from rank {r1} to {r2}")
        run.add(qid, [(d, s) for _, d, s in entries])
    return run


def dcg(gains: Sequence[int], k: int) -> float:
    return sum((2**g - 1) / math.log2(i + 2) for i, g in enumerate(gains[:k]))


@dataclass
class NdcgResult:
    per_query: dict[str, float]
    mean: float
    zero_idcg: list[str] = field(default_factory=list)
    missing_qrels: list[str] = field(default_factory=list)

    def to_dict(self, k: int) -> dict:
        return {
            "metric": f"ndcg@{k}",
            "mean": self.mean,
            "num_queries": len(self.per_query),
            "excluded_zero_idcg": len(self.zero_idcg),
            "excluded_missing_qrels": len(self.missing_qrels),
            "per_query": self.per_query,
        }


def ndcg_at_k(run: RunFile, qrels: Qrels, k: int = 10) -> NdcgResult:
    """nDCG@k with 2^rel - 1 gains and log2(rank + 1) discounts.

    Unjudged documents count as non-relevant. Queries whose ideal DCG is zero
    and run queries without judgments are left out of the mean.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    per_query: dict[str, float] = {}
    zero_idcg: list[str] = []
    missing: list[str] = []
    for qid, entries in run.rankings.items():
        judged = qrels.get(qid)
        if judged is None:
            missing.append(qid)
            continue
        ideal = dcg(sorted(judged.values(), reverse=True), k)
        if ideal == 0.0:
            zero_idcg.append(qid)
            continue
        gains = [judged.get(doc_id, 0) for doc_id, _ in entries]
        per_query[qid] = dcg(gains, k) / ideal
    if missing:
        logger.warning("%d run queries have no judgments", len(missing))
    mean = sum(per_query.values()) / len(per_query) if per_query else 0.0
    return NdcgResult(per_query, mean, zero_idcg, missing)


@dataclass(frozen=True)
class PipelineOutput:
    ranking: list[ScoredDoc]
    output_tokens: int = 0
    llm_seconds: float = 0.0


@dataclass(frozen=True)
class CostRecord:
    qid: str
    output_tokens: int
    llm_seconds: float
    total_seconds: float

    @property
    def retrieval_seconds(self) -> float:
        return max(0.0, self.total_seconds - self.llm_seconds)


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


@dataclass
class CostReport:
    records: list[CostRecord] = field(default_factory=list)
    failures: dict[str, str] = field(default_factory=dict)

    @property
    def mean_tokens(self) -> float:
        return _mean([r.output_tokens for r in self.records])

    @property
    def mean_latency(self) -> float:
        return _mean([r.total_seconds for r in self.records])

    @property
    def mean_llm_latency(self) -> float:
        return _mean([r.llm_seconds for r in self.records])

    @property
    def mean_retrieval_latency(self) -> float:
        return _mean([r.retrieval_seconds for r in self.records])

    def to_dict(self) -> dict:
        return {
            "num_queries": len(self.records),
            "num_failures": len(self.failures),
            "mean_output_tokens": self.mean_tokens,
            "mean_latency_s": self.mean_latency,
            "mean_llm_latency_s": self.mean_llm_latency,
            "mean_retrieval_latency_s": self.mean_retrieval_latency,
            "per_query": [
                {
                    "qid": r.qid,
                    "output_tokens": r.output_tokens,
                    "llm_latency_s": r.llm_seconds,
                    "retrieval_latency_s": r.retrieval_seconds,
                    "latency_s": r.total_seconds,
                }
                for r in self.records
            ],
            "failures": self.failures,
        }

    def format_table(self) -> str:
        lines = [f"{'qid':<12}{'tokens':>8}{'llm_s':>10}{'retr_s':>10}{'total_s':>10}"]
        for r in self.records:
            lines.append(
                f"{r.qid:<12}{r.output_tokens:>8d}{r.llm_seconds:>10.3f}"
                f"{r.retrieval_seconds:>10.3f}{r.total_seconds:>10.3f}"
            )
        lines.append(
            f"{'mean':<12}{self.mean_tokens:>8.1f}{self.mean_llm_latency:>10.3f}"
            f"{self.mean_retrieval_latency:>10.3f}{self.mean_latency:>10.3f}"
        )
        return "\n".join(lines)


Pipeline = Callable[[str], PipelineOutput]


def measure(
    pipeline: Pipeline, queries: Iterable[tuple[str, str]], tag: str = "ctqe"
) -> tuple[RunFile, CostReport]:
    """Run ``pipeline`` on each ``(qid, query)`` and record its cost.

    A query whose pipeline raises is recorded as a failure and left out of
    the run.
    """
    run = RunFile(tag=tag)
    report = CostReport()
    for qid, query in queries:
        start = time.perf_counter()
        try:
            out = pipeline(query)
        except Exception as exc:  # noqa: BLE001 - recorded, not swallowed
            logger.error("query %s failed: %s", qid, exc)
            report.failures[qid] = f"{type(exc).__name__}: {exc}"
            continue
        elapsed = time.perf_counter() - start
        run.add(qid, out.ranking)
        report.records.append(CostRecord(qid, out.output_tokens, out.llm_seconds, elapsed))
    return run, report
