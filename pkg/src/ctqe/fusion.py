"""Fusing query, keyword and candidate representations for neural retrievers.

Dense retrievers get a weighted sum of the three query-encoder vectors;
learned-sparse retrievers get a weighted sum of per-token importance maps,
with the candidate weight switched off for the tokens the query and
keyword components already rank highest.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
import sys
from collections import Counter
from dataclasses import dataclass
from typing import IO, Mapping, Protocol, Sequence

import numpy as np

from ctqe.analysis import analyze
from ctqe.expansion import Expansion
from ctqe.index import ScoredDoc, rank

SparseWeights = dict[str, float]


@dataclass(frozen=True)
class DenseFusionWeights:
    alpha_q: float = 0.5
    alpha_w: float = 0.1
    alpha_c: float = 0.1

    def __post_init__(self) -> None:
        ws = (self.alpha_q, self.alpha_w, self.alpha_c)
        if min(ws) < 0 or max(ws) == 0:
            raise ValueError("dense weights must be non-negative with at least one positive")


@dataclass(frozen=True)
class SparseFusionWeights:
    beta_q: float = 0.5
    beta_w: float = 0.1
    beta_c: float = 0.1
    zero_top_n: int = 20

    def __post_init__(self) -> None:
        if min(self.beta_q, self.beta_w, self.beta_c) < 0:
            raise ValueError("sparse weights must be non-negative")
        if self.zero_top_n < 0:
            raise ValueError(f"zero_top_n must be >= 0, got {self.zero_top_n}")


def _check_dims(*vecs: np.ndarray) -> None:
    dims = {v.shape for v in vecs}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: {sorted(d for d in dims)}")


def fuse_dense(
    v_q: np.ndarray, v_w: np.ndarray, v_c: np.ndarray, w: DenseFusionWeights = DenseFusionWeights()
) -> np.ndarray:
    # weights are applied as given, without renormalizing to sum to one
    v_q, v_w, v_c = (np.asarray(v, dtype=np.float64) for v in (v_q, v_w, v_c))
    _check_dims(v_q, v_w, v_c)
    return w.alpha_q * v_q + w.alpha_w * v_w + w.alpha_c * v_c


def dense_score(v_query: np.ndarray, v_doc: np.ndarray) -> float:
    v_query, v_doc = np.asarray(v_query, dtype=np.float64), np.asarray(v_doc, dtype=np.float64)
    _check_dims(v_query, v_doc)
    return float(v_query @ v_doc)


def zeroing_set(
    ls_q: Mapping[str, float], ls_w: Mapping[str, float], w: SparseFusionWeights
) -> set[str]:
    """Tokens whose candidate contribution is suppressed.

    These are the ``zero_top_n`` tokens with the highest positive
    query+keyword weight, ties broken by token string. The set never
    depends on the candidate component.
    """
    if w.zero_top_n == 0:
        return set()
    base = {t: w.beta_q * ls_q.get(t, 0.0) + w.beta_w * ls_w.get(t, 0.0) for t in set(ls_q) | set(ls_w)}
    ordered = sorted((t for t in base if base[t] > 0.0), key=lambda t: (-base[t], t))
    return set(ordered[: w.zero_top_n])


def fuse_sparse(
    ls_q: Mapping[str, float],
    ls_w: Mapping[str, float],
    ls_c: Mapping[str, float],
    w: SparseFusionWeights = SparseFusionWeights(),
) -> SparseWeights:
    suppressed = zeroing_set(ls_q, ls_w, w)
    fused = {}
    for t in set(ls_q) | set(ls_w) | set(ls_c):
        value = w.beta_q * ls_q.get(t, 0.0) + w.beta_w * ls_w.get(t, 0.0)
        if t not in suppressed:
            value += w.beta_c * ls_c.get(t, 0.0)
        fused[t] = value
    return dict(sorted(fused.items()))


def sparse_score(fused: Mapping[str, float], doc: Mapping[str, float]) -> float:
    if len(doc) < len(fused):
        fused, doc = doc, fused
    return sum(v * doc[t] for t, v in fused.items() if t in doc)


class Encoder(Protocol):
    def encode_dense(self, text: str) -> np.ndarray: ...

    def encode_sparse(self, text: str) -> SparseWeights: ...


def _unit_hash(*parts: object) -> float:
    """Deterministic hash of ``parts`` mapped to [0, 1)."""
    digest = hashlib.blake2b("\x1f".join(map(str, parts)).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2**64


class HashEncoder:
    """Seeded, dependency-free encoder standing in for a trained query encoder.

    A token's dense embedding has components drawn from a hash of
    (seed, token, position); a text embeds as the unit-normalized sum of its
    token embeddings, so lexical overlap yields positive inner products.
    """

    def __init__(self, seed: int = 0, dim: int = 32):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.seed = seed
        self.dim = dim

    def _token_vector(self, token: str) -> np.ndarray:
        return np.array([2.0 * _unit_hash(self.seed, token, i) - 1.0 for i in range(self.dim)])

    def encode_dense(self, text: str) -> np.ndarray:
        tokens = analyze(text)
        if not tokens:
            return np.full(self.dim, 1.0 / np.sqrt(self.dim))
        vec = np.zeros(self.dim)
        for tok, n in Counter(tokens).items():
            vec += n * self._token_vector(tok)
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            return np.full(self.dim, 1.0 / np.sqrt(self.dim))
        return vec / norm

    def encode_sparse(self, text: str) -> SparseWeights:
        counts = Counter(analyze(text))
        return {
            t: float(np.log1p(n) * (0.5 + _unit_hash(self.seed, "sparse", t)))
            for t, n in sorted(counts.items())
        }


def test_encoder(seed: int = 0) -> HashEncoder:
    """The deterministic 32-dimensional encoder used by tests and the CLI default."""
    return HashEncoder(seed, dim=32)


test_encoder.__test__ = False  # keep pytest from collecting it


class ProcessEncoder:
    """Encoder living in another process, spoken to with one JSON object per line.

    Requests are ``{"text": ...}``; the process answers with ``{"dense": [...]}``,
    ``{"sparse": {token: weight}}`` or both.
    """

    def __init__(self, command: Sequence[str]):
        self._proc = subprocess.Popen(
            list(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )

    def _ask(self, text: str) -> dict:
        assert self._proc.stdin is not None and self._proc.stdout is not None
        self._proc.stdin.write(json.dumps({"text": text}) + "\n")
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise RuntimeError("encoder process closed its output")
        return json.loads(line)

    def encode_dense(self, text: str) -> np.ndarray:
        reply = self._ask(text)
        if "dense" not in reply:
            raise RuntimeError("encoder reply carries no dense vector")
        return np.asarray(reply["dense"], dtype=np.float64)

    def encode_sparse(self, text: str) -> SparseWeights:
        reply = self._ask(text)
        if "sparse" not in reply:
            raise RuntimeError("encoder reply carries no sparse weights")
        return {str(t): float(v) for t, v in reply["sparse"].items()}

    def close(self) -> None:
        if self._proc.stdin:
            self._proc.stdin.close()
        self._proc.wait(timeout=10)

    def __enter__(self) -> ProcessEncoder:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def serve(encoder: Encoder, stdin: IO[str] = sys.stdin, stdout: IO[str] = sys.stdout) -> None:
    """Answer line-delimited encode requests until ``stdin`` closes."""
    for line in stdin:
        if not line.strip():
            continue
        text = json.loads(line)["text"]
        reply = {
            "dense": [float(x) for x in encoder.encode_dense(text)],
            "sparse": encoder.encode_sparse(text),
        }
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()


def component_texts(expansion: Expansion) -> tuple[str, str, str]:
    """Texts fed to the query encoder for the query, keyword and candidate components."""
    return (
        expansion.query,
        ", ".join(expansion.keywords.texts),
        " ".join(expansion.candidates.tokens),
    )


def retrieve_dense(
    encoder: Encoder,
    doc_texts: Mapping[str, str],
    expansion: Expansion,
    weights: DenseFusionWeights = DenseFusionWeights(),
    top_k: int = 1000,
    doc_vectors: Mapping[str, np.ndarray] | None = None,
) -> list[ScoredDoc]:
    q, kw, cand = component_texts(expansion)
    v_q = encoder.encode_dense(q)
    # an absent component contributes nothing rather than the empty-text vector
    v_w = encoder.encode_dense(kw) if kw else np.zeros_like(v_q)
    v_c = encoder.encode_dense(cand) if cand else np.zeros_like(v_q)
    fused = fuse_dense(v_q, v_w, v_c, weights)
    if doc_vectors is None:
        doc_vectors = {d: encoder.encode_dense(t) for d, t in doc_texts.items()}
    return rank({d: dense_score(fused, v) for d, v in doc_vectors.items()}, top_k)


def retrieve_sparse(
    encoder: Encoder,
    doc_texts: Mapping[str, str],
    expansion: Expansion,
    weights: SparseFusionWeights = SparseFusionWeights(),
    top_k: int = 1000,
    doc_weights: Mapping[str, SparseWeights] | None = None,
) -> list[ScoredDoc]:
    q, kw, cand = component_texts(expansion)
    fused = fuse_sparse(
        encoder.encode_sparse(q), encoder.encode_sparse(kw), encoder.encode_sparse(cand), weights
    )
    if doc_weights is None:
        doc_weights = {d: encoder.encode_sparse(t) for d, t in doc_texts.items()}
    scores = {d: sparse_score(fused, w) for d, w in doc_weights.items()}
    return rank({d: s for d, s in scores.items() if s > 0.0}, top_k)


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="serve the hash encoder over stdin/stdout")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--dim", type=int, default=32)
    args = parser.parse_args()
    serve(HashEncoder(args.seed, args.dim))
