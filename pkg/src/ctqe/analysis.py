"""Text normalization for the word-level and subword-level indexes."""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

# Characters every vocabulary carries as single pieces.
BASE_ALPHABET = frozenset(string.ascii_lowercase + string.digits)

# Word-boundary markers used by byte-level BPE and sentencepiece vocabularies.
SUBWORD_MARKERS = "Ġ▁"

_WORD_RE = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class AnalyzerConfig:
    lowercase: bool = True
    strip_punctuation: bool = True
    stopwords: frozenset[str] = frozenset()
    min_token_len: int = 1

    def __post_init__(self) -> None:
        if self.min_token_len < 1:
            raise ValueError(f"min_token_len must be >= 1, got {self.min_token_len}")
        normalized = frozenset(w.lower() if self.lowercase else w for w in self.stopwords)
        object.__setattr__(self, "stopwords", normalized)

    def to_dict(self) -> dict:
        return {
            "lowercase": self.lowercase,
            "strip_punctuation": self.strip_punctuation,
            "stopwords": sorted(self.stopwords),
            "min_token_len": self.min_token_len,
        }

    @classmethod
    def from_dict(cls, data: dict) -> AnalyzerConfig:
        return cls(
            lowercase=data["lowercase"],
            strip_punctuation=data["strip_punctuation"],
            stopwords=frozenset(data.get("stopwords", ())),
            min_token_len=data["min_token_len"],
        )


DEFAULT_ANALYZER = AnalyzerConfig()


def analyze(text: str, cfg: AnalyzerConfig = DEFAULT_ANALYZER) -> list[str]:
    """Split ``text`` into normalized word tokens.

    >>> analyze("Best diet for Type-2 diabetes?")
    ['best', 'diet', 'for', 'type', '2', 'diabetes']
    """
    if cfg.lowercase:
        text = text.lower()
    tokens = _WORD_RE.findall(text) if cfg.strip_punctuation else text.split()
    return [t for t in tokens if len(t) >= cfg.min_token_len and t not in cfg.stopwords]


@dataclass(frozen=True)
class SubwordVocab:
    entries: frozenset[str]
    max_piece_len: int = field(default=0)

    def __post_init__(self) -> None:
        entries = frozenset(self.entries) | BASE_ALPHABET
        if any(len(e) < 1 for e in entries):
            raise ValueError("vocabulary entries must be non-empty")
        object.__setattr__(self, "entries", entries)
        longest = max(len(e) for e in entries)
        if self.max_piece_len < longest:
            object.__setattr__(self, "max_piece_len", longest)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, piece: str) -> bool:
        return piece in self.entries

    @classmethod
    def from_pieces(cls, pieces: Iterable[str]) -> SubwordVocab:
        cleaned = (normalize_candidate(p) for p in pieces)
        return cls(frozenset(p for p in cleaned if p))

    @classmethod
    def load(cls, path: str | Path) -> SubwordVocab:
        """Read a newline-delimited vocabulary file, one piece per line."""
        with open(path, encoding="utf-8") as fh:
            return cls.from_pieces(line.rstrip("\n") for line in fh)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for piece in sorted(self.entries):
                fh.write(piece + "\n")


def split_word(word: str, vocab: SubwordVocab) -> list[str]:
    """Greedy longest-match-first segmentation of a single word."""
    pieces = []
    start = 0
    n = len(word)
    while start < n:
        end = min(n, start + vocab.max_piece_len)
        while end > start + 1 and word[start:end] not in vocab.entries:
            end -= 1
        # end == start + 1 is the single-character fallback, taken even for
        # characters outside the vocabulary so coverage is total.
        pieces.append(word[start:end])
        start = end
    return pieces


def subword_split(
    text: str, vocab: SubwordVocab, cfg: AnalyzerConfig = DEFAULT_ANALYZER
) -> list[str]:
    """Segment every analyzer word of ``text`` into vocabulary pieces.

    The pieces concatenate back to ``"".join(analyze(text, cfg))``.
    """
    pieces: list[str] = []
    for word in analyze(text, cfg):
        pieces.extend(split_word(word, vocab))
    return pieces


def normalize_candidate(token: str) -> str:
    """Make a raw LLM token comparable with index terms."""
    prev = None
    while prev != token:
        prev = token
        token = token.strip().strip(SUBWORD_MARKERS)
    return token.lower()
