"""Edit distance, normalized edit distance and character/word error rates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .ink import nfc
from .tensor import UsageError


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost insert/delete/substitute distance, two-row dynamic programme."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def char_tokens(text: str) -> list[str]:
    return list(nfc(text))


def word_tokens(text: str) -> list[str]:
    return nfc(text).split()


def ned(reference: Sequence, hypothesis: Sequence) -> float:
    """100 * ED / |reference| in percent; tokens are whatever the sequences hold."""
    if len(reference) == 0:
        raise UsageError("normalized edit distance is undefined for an empty reference")
    return 100.0 * levenshtein(reference, hypothesis) / len(reference)


@dataclass
class SampleScore:
    name: str
    reference: str
    hypothesis: str
    char_ed: int
    word_ed: int
    ned_char: float
    ned_word: float

    @classmethod
    def score(cls, name: str, reference: str, hypothesis: str) -> SampleScore:
        rc, hc = char_tokens(reference), char_tokens(hypothesis)
        rw, hw = word_tokens(reference), word_tokens(hypothesis)
        return cls(name, nfc(reference), nfc(hypothesis), levenshtein(rc, hc), levenshtein(rw, hw),
                   ned(rc, hc), ned(rw, hw))

    def tsv_row(self) -> str:
        return "\t".join([self.name, self.reference, self.hypothesis, str(self.char_ed), str(self.word_ed),
                          f"{self.ned_char:.4f}", f"{self.ned_word:.4f}"])


@dataclass
class EvalReport:
    rows: list[SampleScore] = field(default_factory=list)

    @property
    def cer(self) -> float:
        return sum(r.ned_char for r in self.rows) / len(self.rows)

    @property
    def wer(self) -> float:
        return sum(r.ned_word for r in self.rows) / len(self.rows)

    def summary(self) -> str:
        return f"CER={self.cer:.2f} WER={self.wer:.2f}"

    def to_tsv(self) -> str:
        return "".join(r.tsv_row() + "\n" for r in self.rows)


def score_pairs(pairs: Sequence[tuple[str, str, str]]) -> EvalReport:
    """Report over (name, reference, hypothesis) triples."""
    if not pairs:
        raise UsageError("cannot score an empty set")
    return EvalReport([SampleScore.score(*p) for p in pairs])
