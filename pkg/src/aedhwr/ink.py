"""Online ink samples, the INKTEXT file format and symbol vocabularies."""

from __future__ import annotations

import hashlib
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable

Point = tuple[float, float]

PAD, START, END, UNK = "<pad>", "<start>", "<end>", "<unk>"
RESERVED = (PAD, START, END, UNK)
PAD_ID, START_ID, END_ID, UNK_ID = range(4)


class InkFormatError(ValueError):
    """Malformed INKTEXT or vocabulary input; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class InkSample:
    """Ordered pen strokes (y grows downward) plus the ground-truth text."""

    strokes: list[list[Point]]
    label: str = ""

    def __post_init__(self):
        if not self.strokes:
            raise ValueError("an ink sample needs at least one stroke")
        if any(len(s) == 0 for s in self.strokes):
            raise ValueError("every stroke needs at least one point")

    @property
    def n_points(self) -> int:
        return sum(len(s) for s in self.strokes)

    def bbox(self) -> tuple[float, float, float, float]:
        xs = [x for s in self.strokes for x, _ in s]
        ys = [y for s in self.strokes for _, y in s]
        return min(xs), min(ys), max(xs), max(ys)


def nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def _fmt(v: float) -> str:
    return repr(float(v))


def serialize_ink(sample: InkSample) -> str:
    if "\n" in sample.label or "\r" in sample.label:
        raise ValueError("labels cannot contain line breaks")
    lines = ["INKTEXT 1", f"LABEL\t{sample.label}"]
    for stroke in sample.strokes:
        lines.append(f"STROKE {len(stroke)}")
        lines.extend(f"{_fmt(x)} {_fmt(y)}" for x, y in stroke)
    lines.append("END")
    return "\n".join(lines) + "\n"


def parse_ink(text: str) -> InkSample:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != "INKTEXT 1":
        raise InkFormatError("expected header 'INKTEXT 1'", 1)
    if len(lines) < 2 or not lines[1].startswith("LABEL\t"):
        raise InkFormatError("expected 'LABEL<TAB><label>'", 2)
    label = lines[1][len("LABEL\t") :]
    strokes: list[list[Point]] = []
    i = 2
    while True:
        if i >= len(lines):
            raise InkFormatError("missing END sentinel", len(lines))
        line = lines[i]
        lineno = i + 1
        if line == "END":
            if i != len(lines) - 1:
                raise InkFormatError("content after END", lineno + 1)
            break
        parts = line.split()
        if len(parts) != 2 or parts[0] != "STROKE":
            raise InkFormatError(f"expected 'STROKE <count>' or 'END', got {line!r}", lineno)
        try:
            count = int(parts[1])
        except ValueError:
            raise InkFormatError(f"bad point count {parts[1]!r}", lineno) from None
        if count < 1:
            raise InkFormatError("empty stroke", lineno)
        stroke = []
        for j in range(count):
            k = i + 1 + j
            if k >= len(lines):
                raise InkFormatError("stroke truncated", len(lines))
            coords = lines[k].split()
            if len(coords) != 2:
                raise InkFormatError(f"expected '<x> <y>', got {lines[k]!r}", k + 1)
            try:
                stroke.append((float(coords[0]), float(coords[1])))
            except ValueError:
                raise InkFormatError(f"non-numeric coordinate in {lines[k]!r}", k + 1) from None
        strokes.append(stroke)
        i += 1 + count
    if not strokes:
        raise InkFormatError("sample has no strokes", len(lines))
    return InkSample(strokes, label)


@dataclass
class Vocabulary:
    """Symbol <-> index map; indices 0..3 are ``<pad> <start> <end> <unk>``."""

    symbols: list[str] = field(default_factory=list)

    def __post_init__(self):
        body = [s for s in self.symbols if s not in RESERVED]
        self.symbols = list(RESERVED) + body
        self._index = {s: i for i, s in enumerate(self.symbols)}
        if len(self._index) != len(self.symbols):
            raise ValueError("vocabulary symbols must be unique")

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    @property
    def body(self) -> list[str]:
        """Non-reserved symbols in order."""
        return self.symbols[len(RESERVED) :]

    def index(self, symbol: str) -> int:
        return self._index.get(symbol, UNK_ID)

    def symbol(self, index: int) -> str:
        return self.symbols[index]

    def encode(self, text: str, add_end: bool = True) -> list[int]:
        ids = [self.index(ch) for ch in nfc(text)]
        return ids + [END_ID] if add_end else ids

    def decode(self, ids: Iterable[int]) -> str:
        out = []
        for i in ids:
            if i == END_ID:
                break
            if i in (PAD_ID, START_ID):
                continue
            out.append("�" if i == UNK_ID else self.symbols[i])
        return "".join(out)

    def to_text(self) -> str:
        return "".join(s + "\n" for s in self.body)

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.symbols).encode("utf-8")).hexdigest()


def load_vocab(text: str) -> Vocabulary:
    symbols: list[str] = []
    seen: dict[str, int] = {}
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for n, line in enumerate(lines, start=1):
        if line in seen:
            raise InkFormatError(f"duplicate symbol {line!r} (first on line {seen[line]})", n)
        if line in RESERVED:
            raise InkFormatError(f"reserved token {line!r} must not be listed", n)
        if len(line) != 1:
            raise InkFormatError(f"expected a single symbol, got {line!r}", n)
        seen[line] = n
        symbols.append(line)
    return Vocabulary(symbols)


def build_vocab(labels: Iterable[str]) -> Vocabulary:
    """Symbols in first-seen order over NFC-normalized labels."""
    seen: dict[str, None] = {}
    for label in labels:
        for ch in nfc(label):
            seen.setdefault(ch, None)
    return Vocabulary(list(seen))
