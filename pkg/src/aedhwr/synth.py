"""Synthetic handwriting corpus: jittered polyline glyphs with delayed mark strokes.

Glyph templates are drawn in glyph units with y growing downward: ascenders
start at 0.0, the x-height line is 0.4, the baseline is 1.0 and descenders
reach about 1.35. Four base glyphs have a marked variant whose accent stroke
is written after every base stroke of the word, the way writers often add
diacritics last.
"""

from __future__ import annotations

from typing import Sequence

from .ink import InkSample, Vocabulary
from .tensor import ConfigurationError

MASK64 = (1 << 64) - 1
INK_UNITS = 100.0  # tablet units per glyph unit
JITTER = 0.1
LETTER_GAP = 0.15
WORD_GAP = 0.6


class SplitMix64:
    """The splitmix64 generator; small, fast and identical on every platform."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randint(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi], inclusive."""
        return lo + int(self.uniform() * (hi - lo + 1))

    def choice(self, items: Sequence):
        return items[int(self.uniform() * len(items))]


def sample_stream(seed: int, index: int) -> SplitMix64:
    """Independent generator for sample ``index``, so generation order doesn't matter."""
    mixer = SplitMix64((seed + (index + 1) * 0xD1B54A32D192ED03) & MASK64)
    return SplitMix64(mixer.next_u64())


_BOWL = [(0.55, 0.5), (0.4, 0.4), (0.15, 0.45), (0.05, 0.7), (0.15, 0.95), (0.4, 1.0), (0.55, 0.85)]

# symbol -> (advance width, strokes)
BASE_GLYPHS: dict[str, tuple[float, list[list[tuple[float, float]]]]] = {
    "a": (0.6, [_BOWL, [(0.55, 0.4), (0.58, 1.0)]]),
    "c": (0.55, [[(0.5, 0.48), (0.3, 0.4), (0.1, 0.5), (0.05, 0.7), (0.12, 0.92), (0.32, 1.0), (0.52, 0.92)]]),
    "d": (0.6, [_BOWL, [(0.55, 0.0), (0.57, 1.0)]]),
    "e": (0.55, [[(0.08, 0.7), (0.5, 0.7), (0.45, 0.5), (0.3, 0.4), (0.1, 0.5), (0.05, 0.72),
                  (0.15, 0.95), (0.35, 1.0), (0.52, 0.92)]]),
    "g": (0.6, [_BOWL, [(0.55, 0.4), (0.55, 1.2), (0.4, 1.35), (0.12, 1.3)]]),
    "h": (0.55, [[(0.05, 0.0), (0.05, 1.0)], [(0.05, 0.6), (0.2, 0.42), (0.4, 0.4), (0.5, 0.5), (0.5, 1.0)]]),
    "i": (0.2, [[(0.1, 0.4), (0.1, 1.0)], [(0.1, 0.22)]]),
    "l": (0.25, [[(0.1, 0.0), (0.1, 0.9), (0.2, 1.0)]]),
    "m": (0.7, [[(0.05, 0.4), (0.05, 1.0)], [(0.05, 0.55), (0.2, 0.4), (0.35, 0.5), (0.35, 1.0)],
                [(0.35, 0.55), (0.5, 0.4), (0.65, 0.5), (0.65, 1.0)]]),
    "n": (0.5, [[(0.05, 0.4), (0.05, 1.0)], [(0.05, 0.55), (0.25, 0.4), (0.45, 0.5), (0.45, 1.0)]]),
    "o": (0.6, [[(0.3, 0.4), (0.1, 0.5), (0.05, 0.7), (0.12, 0.92), (0.3, 1.0), (0.48, 0.92), (0.55, 0.7),
                 (0.5, 0.5), (0.3, 0.4)]]),
    "r": (0.45, [[(0.05, 0.4), (0.05, 1.0)], [(0.05, 0.6), (0.2, 0.43), (0.4, 0.42)]]),
    "s": (0.5, [[(0.45, 0.45), (0.3, 0.4), (0.1, 0.47), (0.12, 0.65), (0.4, 0.75), (0.45, 0.92), (0.3, 1.0),
                 (0.05, 0.95)]]),
    "t": (0.45, [[(0.2, 0.1), (0.2, 0.9), (0.3, 1.0), (0.4, 0.95)], [(0.05, 0.4), (0.38, 0.4)]]),
    "u": (0.55, [[(0.05, 0.4), (0.05, 0.85), (0.15, 1.0), (0.35, 1.0), (0.5, 0.85)], [(0.5, 0.4), (0.52, 1.0)]]),
    "v": (0.5, [[(0.0, 0.4), (0.25, 1.0), (0.5, 0.4)]]),
}

# marked symbol -> (base symbol, accent stroke relative to the base glyph origin)
MARKED_GLYPHS: dict[str, tuple[str, list[tuple[float, float]]]] = {
    "á": ("a", [(0.22, 0.3), (0.4, 0.12)]),
    "é": ("e", [(0.2, 0.3), (0.38, 0.12)]),
    "ó": ("o", [(0.22, 0.3), (0.4, 0.12)]),
    "ú": ("u", [(0.2, 0.3), (0.38, 0.12)]),
}

ALL_SYMBOLS = list(BASE_GLYPHS) + list(MARKED_GLYPHS)


def default_alphabet(with_space: bool = False) -> Vocabulary:
    """All 20 glyph symbols (plus the word separator when ``with_space``)."""
    return Vocabulary(ALL_SYMBOLS + ([" "] if with_space else []))


def _split_alphabet(alphabet: Vocabulary) -> tuple[list[str], list[str]]:
    body = [s for s in alphabet.body if s != " "]
    if len(body) < 4:
        raise ConfigurationError(f"alphabet needs at least 4 non-reserved symbols, got {len(body)}")
    unknown = [s for s in body if s not in BASE_GLYPHS and s not in MARKED_GLYPHS]
    if unknown:
        raise ConfigurationError(f"no glyph template for symbol {unknown[0]!r}")
    bases = [s for s in body if s in BASE_GLYPHS]
    if not bases:
        raise ConfigurationError("alphabet has no unmarked base glyphs")
    marked = [s for s in body if s in MARKED_GLYPHS]
    return bases, marked


def _jitter(points, dx: float, rng: SplitMix64) -> list[tuple[float, float]]:
    out = []
    for x, y in points:
        jx = (2 * rng.uniform() - 1) * JITTER
        jy = (2 * rng.uniform() - 1) * JITTER
        out.append((round((x + dx + jx) * INK_UNITS, 2), round((y + jy) * INK_UNITS, 2)))
    return out


def _draw_word(word: Sequence[str], x: float, rng: SplitMix64, base_strokes: list, mark_strokes: list) -> float:
    for sym in word:
        if sym in MARKED_GLYPHS:
            base, accent = MARKED_GLYPHS[sym]
        else:
            base, accent = sym, None
        advance, strokes = BASE_GLYPHS[base]
        for stroke in strokes:
            base_strokes.append(_jitter(stroke, x, rng))
        if accent is not None:
            mark_strokes.append(_jitter(accent, x, rng))
        x += advance + LETTER_GAP
    return x


def _random_word(rng: SplitMix64, bases, marked, length: int, mark_prob: float) -> list[str]:
    word = [rng.choice(bases) for _ in range(length)]
    if marked and rng.uniform() < mark_prob:
        word[rng.randint(0, length - 1)] = rng.choice(marked)
    return word


def generate_corpus(
    seed: int,
    n_samples: int,
    alphabet: Vocabulary | None = None,
    word_len_range: tuple[int, int] = (2, 5),
    mark_prob: float = 0.3,
) -> list[InkSample]:
    """Random single-word samples; a sample carries one marked glyph with probability ``mark_prob``."""
    alphabet = alphabet or default_alphabet()
    bases, marked = _split_alphabet(alphabet)
    lo, hi = word_len_range
    if n_samples < 1:
        raise ConfigurationError("n_samples must be >= 1")
    if not 1 <= lo <= hi:
        raise ConfigurationError(f"bad word length range {word_len_range}")
    if not 0.0 <= mark_prob <= 1.0:
        raise ConfigurationError("mark_prob must lie in [0, 1]")
    samples = []
    for i in range(n_samples):
        rng = sample_stream(seed, i)
        word = _random_word(rng, bases, marked, rng.randint(lo, hi), mark_prob)
        base_strokes: list = []
        mark_strokes: list = []
        _draw_word(word, 0.0, rng, base_strokes, mark_strokes)
        samples.append(InkSample(base_strokes + mark_strokes, "".join(word)))
    return samples


def generate_lines(
    seed: int,
    n_samples: int,
    alphabet: Vocabulary | None = None,
    words_per_line: tuple[int, int] = (2, 3),
    word_len_range: tuple[int, int] = (2, 4),
    mark_prob: float = 0.3,
) -> list[InkSample]:
    """Multi-word text lines, words separated by a blank gap and a space in the label.

    Marks are delayed per word, so each word's accents follow its own base strokes.
    """
    alphabet = alphabet or default_alphabet(with_space=True)
    bases, marked = _split_alphabet(alphabet)
    samples = []
    for i in range(n_samples):
        rng = sample_stream(seed, i)
        strokes: list = []
        words = []
        x = 0.0
        for _ in range(rng.randint(*words_per_line)):
            word = _random_word(rng, bases, marked, rng.randint(*word_len_range), mark_prob)
            base_strokes: list = []
            mark_strokes: list = []
            x = _draw_word(word, x, rng, base_strokes, mark_strokes) + WORD_GAP
            strokes += base_strokes + mark_strokes
            words.append("".join(word))
        samples.append(InkSample(strokes, " ".join(words)))
    return samples
