"""Corpus directories: ``*.ink`` / ``*.pgm`` files, ``manifest.tsv`` and ``vocab.txt``."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from .ink import InkFormatError, InkSample, Vocabulary, nfc, parse_ink, serialize_ink
from .raster import RasterImage, read_pgm, render, write_pgm
from .train import Example

MANIFEST = "manifest.tsv"
VOCAB = "vocab.txt"


def write_corpus(out_dir, samples: Sequence[InkSample], vocab: Vocabulary) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    rows = []
    for i, sample in enumerate(samples):
        name = f"sample_{i}.ink"
        (out / name).write_text(serialize_ink(sample), encoding="utf-8", newline="\n")
        rows.append(f"{name}\t{sample.label}\n")
        paths.append(out / name)
    (out / MANIFEST).write_text("".join(rows), encoding="utf-8", newline="\n")
    (out / VOCAB).write_text(vocab.to_text(), encoding="utf-8", newline="\n")
    return paths


def read_manifest(directory) -> list[tuple[str, str]]:
    path = Path(directory) / MANIFEST
    rows = []
    for n, line in enumerate(path.read_text(encoding="utf-8").split("\n"), start=1):
        if not line:
            continue
        name, sep, label = line.partition("\t")
        if not sep:
            raise InkFormatError(f"manifest row needs '<file><TAB><label>', got {line!r}", n)
        rows.append((name, nfc(label)))
    return rows


def load_image(path, height: int = 64, max_width: int = 512, stroke_width: int = 2) -> RasterImage:
    """Read a PGM as-is or render an INKTEXT file."""
    path = Path(path)
    data = path.read_bytes()
    if data.startswith(b"INKTEXT"):
        return render(parse_ink(data.decode("utf-8")), height, stroke_width, max_width)
    return read_pgm(data)


def load_examples(directory, height: int = 64, max_width: int = 512, stroke_width: int = 2) -> list[Example]:
    directory = Path(directory)
    return [
        Example(name, load_image(directory / name, height, max_width, stroke_width), label)
        for name, label in read_manifest(directory)
    ]


def save_pgm(path, img: RasterImage) -> None:
    Path(path).write_bytes(write_pgm(img))
