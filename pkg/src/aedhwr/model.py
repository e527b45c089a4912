"""The full recognizer (encoder + decoder + vocabulary) and its checkpoint format.

Checkpoint layout, all integers little-endian::

    b"AEDCKPT1"
    u32 config length, UTF-8 JSON config (encoder, decoder, vocab, vocab hash, epoch, best CER)
    u32 tensor count
    per tensor: u16 name length, UTF-8 name, u8 rank, u32 dims..., float32 values
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .decoder import AttentionDecoder, AttentionRecord, DecoderConfig
from .encoder import AnnotationGrid, DenseNetEncoder, EncoderConfig
from .ink import Vocabulary
from .nn import Module
from .raster import RasterImage
from .tensor import Tensor

MAGIC = b"AEDCKPT1"


class CheckpointError(RuntimeError):
    pass


def make_batch(images: list[RasterImage], multiple: int = 8, dtype=None) -> tuple[Tensor, np.ndarray]:
    """Stack images into N x 1 x H x W (ink = 1.0), right/bottom padded with background.

    Extents are rounded up to ``multiple``; returns the batch and each image's true width.
    """
    if not images:
        raise ValueError("empty batch")
    dtype = dtype or T.default_dtype()
    h = max(im.height for im in images)
    w = max(im.width for im in images)
    h += -h % multiple
    w += -w % multiple
    batch = np.zeros((len(images), 1, h, w), dtype=dtype)
    for i, im in enumerate(images):
        batch[i, 0, : im.height, : im.width] = im.to_input(dtype)
    widths = np.array([im.width for im in images], dtype=np.int64)
    return Tensor(batch, dtype=dtype), widths


class Recognizer(Module):
    def __init__(self, vocab: Vocabulary, enc_cfg: EncoderConfig | None = None,
                 dec_cfg: DecoderConfig | None = None, seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.vocab = vocab
        self.enc_cfg = enc_cfg or EncoderConfig()
        self.dec_cfg = dec_cfg or DecoderConfig()
        self.enc = DenseNetEncoder(self.enc_cfg, rng)
        self.dec = AttentionDecoder(len(vocab), self.enc.out_channels, self.dec_cfg, rng)

    def encode(self, images: list[RasterImage]) -> AnnotationGrid:
        dtype = self.dec.embed.dtype
        batch, widths = make_batch(images, self.enc_cfg.downsample, dtype)
        return self.enc(batch, widths)

    def loss(self, images: list[RasterImage], labels: list[str]) -> Tensor:
        targets = [self.vocab.encode(lb) for lb in labels]
        return self.dec.teacher_forced_loss(self.encode(images), targets)

    def recognize(self, images: list[RasterImage], max_len: int | None = None) -> list[tuple[str, list[AttentionRecord], AnnotationGrid]]:
        """Greedy transcription of each image, with per-symbol attention."""
        was_training = self.training
        self.eval()
        try:
            with T.no_grad():
                grid = self.encode(images)
                decoded = self.dec.decode_greedy(grid, self.vocab, max_len)
        finally:
            self.train(was_training)
        return [(text, recs, grid.select(i)) for i, (text, recs) in enumerate(decoded)]


@dataclass
class Checkpoint:
    encoder: EncoderConfig
    decoder: DecoderConfig
    vocab: Vocabulary
    tensors: dict[str, np.ndarray]
    epoch: int = 0
    best_val_cer: float | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: Recognizer, epoch: int = 0, best_val_cer: float | None = None) -> Checkpoint:
        state = {k: np.array(v, dtype=np.float32) for k, v in model.state_dict().items()}
        return cls(model.enc_cfg, model.dec_cfg, model.vocab, state, epoch, best_val_cer)

    def build_model(self) -> Recognizer:
        model = Recognizer(self.vocab, self.encoder, self.decoder)
        load_weights(model, self)
        return model

    def config_block(self) -> dict:
        return {
            "encoder": self.encoder.to_dict(),
            "decoder": self.decoder.to_dict(),
            "vocab": self.vocab.body,
            "vocab_hash": self.vocab.digest(),
            "epoch": self.epoch,
            "best_val_cer": self.best_val_cer,
            "extra": self.extra,
        }

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(MAGIC)
        cfg = json.dumps(self.config_block(), sort_keys=True, ensure_ascii=False).encode("utf-8")
        buf.write(struct.pack("<I", len(cfg)))
        buf.write(cfg)
        buf.write(struct.pack("<I", len(self.tensors)))
        for name, arr in self.tensors.items():
            raw = name.encode("utf-8")
            arr = np.asarray(arr, dtype="<f4")
            buf.write(struct.pack("<H", len(raw)))
            buf.write(raw)
            buf.write(struct.pack("<B", arr.ndim))
            buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            buf.write(arr.tobytes(order="C"))
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> Checkpoint:
        view = memoryview(data)
        pos = 0

        def take(n: int, what: str):
            nonlocal pos
            if pos + n > len(view):
                raise CheckpointError(f"checkpoint truncated while reading {what}")
            chunk = view[pos : pos + n]
            pos += n
            return chunk

        if bytes(take(len(MAGIC), "magic")) != MAGIC:
            raise CheckpointError("bad checkpoint magic (expected AEDCKPT1)")
        (cfg_len,) = struct.unpack("<I", take(4, "config length"))
        try:
            cfg = json.loads(bytes(take(cfg_len, "config block")).decode("utf-8"))
            vocab = Vocabulary(list(cfg["vocab"]))
            enc = EncoderConfig(**cfg["encoder"])
            dec = DecoderConfig(**cfg["decoder"])
        except (ValueError, KeyError, TypeError) as exc:
            raise CheckpointError(f"unreadable checkpoint config: {exc}") from exc
        if vocab.digest() != cfg.get("vocab_hash"):
            raise CheckpointError("checkpoint vocabulary does not match its recorded hash")
        (count,) = struct.unpack("<I", take(4, "tensor count"))
        tensors: dict[str, np.ndarray] = {}
        for i in range(count):
            (name_len,) = struct.unpack("<H", take(2, f"name of tensor #{i}"))
            name = bytes(take(name_len, f"name of tensor #{i}")).decode("utf-8")
            (rank,) = struct.unpack("<B", take(1, f"tensor {name!r}"))
            dims = struct.unpack(f"<{rank}I", take(4 * rank, f"tensor {name!r}"))
            size = int(np.prod(dims, dtype=np.int64))
            values = np.frombuffer(take(4 * size, f"tensor {name!r}"), dtype="<f4")
            if name in tensors:
                raise CheckpointError(f"tensor {name!r} appears twice")
            tensors[name] = values.reshape(dims).astype(np.float32)
        if pos != len(view):
            raise CheckpointError("trailing bytes after the last tensor")
        return cls(enc, dec, vocab, tensors, int(cfg.get("epoch", 0)), cfg.get("best_val_cer"), cfg.get("extra", {}))


def load_weights(model: Recognizer, ckpt: Checkpoint) -> None:
    """Copy checkpoint tensors into ``model``; mismatches name the offending tensor."""
    own = model.state_dict()
    for name in ckpt.tensors:
        if name not in own:
            raise CheckpointError(f"unknown tensor name {name!r}")
    for name, target in own.items():
        if name not in ckpt.tensors:
            raise CheckpointError(f"checkpoint lacks tensor {name!r}")
        if ckpt.tensors[name].shape != target.shape:
            raise CheckpointError(
                f"tensor {name!r}: checkpoint shape {ckpt.tensors[name].shape} vs model shape {target.shape}"
            )
    model.load_state_dict(ckpt.tensors)


def save_checkpoint(model_or_ckpt, path, epoch: int = 0, best_val_cer: float | None = None) -> None:
    ckpt = model_or_ckpt if isinstance(model_or_ckpt, Checkpoint) else Checkpoint.from_model(model_or_ckpt, epoch, best_val_cer)
    Path(path).write_bytes(ckpt.to_bytes())


def load_checkpoint(path) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return Checkpoint.from_bytes(data)
