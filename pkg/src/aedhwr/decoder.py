"""Attention LSTM decoder: emits one symbol per step until ``<end>``.

At step t the cell consumes the embedding of the previous symbol together with
the previous output vector; its new hidden state is the output O_t. Additive
attention scores every annotation vector against O_t, the weighted sum gives
the context C_t, and the symbol distribution is read off concat(O_t, C_t).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .encoder import AnnotationGrid
from .ink import END_ID, PAD_ID, START_ID, UNK_ID, Vocabulary
from .nn import Linear, LSTMCell, Module, parameter
from .raster import RasterImage
from .tensor import ConfigurationError, Tensor, UsageError


@dataclass(frozen=True)
class DecoderConfig:
    hidden_size: int = 256
    embed_dim: int = 256
    attention_dim: int = 256
    max_decode_len: int = 100

    def __post_init__(self):
        if min(self.hidden_size, self.embed_dim, self.attention_dim) < 1:
            raise ConfigurationError("decoder sizes must be positive")
        if self.max_decode_len < 2:
            raise ConfigurationError("max_decode_len must be >= 2")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DecoderState:
    h: Tensor
    c: Tensor
    o_prev: Tensor
    y_prev: np.ndarray  # int64, one symbol index per batch row


@dataclass
class AttentionRecord:
    """Attention weights over the L grid positions and the resulting context vector."""

    weights: np.ndarray
    context: np.ndarray


class AttentionDecoder(Module):
    def __init__(self, vocab_size: int, annotation_dim: int, cfg: DecoderConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.embed = parameter(T.glorot_uniform((vocab_size, cfg.embed_dim), vocab_size, cfg.embed_dim, rng))
        self.lstm = LSTMCell(cfg.embed_dim + cfg.hidden_size, cfg.hidden_size, rng)
        self.init_h = Linear(annotation_dim, cfg.hidden_size, rng)
        self.init_c = Linear(annotation_dim, cfg.hidden_size, rng)
        self.att_query = Linear(cfg.hidden_size, cfg.attention_dim, rng, bias=False)
        self.att_key = Linear(annotation_dim, cfg.attention_dim, rng, bias=False)
        self.att_v = parameter(T.glorot_uniform((cfg.attention_dim, 1), cfg.attention_dim, 1, rng))
        self.out = Linear(cfg.hidden_size + annotation_dim, vocab_size, rng)

    # -- state ---------------------------------------------------------------

    def init_state(self, grid: AnnotationGrid) -> DecoderState:
        """h0, c0 from the mean of the unmasked annotation vectors."""
        valid = ~grid.mask
        counts = valid.sum(axis=1)
        if (counts == 0).any():
            raise UsageError("cannot initialise the decoder from a fully masked annotation grid")
        dtype = grid.vectors.dtype
        weights = (valid / counts[:, None]).astype(dtype)[:, :, None]
        mean = T.sum_(grid.vectors * weights, axis=1)
        n = grid.batch
        return DecoderState(
            h=T.tanh(self.init_h(mean)),
            c=T.tanh(self.init_c(mean)),
            o_prev=Tensor(np.zeros((n, self.cfg.hidden_size), dtype=dtype)),
            y_prev=np.full(n, START_ID, dtype=np.int64),
        )

    def attention_keys(self, grid: AnnotationGrid) -> Tensor:
        """U_a a_j for every position; computed once per image and reused each step."""
        return self.att_key(grid.vectors)

    def step(self, state: DecoderState, grid: AnnotationGrid, keys: Tensor | None = None):
        """One decoding step; returns (logits, new_state, attention record).

        ``new_state.y_prev`` holds the argmax symbol; callers doing teacher
        forcing overwrite it with the reference symbol.
        """
        if keys is None:
            keys = self.attention_keys(grid)
        n, length, _ = grid.vectors.shape
        x = T.concat([T.embedding(self.embed, state.y_prev), state.o_prev], axis=1)
        h, c = self.lstm(x, state.h, state.c)
        query = self.att_query(h)
        hidden = T.tanh(keys + T.reshape(query, (n, 1, self.cfg.attention_dim)))
        scores = T.reshape(T.matmul(hidden, self.att_v), (n, length))
        scores = T.where(~grid.mask, scores, -np.inf)
        alpha = T.softmax(scores, axis=1)
        context = T.sum_(T.reshape(alpha, (n, length, 1)) * grid.vectors, axis=1)
        logits = self.out(T.concat([h, context], axis=1))
        y = np.argmax(logits.data, axis=1).astype(np.int64)
        return logits, DecoderState(h, c, h, y), AttentionRecord(alpha.data, context.data)

    # -- training ------------------------------------------------------------

    def teacher_forced_loss(self, grid: AnnotationGrid, targets) -> Tensor:
        """Mean over steps (then over the batch) of -log p(target symbol).

        ``targets`` is one index sequence per image, each ending in ``<end>``.
        """
        if targets and isinstance(targets[0], (int, np.integer)):
            targets = [targets]
        if len(targets) != grid.batch:
            raise UsageError(f"{len(targets)} targets for a batch of {grid.batch}")
        for tgt in targets:
            tgt = list(tgt)
            if not tgt or tgt[-1] != END_ID:
                raise UsageError("every target sequence must end with <end>")
            if PAD_ID in tgt or END_ID in tgt[:-1]:
                raise UsageError("<pad> or <end> inside a target sequence")
        steps = max(len(t) for t in targets)
        n = grid.batch
        padded = np.full((n, steps), PAD_ID, dtype=np.int64)
        for i, t in enumerate(targets):
            padded[i, : len(t)] = t
        lengths = np.array([len(t) for t in targets], dtype=np.float64)
        dtype = grid.vectors.dtype
        step_weight = ((padded != PAD_ID) / lengths[:, None] / n).astype(dtype)

        state = self.init_state(grid)
        keys = self.attention_keys(grid)
        total = None
        for t in range(steps):
            logits, state, _ = self.step(state, grid, keys)
            picked = T.pick(T.log_softmax(logits, axis=1), padded[:, t])
            term = T.sum_(picked * step_weight[:, t])
            total = term if total is None else total + term
            state.y_prev = padded[:, t]
        return -total

    # -- inference -----------------------------------------------------------

    def greedy(self, grid: AnnotationGrid, max_len: int | None = None) -> list[tuple[list[int], list[AttentionRecord]]]:
        """Greedy decoding of every image in the batch.

        Returns per image the emitted symbol ids (``<end>`` and the other
        control tokens dropped) with one attention record per emitted id.
        Stops at ``<end>`` or after ``max_len`` steps.
        """
        max_len = max_len or self.cfg.max_decode_len
        n = grid.batch
        results: list[tuple[list[int], list[AttentionRecord]]] = [([], []) for _ in range(n)]
        done = np.zeros(n, dtype=bool)
        with T.no_grad():
            state = self.init_state(grid)
            keys = self.attention_keys(grid)
            for _ in range(max_len):
                _, state, rec = self.step(state, grid, keys)
                for i in np.flatnonzero(~done):
                    y = int(state.y_prev[i])
                    if y == END_ID:
                        done[i] = True
                    elif y not in (PAD_ID, START_ID):
                        results[i][0].append(y)
                        results[i][1].append(AttentionRecord(rec.weights[i].copy(), rec.context[i].copy()))
                if done.all():
                    break
        return results

    def decode_greedy(self, grid: AnnotationGrid, vocab: Vocabulary, max_len: int | None = None):
        """Greedy decoding to text; returns a list of (text, attention records)."""
        return [(_ids_to_text(ids, vocab), recs) for ids, recs in self.greedy(grid, max_len)]


def _ids_to_text(ids: list[int], vocab: Vocabulary) -> str:
    return "".join("�" if i == UNK_ID else vocab.symbol(i) for i in ids)


def attention_overlay(
    img: RasterImage, attn: AttentionRecord, grid_shape: tuple[int, int], factor: int = 8
) -> tuple[RasterImage, RasterImage]:
    """Upsample one step's weights to image resolution as a 0-255 heat plane.

    Each grid cell becomes a ``factor`` x ``factor`` block (nearest neighbour);
    the plane is cropped to the image when batch padding made the grid larger.
    """
    gh, gw = grid_shape
    weights = np.asarray(attn.weights, dtype=np.float64).reshape(-1)
    if weights.size != gh * gw:
        raise UsageError(f"attention length {weights.size} does not match grid {gh}x{gw}")
    if img.height > gh * factor or img.width > gw * factor:
        raise UsageError(f"image {img.height}x{img.width} larger than the upsampled grid {gh * factor}x{gw * factor}")
    plane = np.repeat(np.repeat(weights.reshape(gh, gw), factor, axis=0), factor, axis=1)
    heat = np.clip(np.rint(255.0 * plane[: img.height, : img.width]), 0, 255).astype(np.uint8)
    return img, RasterImage(heat)
