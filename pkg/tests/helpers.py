"""Central-difference gradient oracle shared by the test modules."""

import numpy as np

from aedhwr import tensor as T

H = 1e-4
TOL = 1e-3


def rel_error(analytic, numeric, floor=1e-6):
    """Largest elementwise |a - n| / max(|a|, |n|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def numeric_grad(f, arr, h=None, indices=None):
    """d f() / d arr by central differences, perturbing ``arr`` in place.

    ``indices`` restricts the check to some flat positions (others stay NaN).
    """
    h = H if h is None else h
    grad = np.full(arr.shape, np.nan)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size) if indices is None else indices:
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return grad


def check_op(fn, *arrays, seed=0):
    """Max relative error between autodiff and finite differences of sum(fn(*x) * R)."""
    rng = np.random.default_rng(seed)
    with T.precision(np.float64):
        tensors = [T.Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
        out = fn(*tensors)
        weights = rng.normal(size=out.shape)
        loss = T.sum_(out * weights)
        T.backward(loss)

        def value():
            with T.no_grad():
                return float(np.sum(fn(*tensors).data * weights))

        worst = 0.0
        for t in tensors:
            worst = max(worst, rel_error(t.grad, numeric_grad(value, t.data)))
    return worst


def toy_setup(seed: int):
    """Toy recognizer in 64-bit mode plus a two-image batch (one narrower, so masking is live)."""
    from aedhwr.decoder import DecoderConfig
    from aedhwr.encoder import EncoderConfig
    from aedhwr.ink import Vocabulary
    from aedhwr.model import Recognizer
    from aedhwr.raster import RasterImage

    vocab = Vocabulary(list("abcd"))  # 4 reserved + 4 symbols = 8
    with T.precision(np.float64):
        model = Recognizer(vocab, EncoderConfig.toy(), DecoderConfig(16, 8, 16, 10), seed=seed)
    model.astype(np.float64)
    rng = np.random.default_rng(1000 + seed)
    images = [
        RasterImage(np.where(rng.random((16, 32)) < 0.3, 0, 255)),
        RasterImage(np.where(rng.random((16, 16)) < 0.3, 0, 255)),
    ]
    labels = ["".join(rng.choice(list("abcd"), size=rng.integers(1, 4))) for _ in images]
    return model, images, labels


def _same_branches(a, b):
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def model_gradcheck(model, loss_fn, per_tensor=16, seed=0, names=None, max_tries=10):
    """Per-tensor max relative error between backprop and central differences.

    For each parameter tensor: ``per_tensor`` random coordinates (the one with
    the largest analytic gradient first), and the directional derivative along
    a random direction covering the whole tensor. A stencil whose two ends take
    different relu / max-pool branches straddles a kink, where the central
    difference measures no derivative at all; such a coordinate is replaced by
    another one (a direction is redrawn up to ``max_tries`` times).

    Returns ``(errors, skipped)`` keyed by parameter name.
    """
    rng = np.random.default_rng(seed)
    model.zero_grad()
    T.backward(loss_fn())
    grads = {n: p.grad.copy() for n, p in model.named_parameters()}

    def probe():
        with T.no_grad(), T.trace_branches() as log:
            return float(loss_fn().data), log

    def central(p, delta):
        base = p.data.copy()
        p.data[...] = base + delta
        up, up_log = probe()
        p.data[...] = base - delta
        down, down_log = probe()
        p.data[...] = base
        return (up - down) / (2 * H), _same_branches(up_log, down_log)

    errors, skipped = {}, {}
    for name, p in model.named_parameters():
        if names is not None and name not in names:
            continue
        g = grads[name].reshape(-1)
        order = [int(np.argmax(np.abs(g)))]
        order += [int(i) for i in rng.permutation(g.size) if i != order[0]]
        err, done, skips = 0.0, 0, 0
        for i in order:
            if done == min(per_tensor, g.size):
                break
            delta = np.zeros(g.size)
            delta[i] = H
            numeric, smooth = central(p, delta.reshape(p.shape))
            if not smooth:
                skips += 1
                continue
            err = max(err, rel_error(g[i], numeric))
            done += 1
        for _ in range(max_tries):
            direction = rng.normal(size=p.shape)
            direction /= np.linalg.norm(direction)
            numeric, smooth = central(p, H * direction)
            if smooth:
                err = max(err, rel_error(float(np.sum(g * direction.reshape(-1))), numeric))
                break
            skips += 1
        else:
            err = np.inf  # every direction straddled a kink: nothing was verified
        errors[name], skipped[name] = err, skips
    return errors, skipped
