"""``aedhwr`` command line: gen, render, train, recognize, attn-dump, eval.

Exit codes: 0 success, 1 data error, 2 usage error, 3 model/checkpoint error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import data
from .decoder import attention_overlay
from .ink import InkFormatError, build_vocab, load_vocab, nfc, parse_ink
from .metrics import EvalReport
from .model import CheckpointError, Recognizer, load_checkpoint
from .raster import PGMFormatError, render
from .synth import default_alphabet, generate_corpus, generate_lines
from .tensor import ConfigurationError, UsageError
from .train import TrainingDiverged, evaluate, finetune, train

EXIT_DATA, EXIT_USAGE, EXIT_MODEL = 1, 2, 3


class CLIError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _pair(text: str) -> tuple[int, int]:
    try:
        parts = [int(p) for p in text.replace("-", ",").split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}") from None
    if len(parts) == 1:
        parts *= 2
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}")
    return parts[0], parts[1]


def _overrides(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise CLIError(f"--set expects key=value, got {item!r}", EXIT_USAGE)
        out[key.strip()] = value.strip()
    return out


def _load_run_config(args):
    from .config import ConfigError, RunConfig

    try:
        return RunConfig.load(args.config, _overrides(args.set))
    except (ConfigError, ConfigurationError) as exc:
        raise CLIError(f"config: {exc}", EXIT_USAGE) from exc
    except OSError as exc:
        raise CLIError(f"cannot read config: {exc}", EXIT_USAGE) from exc


def _checkpoint(path):
    try:
        return load_checkpoint(path)
    except CheckpointError as exc:
        raise CLIError(str(exc), EXIT_MODEL) from exc


def _load_dir(directory, render_opts):
    try:
        return data.load_examples(directory, **render_opts)
    except FileNotFoundError as exc:
        raise CLIError(f"missing file: {exc.filename}", EXIT_DATA) from exc
    except (InkFormatError, PGMFormatError, ValueError) as exc:
        raise CLIError(f"{directory}: {exc}", EXIT_DATA) from exc


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    if args.n < 1:
        raise CLIError("--n must be at least 1", EXIT_USAGE)
    try:
        if args.lines:
            alphabet = default_alphabet(with_space=True)
            samples = generate_lines(args.seed, args.n, alphabet, args.words_per_line, args.word_len, args.mark_prob)
        else:
            alphabet = default_alphabet()
            samples = generate_corpus(args.seed, args.n, alphabet, args.word_len, args.mark_prob)
    except ConfigurationError as exc:
        raise CLIError(str(exc), EXIT_USAGE) from exc
    try:
        data.write_corpus(args.out_dir, samples, alphabet)
    except OSError as exc:
        raise CLIError(f"cannot write to {args.out_dir}: {exc}", EXIT_USAGE) from exc
    return 0


def _expand_inputs(paths) -> list[Path]:
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out.extend(sorted(p.glob("*.ink")))
        else:
            out.append(p)
    return out


def cmd_render(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failed = False
    for path in _expand_inputs(args.inputs):
        try:
            sample = parse_ink(path.read_text(encoding="utf-8"))
            img = render(sample, args.height, args.stroke_width, args.max_width)
        except (OSError, UnicodeDecodeError, InkFormatError, ValueError) as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            failed = True
            continue
        target = out_dir / (path.stem + ".pgm")
        data.save_pgm(target, img)
        print(f"{target} {img.width}x{img.height}")
    return EXIT_DATA if failed else 0


def cmd_train(args) -> int:
    from .plotting import plot_training_curves

    cfg = _load_run_config(args)
    render_opts = cfg.render_options()
    train_set = _load_dir(args.train_dir, render_opts)
    val_set = _load_dir(args.val_dir, render_opts)
    if not train_set or not val_set:
        raise CLIError("training and validation manifests must list at least one sample", EXIT_USAGE)
    tcfg = cfg.train_config()

    def log(entry):
        print(entry.line(), flush=True)

    try:
        if args.init_ckpt:
            ckpt = _checkpoint(args.init_ckpt)
            enc = cfg.encoder_config() if cfg.has_section("encoder") else ckpt.encoder
            dec = cfg.decoder_config() if cfg.has_section("decoder") else ckpt.decoder
            model = Recognizer(ckpt.vocab, enc, dec, seed=cfg.model_seed())
            best = finetune(ckpt, model, train_set, val_set, tcfg, log)
        else:
            vocab_file = Path(args.train_dir) / data.VOCAB
            if vocab_file.exists():
                vocab = load_vocab(vocab_file.read_text(encoding="utf-8"))
            else:
                vocab = build_vocab(ex.label for ex in train_set + val_set)
            model = Recognizer(vocab, cfg.encoder_config(), cfg.decoder_config(), seed=cfg.model_seed())
            best = train(model, train_set, val_set, tcfg, log)
    except CheckpointError as exc:
        raise CLIError(str(exc), EXIT_MODEL) from exc
    except TrainingDiverged as exc:
        raise CLIError(f"training diverged: {exc}", EXIT_MODEL) from exc

    history = best.extra.get("history", [])
    best.extra = {"render": render_opts}
    out = Path(args.out_ckpt)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(best.to_bytes())
    if history:
        rows = ["epoch\tlr\ttrain_loss\tval_cer\tval_wer\n"]
        rows += [f"{h['epoch']}\t{h['lr']:g}\t{h['train_loss']:.6f}\t{h['val_cer']:.4f}\t{h['val_wer']:.4f}\n" for h in history]
        out.with_suffix(".history.tsv").write_text("".join(rows), encoding="utf-8")
        if not args.no_figures:
            plot_training_curves(history, out.with_suffix(".curves.png"))
    return 0


def _model_and_render(args):
    ckpt = _checkpoint(args.ckpt)
    if getattr(args, "vocab", None):
        vocab = load_vocab(Path(args.vocab).read_text(encoding="utf-8"))
        if vocab.digest() != ckpt.vocab.digest():
            raise CLIError("vocabulary file does not match the checkpoint's vocabulary hash", EXIT_MODEL)
    try:
        model = ckpt.build_model()
    except CheckpointError as exc:
        raise CLIError(str(exc), EXIT_MODEL) from exc
    render_opts = dict(ckpt.extra.get("render", {"height": 64, "max_width": 512, "stroke_width": 2}))
    if getattr(args, "height", None):
        render_opts["height"] = args.height
    return model, render_opts


def dump_attention(out_dir, img, text: str, records, grid, factor: int) -> None:
    """Write image.pgm, step_<t>.pgm heat planes, manifest.tsv and attention.png."""
    from .plotting import plot_attention_steps

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data.save_pgm(out / "image.pgm", img)
    heats = []
    rows = ["step\tsymbol\targmax\n"]
    for t, (sym, rec) in enumerate(zip(text, records), start=1):
        _, heat = attention_overlay(img, rec, (grid.height, grid.width), factor)
        data.save_pgm(out / f"step_{t}.pgm", heat)
        heats.append(heat.pixels.astype(float))
        rows.append(f"{t}\t{sym}\t{int(rec.weights.argmax())}\n")
    (out / "manifest.tsv").write_text("".join(rows), encoding="utf-8")
    plot_attention_steps(img.pixels, heats, list(text), out / "attention.png")


def _recognize(args, inputs, dump_dir) -> int:
    model, render_opts = _model_and_render(args)
    failed = False
    for i, path in enumerate(inputs):
        try:
            img = data.load_image(path, render_opts["height"], render_opts["max_width"], render_opts["stroke_width"])
        except (OSError, UnicodeDecodeError, InkFormatError, PGMFormatError, ValueError) as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            failed = True
            continue
        text, records, grid = model.recognize([img])[0]
        print(nfc(text), flush=True)
        if dump_dir:
            target = Path(dump_dir) if len(inputs) == 1 else Path(dump_dir) / Path(path).stem
            dump_attention(target, img, text, records, grid, model.enc_cfg.downsample)
    return EXIT_DATA if failed else 0


def cmd_recognize(args) -> int:
    return _recognize(args, args.inputs, args.dump_attn)


def cmd_attn_dump(args) -> int:
    return _recognize(args, [args.input], args.out_dir)


def cmd_eval(args) -> int:
    model, render_opts = _model_and_render(args)
    try:
        test_set = _load_dir(args.test_dir, render_opts)
    except CLIError as exc:
        if not (Path(args.test_dir) / data.MANIFEST).exists():
            raise CLIError(f"no {data.MANIFEST} in {args.test_dir}", EXIT_USAGE) from exc
        raise
    if not test_set:
        raise CLIError("test set is empty", EXIT_USAGE)
    report: EvalReport = evaluate(model, test_set)
    write_report(report, args.report, figure=not args.no_figures)
    print(report.summary())
    return 0


def write_report(report: EvalReport, path, figure: bool = True) -> None:
    from .plotting import plot_error_histogram

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_tsv(), encoding="utf-8")
    if figure:
        plot_error_histogram([r.ned_char for r in report.rows], [r.ned_word for r in report.rows],
                             path.with_suffix(".png"))


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aedhwr", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic INKTEXT corpus")
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--out-dir", required=True)
    g.add_argument("--word-len", type=_pair, default=(2, 5), help="word length range 'lo,hi'")
    g.add_argument("--mark-prob", type=float, default=0.3)
    g.add_argument("--lines", action="store_true", help="multi-word lines instead of single words")
    g.add_argument("--words-per-line", type=_pair, default=(2, 3))
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("render", help="rasterize INKTEXT files to PGM")
    r.add_argument("--in", dest="inputs", nargs="+", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--height", type=int, default=64)
    r.add_argument("--max-width", type=int, default=512)
    r.add_argument("--stroke-width", type=int, default=2)
    r.set_defaults(func=cmd_render)

    t = sub.add_parser("train", help="train (or fine-tune with --init-ckpt)")
    t.add_argument("--config")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    t.add_argument("--train-dir", required=True)
    t.add_argument("--val-dir", required=True)
    t.add_argument("--out-ckpt", required=True)
    t.add_argument("--init-ckpt")
    t.add_argument("--no-figures", action="store_true")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("recognize", help="transcribe ink or PGM inputs")
    c.add_argument("--ckpt", required=True)
    c.add_argument("--in", dest="inputs", nargs="+", required=True)
    c.add_argument("--dump-attn")
    c.add_argument("--vocab")
    c.add_argument("--height", type=int)
    c.set_defaults(func=cmd_recognize)

    a = sub.add_parser("attn-dump", help="per-step attention heat maps for one input")
    a.add_argument("--ckpt", required=True)
    a.add_argument("--in", dest="input", required=True)
    a.add_argument("--out-dir", required=True)
    a.add_argument("--vocab")
    a.add_argument("--height", type=int)
    a.set_defaults(func=cmd_attn_dump)

    e = sub.add_parser("eval", help="CER/WER over a manifest directory")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--test-dir", required=True)
    e.add_argument("--report", required=True)
    e.add_argument("--vocab")
    e.add_argument("--no-figures", action="store_true")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"aedhwr {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except (UsageError, ConfigurationError) as exc:
        print(f"aedhwr {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
