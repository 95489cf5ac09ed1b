"""Command-line entry point: ``gfanc <subcommand> [options]``.

Every subcommand writes its artifacts plus ``run.json`` (the fully resolved
configuration) into ``--out``. Inputs default to the conventional locations
under the output root (``$GFANC_ROOT``, else ``./gfanc_runs``), so the stages
chain without extra flags::

    gfanc pretrain && gfanc decompose && gfanc dataset && gfanc train
    gfanc compare --synth-bands 2,9 --duration 10
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from gfanc import __version__, io
from gfanc.errors import GfancError, InvalidArgument
from gfanc.signal_core import (
    FS_HZ,
    PATH_TAPS,
    PRIMARY_DELAY,
    SECONDARY_DELAY,
    Signal,
    acoustic_paths,
    gen_subband_noise,
    stft_spectrogram,
    white_noise,
)

ROOT_ENV = "GFANC_ROOT"
WEIGHTS_NAME = "weights.gfw"

log = logging.getLogger("gfanc")


def out_root() -> Path:
    return Path(os.environ.get(ROOT_ENV, "gfanc_runs"))


# ---------------------------------------------------------------- helpers


def _require_file(path: Path, what: str) -> Path:
    if not Path(path).is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return Path(path)


def _load_paths(directory):
    """(p, s) from ``primary.f32``/``secondary.f32``; the default design when ``directory`` is None."""
    if directory is None:
        return acoustic_paths()
    d = Path(directory)
    return (
        io.read_f32(_require_file(d / "primary.f32", "primary path")),
        io.read_f32(_require_file(d / "secondary.f32", "secondary path")),
    )


def _load_bank(directory):
    from gfanc.filterbank import load_bank

    _require_file(Path(directory) / "plan.json", "filter bank plan")
    return load_bank(directory)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _method_list(text: str) -> list[str]:
    from gfanc.engine import METHODS

    methods = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise argparse.ArgumentTypeError(f"methods must be drawn from {','.join(METHODS)}")
    return methods


def _resolved_config(args) -> dict:
    cfg = {}
    for key, value in sorted(vars(args).items()):
        if key == "func":
            continue
        cfg[key] = str(value) if isinstance(value, Path) else value
    return cfg


def _write_run(out: Path, args, seeds: dict, extra: dict | None = None) -> None:
    run = {"version": __version__, "subcommand": args.command, "config": _resolved_config(args), "seeds": seeds}
    if extra:
        run.update(extra)
    io.write_json(out / "run.json", run)


# ---------------------------------------------------------------- subcommands


def cmd_pretrain(args) -> dict:
    from gfanc.adaptive import FxlmsConfig, fxlms_pretrain

    out = args.out
    p, s = acoustic_paths(args.fs, args.path_taps, args.primary_delay, args.secondary_delay)
    x = Signal(white_noise(args.seed, int(round(args.duration * args.fs))), args.fs)
    cfg = FxlmsConfig(step_size=args.mu, n_taps=args.taps)
    c = fxlms_pretrain(x, p, s, cfg, epochs=args.epochs)
    io.write_f32(out / "broadband.f32", c)
    io.write_f32(out / "primary.f32", p)
    io.write_f32(out / "secondary.f32", s)
    io.write_json(
        out / "meta.json",
        {"taps": args.taps, "fs": args.fs, "seed": args.seed, "mu": args.mu, "epochs": args.epochs, "duration_s": args.duration},
    )
    return {"noise": args.seed}


def cmd_decompose(args) -> dict:
    from gfanc.filterbank import decompose, save_bank

    c = io.read_f32(_require_file(args.filter, "filter"))
    save_bank(decompose(c, args.bands), args.out)
    return {}


def cmd_dataset(args) -> dict:
    from gfanc.dataset import DESK_SCALE, PAPER_SCALE, build_dataset

    bank = _load_bank(args.bank)
    p, s = _load_paths(args.paths)
    counts = dict(PAPER_SCALE if args.paper_scale else DESK_SCALE)
    for split in counts:
        override = getattr(args, split)
        if override is not None:
            counts[split] = override
    manifest = build_dataset(
        args.out, bank, p, s, counts, args.seed, args.jobs, args.bank, args.paths, args.passes, args.tol
    )
    log.info("dataset: %s tracks, %d regenerated", manifest["splits"], manifest["regenerated"])
    return {"root": args.seed}


def cmd_train(args) -> dict:
    from gfanc.cnn import TrainConfig, build_default, param_count, save_model, train
    from gfanc.dataset import load_manifest

    manifest = load_manifest(args.manifest)
    model = build_default(args.seed, n_out=manifest["n_bands"])
    log.info("model parameters: %d", param_count(model))
    cfg = TrainConfig(lr=args.lr, batch=args.batch, epochs=args.epochs, seed=args.seed)
    best, history = train(model, manifest, cfg)
    save_model(best, args.out / WEIGHTS_NAME)
    io.write_csv(
        args.out / "metrics.csv",
        ["epoch", "train_loss", "val_bit_accuracy", "val_exact_match", "val_loss"],
        [(m.epoch, m.train_loss, m.val_bit_accuracy, m.val_exact_match, m.val_loss) for m in history],
    )
    return {"init": args.seed, "shuffle": args.seed}


def _scenario(args, methods):
    from gfanc.adaptive import FxlmsConfig
    from gfanc.cnn import load_model
    from gfanc.engine import SimScenario

    p, s = _load_paths(args.paths)
    needs_bank = args.synth_bands is not None or any(m in ("gfanc", "sfanc") for m in methods)
    bank = _load_bank(args.bank) if needs_bank else None
    if args.noise is not None:
        noise = io.read_wav(_require_file(args.noise, "noise file"))
        if noise.sample_rate_hz != FS_HZ:
            raise InvalidArgument(f"noise sample rate {noise.sample_rate_hz} Hz, expected {FS_HZ} Hz")
    else:
        bands = list(range(1, bank.n_bands + 1)) if args.synth_bands == [0] else args.synth_bands
        noise = gen_subband_noise(args.seed, bands, args.synth_gains, args.duration, FS_HZ, bank)
    model = None
    if "gfanc" in methods:
        model = load_model(_require_file(Path(args.weights), "weights"))
    fx = FxlmsConfig(step_size=args.mu, n_taps=args.taps)
    return SimScenario(noise, p, s, bank=bank, model=model, fxlms=fx, frame_s=args.frame)


def _save_residuals(out: Path, results, enabled: bool) -> None:
    if not enabled:
        return
    for method, res in results.items():
        io.write_wav(out / f"{method}_residual.wav", res.e)


def cmd_simulate(args) -> dict:
    from gfanc.engine import Comparison, compare

    sc = _scenario(args, [args.method])
    table: Comparison = compare(sc, [args.method], args.selector)
    res = table.results[args.method]
    io.write_csv(
        args.out / "frames.csv",
        ["t_start_s", "nr_db", "filter_id_or_label"],
        [(t, v, c) for t, _, v, c in table.rows()],
    )
    io.write_f32(args.out / "residual.f32", res.e.samples)
    _save_residuals(args.out, table.results, args.wav)
    return {"noise": args.seed}


def cmd_compare(args) -> dict:
    from gfanc.engine import compare

    sc = _scenario(args, args.methods)
    table = compare(sc, args.methods, args.selector)
    table.write(args.out, args.win, args.hop)
    _save_residuals(args.out, table.results, args.wav)
    for method, summ in table.summary().items():
        print(f"{method}: mean NR {summ['mean_nr_db']:.2f} dB, worst frame {summ['worst_nr_db']:.2f} dB")
    return {"noise": args.seed}


def cmd_spectrogram(args) -> dict:
    path = _require_file(args.input, "input")
    if path.suffix.lower() == ".f32":
        sig = Signal(io.read_f32(path), args.fs)
    else:
        sig = io.read_wav(path)
    io.write_spectrogram_csv(args.out / "spectrogram.csv", stft_spectrogram(sig, args.win, args.hop))
    return {}


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    root = out_root()
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="gfanc", description="Generative fixed-filter ANC lab", formatter_class=fmt)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text, formatter_class=fmt)
        sp.add_argument("--out", type=Path, default=root / name, help="output directory")
        sp.set_defaults(func=func)
        return sp

    def add_paths(sp):
        sp.add_argument("--paths", type=Path, default=root / "pretrain", help="directory with primary.f32 and secondary.f32")

    sp = add("pretrain", cmd_pretrain, "train the broadband control filter with FxLMS on white noise")
    sp.add_argument("--taps", type=int, default=1024, help="control filter length N")
    sp.add_argument("--mu", type=float, default=1e-4, help="FxLMS step size")
    sp.add_argument("--duration", type=float, default=30.0, help="training noise length in seconds")
    sp.add_argument("--epochs", type=int, default=1, help="passes over the training noise")
    sp.add_argument("--seed", type=int, default=0, help="root seed")
    sp.add_argument("--fs", type=int, default=FS_HZ, help="sample rate in Hz")
    sp.add_argument("--path-taps", type=int, default=PATH_TAPS, help="length of both acoustic paths")
    sp.add_argument("--primary-delay", type=int, default=PRIMARY_DELAY, help="primary path delay in samples")
    sp.add_argument("--secondary-delay", type=int, default=SECONDARY_DELAY, help="secondary path delay in samples")

    sp = add("decompose", cmd_decompose, "split a broadband filter into sub-band filters")
    sp.add_argument("--filter", type=Path, default=root / "pretrain" / "broadband.f32", help="broadband filter (.f32)")
    sp.add_argument("--bands", type=int, default=15, help="number of sub-bands M")

    sp = add("dataset", cmd_dataset, "synthesize and label the noise dataset")
    sp.add_argument("--bank", type=Path, default=root / "decompose", help="filter bank directory")
    add_paths(sp)
    sp.add_argument("--paper-scale", action="store_true", help="80000/2000/2000 tracks instead of 2000/200/200")
    sp.add_argument("--train", type=int, default=None, help="override the training track count")
    sp.add_argument("--val", type=int, default=None, help="override the validation track count")
    sp.add_argument("--test", type=int, default=None, help="override the test track count")
    sp.add_argument("--seed", type=int, default=0, help="root seed")
    sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes")
    sp.add_argument("--passes", type=int, default=10, help="max labelling passes per track")
    sp.add_argument("--tol", type=float, default=1e-3, help="labelling early-stop tolerance")

    sp = add("train", cmd_train, "train the CNN on a labelled dataset")
    sp.add_argument("--manifest", type=Path, default=root / "dataset" / "manifest.json", help="dataset manifest")
    sp.add_argument("--epochs", type=int, default=30, help="training epochs")
    sp.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate")
    sp.add_argument("--batch", type=int, default=32, help="mini-batch size")
    sp.add_argument("--seed", type=int, default=0, help="root seed")

    def add_sim(sp):
        add_paths(sp)
        sp.add_argument("--bank", type=Path, default=root / "decompose", help="filter bank directory")
        sp.add_argument("--weights", type=Path, default=root / "train" / WEIGHTS_NAME, help="trained CNN weights")
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--noise", type=Path, default=None, help="reference noise WAV (16 kHz)")
        src.add_argument("--synth-bands", type=_int_list, default=None, help="synthesize noise in these bands (0 = all)")
        sp.add_argument("--synth-gains", type=_float_list, default=None, help="per-band gains for --synth-bands")
        sp.add_argument("--duration", type=float, default=10.0, help="synthetic noise length in seconds")
        sp.add_argument("--seed", type=int, default=0, help="root seed")
        sp.add_argument("--frame", type=float, default=1.0, help="co-processor frame length in seconds")
        sp.add_argument("--taps", type=int, default=1024, help="FxLMS filter length")
        sp.add_argument("--mu", type=float, default=1e-4, help="FxLMS step size")
        sp.add_argument("--selector", choices=("oracle", "model"), default="oracle", help="SFANC candidate selector")
        sp.add_argument("--wav", action="store_true", help="also write residuals as WAV")

    sp = add("simulate", cmd_simulate, "run one controller on a noise signal")
    sp.add_argument("--method", choices=("gfanc", "sfanc", "fxlms"), default="gfanc", help="controller")
    add_sim(sp)

    sp = add("compare", cmd_compare, "run several controllers on the same noise")
    sp.add_argument("--methods", type=_method_list, default=["gfanc", "sfanc", "fxlms"], help="comma-separated controllers")
    sp.add_argument("--win", type=int, default=512, help="spectrogram window")
    sp.add_argument("--hop", type=int, default=256, help="spectrogram hop")
    add_sim(sp)

    sp = add("spectrogram", cmd_spectrogram, "power spectrogram of a WAV or .f32 signal")
    sp.add_argument("--input", type=Path, required=True, help="signal file")
    sp.add_argument("--win", type=int, default=512, help="window length")
    sp.add_argument("--hop", type=int, default=256, help="hop length")
    sp.add_argument("--fs", type=int, default=FS_HZ, help="sample rate for .f32 input")
    return parser


def _validate(parser, args) -> None:
    if args.command in ("simulate", "compare"):
        if args.noise is None and args.synth_bands is None:
            parser.error("one of --noise or --synth-bands is required")
        if args.synth_gains is not None and (args.synth_bands is None or len(args.synth_gains) != len(args.synth_bands)):
            parser.error("--synth-gains needs one gain per --synth-bands entry")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        _validate(parser, args)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        seeds = args.func(args)
        _write_run(args.out, args, seeds)
    except (GfancError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"gfanc {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
