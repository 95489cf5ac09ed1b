import argparse
import subprocess
import sys

import numpy as np
import pytest

from gfanc import io
from gfanc.cli import build_parser, main
from gfanc.signal_core import Signal, white_noise


@pytest.fixture(scope="module")
def root(tmp_path_factory):
    """A miniature pipeline under one output root (short filters, few tracks)."""
    root = tmp_path_factory.mktemp("runs")
    mp = pytest.MonkeyPatch()
    mp.setenv("GFANC_ROOT", str(root))
    assert main(["pretrain", "--duration", "2", "--taps", "256"]) == 0
    assert main(["decompose", "--filter", str(root / "pretrain" / "broadband.f32"), "--bands", "15", "--out", str(root / "bank")]) == 0
    assert main(["dataset", "--bank", str(root / "bank"), "--train", "6", "--val", "2", "--test", "2", "--jobs", "1"]) == 0
    assert main(["train", "--epochs", "1", "--batch", "4"]) == 0
    yield root
    mp.undo()


def test_pretrain_outputs(root):
    out = root / "pretrain"
    for name in ("broadband.f32", "primary.f32", "secondary.f32", "meta.json", "run.json"):
        assert (out / name).is_file()
    assert io.read_f32(out / "broadband.f32").size == 256
    meta = io.read_json(out / "meta.json")
    assert meta == {"taps": 256, "fs": 16000, "seed": 0, "mu": 1e-4, "epochs": 1, "duration_s": 2.0}


def test_decompose_outputs(root):
    bank = root / "bank"
    assert (bank / "plan.json").is_file()
    assert len(list(bank.glob("band_*.f32"))) == 15


def test_run_json_records_config_and_seeds(root):
    run = io.read_json(root / "dataset" / "run.json")
    assert run["subcommand"] == "dataset"
    assert run["config"]["train"] == 6 and run["config"]["seed"] == 0
    assert run["seeds"] == {"root": 0}
    assert run["config"]["bank"] == str(root / "bank")


def test_train_outputs(root):
    header, rows = io.read_csv(root / "train" / "metrics.csv")
    assert header[:4] == ["epoch", "train_loss", "val_bit_accuracy", "val_exact_match"]
    assert len(rows) == 1
    assert (root / "train" / "weights.gfw").is_file()


def test_compare_with_wav(root, tmp_path):
    wav = tmp_path / "mixed.wav"
    a = white_noise(1, 3 * 16000) * 0.3
    t = np.arange(a.size) / 16000
    io.write_wav(wav, Signal(a + 0.3 * np.sin(2 * np.pi * 440 * t)), "pcm16")
    out = tmp_path / "results"
    rc = main(["compare", "--noise", str(wav), "--methods", "gfanc,sfanc,fxlms", "--bank", str(root / "bank"), "--out", str(out)])
    assert rc == 0
    header, rows = io.read_csv(out / "compare.csv")
    assert header == ["t_start_s", "method", "nr_db", "filter_id_or_label"]
    assert len(rows) == 9
    for m in ("gfanc", "sfanc", "fxlms"):
        assert (out / f"{m}_spec.csv").is_file()


def test_simulate_synthetic(root, tmp_path):
    out = tmp_path / "sim"
    rc = main(["simulate", "--method", "sfanc", "--synth-bands", "2,9", "--duration", "3", "--bank", str(root / "bank"), "--out", str(out), "--wav"])
    assert rc == 0
    header, rows = io.read_csv(out / "frames.csv")
    assert header == ["t_start_s", "nr_db", "filter_id_or_label"] and rows[0][2] == "off"
    assert io.read_f32(out / "residual.f32").size == 48000
    assert io.read_wav(out / "sfanc_residual.wav").sample_rate_hz == 16000


def test_spectrogram(root, tmp_path):
    out = tmp_path / "spec"
    assert main(["spectrogram", "--input", str(root / "pretrain" / "primary.f32"), "--win", "64", "--hop", "32", "--out", str(out)]) == 0
    header, rows = io.read_csv(out / "spectrogram.csv")
    assert len(rows) == 33


def test_reproducible_artifacts(tmp_path):
    for name in ("a", "b"):
        assert main(["pretrain", "--duration", "1", "--taps", "64", "--out", str(tmp_path / name)]) == 0
    for f in ("broadband.f32", "primary.f32", "secondary.f32", "meta.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    ra = io.read_json(tmp_path / "a" / "run.json")
    rb = io.read_json(tmp_path / "b" / "run.json")
    ra["config"].pop("out"), rb["config"].pop("out")
    assert ra == rb


def test_missing_manifest(tmp_path, capsys):
    assert main(["train", "--manifest", str(tmp_path / "missing.json"), "--out", str(tmp_path / "t")]) == 1
    assert "manifest not found" in capsys.readouterr().err


def test_missing_filter(tmp_path, capsys):
    assert main(["decompose", "--filter", str(tmp_path / "nope.f32"), "--out", str(tmp_path / "b")]) == 1
    assert "not found" in capsys.readouterr().err


def test_unknown_flag():
    assert main(["pretrain", "--bogus"]) == 2


def test_unknown_subcommand():
    assert main(["fly"]) == 2


def test_missing_noise_source(tmp_path):
    assert main(["simulate", "--out", str(tmp_path)]) == 2


def test_gain_count_mismatch(tmp_path):
    assert main(["compare", "--synth-bands", "2,9", "--synth-gains", "1", "--out", str(tmp_path)]) == 2


def test_bad_method_list(tmp_path):
    assert main(["compare", "--synth-bands", "2", "--methods", "gfanc,anc", "--out", str(tmp_path)]) == 2


def test_wrong_sample_rate(root, tmp_path, capsys):
    wav = tmp_path / "slow.wav"
    io.write_wav(wav, Signal(np.zeros(16000), 8000))
    assert main(["compare", "--noise", str(wav), "--methods", "fxlms", "--out", str(tmp_path / "o")]) == 1
    assert "sample rate" in capsys.readouterr().err


def test_help_lists_defaults():
    parser = build_parser()
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    assert set(sub.choices) == {"pretrain", "decompose", "dataset", "train", "simulate", "compare", "spectrogram"}
    for name, sp in sub.choices.items():
        text = sp.format_help()
        for action in sp._actions:
            if action.help == argparse.SUPPRESS or not action.option_strings or action.dest == "help":
                continue
            assert action.option_strings[-1] in text, (name, action.dest)
        assert text.count("(default:") >= len([a for a in sp._actions if a.option_strings and a.dest != "help"]) - 1


def test_help_exits_zero():
    assert main(["compare", "--help"]) == 0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gfanc", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()
