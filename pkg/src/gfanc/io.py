"""File formats: WAV, headerless float32 tracks/filters, CSV and JSON."""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from gfanc.errors import InvalidArgument
from gfanc.signal_core import NrSeries, Signal, Spectrogram


def write_f32(path, values) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.asarray(values, dtype="<f4").tofile(path)


def read_f32(path) -> np.ndarray:
    """Headerless little-endian float32, returned as float64."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{path} not found")
    return np.fromfile(path, dtype="<f4").astype(np.float64)


def read_wav(path) -> Signal:
    """Read a PCM16 or float32 WAV. Multichannel files are averaged to mono."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{path} not found")
    rate, data = wavfile.read(path)
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        x = data.astype(np.float64)
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    else:
        raise InvalidArgument(f"unsupported WAV sample type {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    return Signal(x, int(rate))


def write_wav(path, sig: Signal, fmt: str = "float32") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "float32":
        data = sig.samples.astype("<f4")
    elif fmt == "pcm16":
        data = np.round(np.clip(sig.samples, -1.0, 32767 / 32768) * 32768.0).astype("<i2")
    else:
        raise InvalidArgument(f"unknown WAV format {fmt!r}")
    wavfile.write(path, sig.sample_rate_hz, data)


def fmt_num(v) -> str:
    return repr(float(v))


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt_num(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_nr_csv(path, nr: NrSeries) -> None:
    write_csv(path, ["t_start_s", "nr_db"], zip(nr.t_start_s, nr.values_db))


def write_spectrogram_csv(path, spec: Spectrogram) -> None:
    header = ["freq_hz"] + [fmt_num(t) for t in spec.times_s]
    rows = ([f, *row] for f, row in zip(spec.freqs_hz, spec.power_db))
    write_csv(path, header, rows)


def write_json(path, obj) -> None:
    """Write JSON atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{path} not found")
    with open(path) as fh:
        return json.load(fh)
