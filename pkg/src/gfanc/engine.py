"""Controllers and head-to-head comparison.

The co-processor decides a control filter once per frame from the previous
frame's reference signal; the controller filters sample by sample. Filter
changes are hard switches at frame boundaries, and all delay lines run
continuously across boundaries. Frame 0 is uncontrolled.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import signal as sps

from gfanc import io
from gfanc.adaptive import FxlmsConfig, fxlms_run
from gfanc.cnn.model import CnnModel, predict_weights
from gfanc.errors import InvalidArgument
from gfanc.filterbank import SubFilterBank, reconstruct
from gfanc.signal_core import NrSeries, Signal, as_filter, causal_filter, nr_db, stft_spectrogram

log = logging.getLogger(__name__)

METHODS = ("gfanc", "sfanc", "fxlms")
OFF = "off"
TIE_REL = 1e-9


@dataclass
class SimScenario:
    noise: Signal
    p: np.ndarray
    s: np.ndarray
    bank: SubFilterBank | None = None
    model: CnnModel | None = None
    candidates: list[tuple[str, np.ndarray]] | None = None
    fxlms: FxlmsConfig = field(default_factory=FxlmsConfig)
    frame_s: float = 1.0

    def __post_init__(self):
        self.p, self.s = as_filter(self.p), as_filter(self.s)
        if self.frame_len > len(self.noise):
            raise InvalidArgument("noise shorter than one frame")

    @property
    def frame_len(self) -> int:
        return int(round(self.frame_s * self.noise.sample_rate_hz))

    @property
    def n_frames(self) -> int:
        return -(-len(self.noise) // self.frame_len)

    def frame(self, k: int) -> np.ndarray:
        return self.noise.samples[k * self.frame_len : (k + 1) * self.frame_len]

    def disturbance(self) -> Signal:
        return self.noise.like(causal_filter(self.noise.samples, self.p))


@dataclass
class SimResult:
    method: str
    e: Signal
    d: Signal
    choices: list[str]
    nr: NrSeries
    filters: list[np.ndarray | None] = field(default_factory=list, repr=False)


def generate_filter(t, bank: SubFilterBank) -> np.ndarray:
    """Sum of the sub filters selected by the binary vector ``t``."""
    t = np.asarray(t)
    if t.shape != (bank.n_bands,):
        raise InvalidArgument(f"label has {t.size} entries, bank has {bank.n_bands} bands")
    return (t.astype(np.float64) @ bank.filters) if t.any() else np.zeros(bank.n_taps)


def label_str(t) -> str:
    return "".join(str(int(v)) for v in t)


def control_output(x: np.ndarray, filters: Sequence[np.ndarray | None], frame_len: int) -> np.ndarray:
    """Controller output with one filter per frame and continuous delay lines."""
    y = np.zeros_like(x)
    for k, h in enumerate(filters):
        a, b = k * frame_len, min((k + 1) * frame_len, x.size)
        if h is None or a >= b or not np.any(h):
            continue
        lo = max(0, a - h.size + 1)
        y[a:b] = sps.oaconvolve(x[lo:b], h)[a - lo : b - lo]
    return y


def run_schedule(sc: SimScenario, method: str, filters, choices, d: Signal | None = None) -> SimResult:
    d = sc.disturbance() if d is None else d
    y = control_output(sc.noise.samples, filters, sc.frame_len)
    e = d.like(d.samples - causal_filter(y, sc.s))
    return SimResult(method, e, d, list(choices), nr_db(d, e, sc.frame_s), list(filters))


Labeler = Callable[[np.ndarray], np.ndarray]


def cnn_labeler(model: CnnModel) -> Labeler:
    return lambda frame: predict_weights(model, frame)


def simulate_gfanc(sc: SimScenario, labeler: Labeler | None = None) -> SimResult:
    """GFANC frame loop; ``labeler`` defaults to the scenario's CNN."""
    if sc.bank is None:
        raise InvalidArgument("GFANC needs a filter bank")
    if labeler is None:
        if sc.model is None:
            raise InvalidArgument("GFANC needs a trained model or a labeler")
        if sc.model.n_out != sc.bank.n_bands:
            raise InvalidArgument(f"model predicts {sc.model.n_out} weights, bank has {sc.bank.n_bands} bands")
        if sc.model.input_len != sc.frame_len:
            raise InvalidArgument("model input length differs from the frame length")
        labeler = cnn_labeler(sc.model)
    filters: list[np.ndarray | None] = [None]
    choices = [OFF]
    for k in range(1, sc.n_frames):
        t = labeler(sc.frame(k - 1))
        choice = label_str(t)
        if choice != choices[-1]:
            log.debug("frame %d: label %s", k, choice)
        filters.append(generate_filter(t, sc.bank))
        choices.append(choice)
    return run_schedule(sc, "gfanc", filters, choices)


def default_candidates(bank: SubFilterBank) -> list[tuple[str, np.ndarray]]:
    """The single-band sub filters plus the full broadband filter."""
    cands = [(f"band_{m}", bank.filters[m - 1]) for m in range(1, bank.n_bands + 1)]
    cands.append(("broadband", reconstruct(bank)))
    return cands


def frame_residual_power(sc: SimScenario, d: Signal, k: int, h: np.ndarray) -> float:
    """Residual energy of frame ``k`` had ``h`` been running since the start."""
    a, b = k * sc.frame_len, min((k + 1) * sc.frame_len, len(sc.noise))
    hs = sps.convolve(as_filter(h), sc.s)
    z = causal_filter(sc.noise.samples[:b], hs)[a:b]
    r = d.samples[a:b] - z
    return float(r @ r)


def simulate_sfanc_lite(sc: SimScenario, selector: str = "oracle") -> SimResult:
    """Select one candidate per frame.

    ``oracle`` tries every candidate on the previous frame and keeps the one
    with the least residual energy. ``model`` picks the candidate closest (in
    coefficients) to the filter the CNN would generate.
    """
    cands = sc.candidates if sc.candidates is not None else (default_candidates(sc.bank) if sc.bank else [])
    if not cands:
        raise InvalidArgument("SFANC needs at least one candidate filter")
    if selector not in ("oracle", "model"):
        raise InvalidArgument("selector must be 'oracle' or 'model'")
    d = sc.disturbance()
    filters: list[np.ndarray | None] = [None]
    choices = [OFF]
    for k in range(1, sc.n_frames):
        if selector == "oracle":
            if len(cands) == 1:
                j = 0
            else:
                j = int(np.argmin([frame_residual_power(sc, d, k - 1, h) for _, h in cands]))
        else:
            if sc.model is None or sc.bank is None:
                raise InvalidArgument("model selector needs a model and a bank")
            target = generate_filter(predict_weights(sc.model, sc.frame(k - 1)), sc.bank)
            j = int(np.argmin([np.sum((h - target) ** 2) for _, h in cands]))
        filters.append(np.asarray(cands[j][1], dtype=np.float64))
        choices.append(cands[j][0])
    return run_schedule(sc, "sfanc", filters, choices, d)


def simulate_fxlms(sc: SimScenario, w0=None) -> SimResult:
    d = sc.disturbance()
    e, _ = fxlms_run(sc.noise, sc.p, sc.s, sc.fxlms, w0)
    return SimResult("fxlms", e, d, ["adaptive"] * sc.n_frames, nr_db(d, e, sc.frame_s))


def subset_labels(n_bands: int) -> np.ndarray:
    """Every binary vector of length ``n_bands`` (2**n_bands rows)."""
    return np.array(list(itertools.product((0, 1), repeat=n_bands)), dtype=np.int8)


def oracle_labeler(bank: SubFilterBank, p, s, history: Signal | None = None) -> Labeler:
    """Best binary label for a frame by exhaustive search over all subsets.

    Residual energy is a quadratic form in the label, so every subset is
    scored from one Gram matrix. ``history`` (the full reference signal)
    lets the frame be filtered with its true past; without it the frame is
    filtered from rest. Frames are expected in order, since periodic noise
    can repeat a frame exactly.
    """
    p, s = as_filter(p), as_filter(s)
    labels = subset_labels(bank.n_bands).astype(np.float64)
    full = None if history is None else history.samples
    paths = [sps.convolve(c, s) for c in bank.filters]
    last = {"end": 0}

    def label(frame: np.ndarray) -> np.ndarray:
        if full is not None:
            end = _locate(full, frame, last["end"])
            last["end"] = end
            x, a = full[:end], end - frame.size
        else:
            x, a = frame, 0
        z = np.stack([causal_filter(x, h)[a:] for h in paths])
        dd = causal_filter(x, p)[a:]
        G = z @ z.T
        coarse = np.einsum("ij,jk,ik->i", labels, G, labels) - 2.0 * labels @ (z @ dd)
        # rescore around the best subset so rounding scales with the residual, not the disturbance
        best = labels[np.argmin(coarse)]
        r = dd - best @ z
        delta = labels - best
        cost = r @ r - 2.0 * delta @ (z @ r) + np.einsum("ij,jk,ik->i", delta, G, delta)
        # bands with no energy tie to rounding; prefer the fewest active bands
        near = np.flatnonzero(cost <= cost.min() + TIE_REL * max(r @ r, 1e-300))
        return labels[near[np.argmin(labels[near].sum(axis=1))]].astype(np.int8)

    return label


def _locate(full: np.ndarray, frame: np.ndarray, after: int = 0) -> int:
    """End index of ``frame`` inside ``full``: the first aligned match past ``after``, else the first."""
    n = frame.size
    ends = [e for e in range(n, full.size + 1, n) if np.array_equal(full[e - n : e], frame)]
    if full.size % n and np.array_equal(full[-n:], frame):
        ends.append(full.size)
    if not ends:
        raise InvalidArgument("frame not found in history")
    return next((e for e in ends if e > after), ends[0])


@dataclass
class Comparison:
    results: dict[str, SimResult]

    def rows(self):
        for method, res in self.results.items():
            for k, (t0, v) in enumerate(zip(res.nr.t_start_s, res.nr.values_db)):
                yield (float(t0), method, float(v), res.choices[k] if k < len(res.choices) else "")

    def summary(self) -> dict[str, dict[str, float]]:
        out = {}
        for method, res in self.results.items():
            vals = res.nr.values_db[1:]
            out[method] = {
                "mean_nr_db": float(np.mean(vals)) if vals.size else float("nan"),
                "worst_nr_db": float(np.min(vals)) if vals.size else float("nan"),
            }
        return out

    def write(self, out_dir, win: int = 512, hop: int = 256) -> None:
        out_dir = Path(out_dir)
        io.write_csv(out_dir / "compare.csv", ["t_start_s", "method", "nr_db", "filter_id_or_label"], self.rows())
        summary_rows = [(m, s["mean_nr_db"], s["worst_nr_db"]) for m, s in self.summary().items()]
        io.write_csv(out_dir / "summary.csv", ["method", "mean_nr_db_excl_frame0", "worst_nr_db"], summary_rows)
        for method, res in self.results.items():
            io.write_spectrogram_csv(out_dir / f"{method}_spec.csv", stft_spectrogram(res.e, win, hop))


def compare(sc: SimScenario, methods=METHODS, sfanc_selector: str = "oracle") -> Comparison:
    """Run every requested method on the same noise and paths."""
    results = {}
    for method in methods:
        if method == "gfanc":
            results[method] = simulate_gfanc(sc)
        elif method == "sfanc":
            results[method] = simulate_sfanc_lite(sc, sfanc_selector)
        elif method == "fxlms":
            results[method] = simulate_fxlms(sc)
        else:
            raise InvalidArgument(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    return Comparison(results)
