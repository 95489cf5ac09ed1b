"""Signal containers, FIR filtering, DFT helpers, noise synthesis and metrics.

Everything here is a pure function of its inputs. Filters are plain 1-D
float64 arrays; waveforms carry their sample rate in :class:`Signal`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import signal as sps

from gfanc.errors import InvalidArgument, NonRealResult

FS_HZ = 16000
NR_CLAMP_DB = 120.0
SPEC_FLOOR_DB = -120.0


@dataclass(frozen=True)
class Signal:
    samples: np.ndarray
    sample_rate_hz: int = FS_HZ

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1 or x.size == 0:
            raise InvalidArgument("signal must be a non-empty 1-D array")
        if not np.all(np.isfinite(x)):
            raise InvalidArgument("signal contains NaN or Inf")
        if int(self.sample_rate_hz) <= 0:
            raise InvalidArgument("sample rate must be positive")
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def like(self, samples) -> "Signal":
        """New signal at the same rate."""
        return Signal(samples, self.sample_rate_hz)


@dataclass(frozen=True)
class NrSeries:
    window_s: float
    values_db: np.ndarray

    @property
    def t_start_s(self) -> np.ndarray:
        return np.arange(self.values_db.size) * self.window_s


@dataclass(frozen=True)
class Spectrogram:
    power_db: np.ndarray  # (win // 2 + 1, frames)
    freqs_hz: np.ndarray
    times_s: np.ndarray


def as_filter(h) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 1 or h.size == 0:
        raise InvalidArgument("filter must be a non-empty 1-D array")
    if not np.all(np.isfinite(h)):
        raise InvalidArgument("filter coefficients must be finite")
    return h


def convolve_full(x, h) -> np.ndarray:
    """Full-length linear convolution (len(x) + len(h) - 1 samples)."""
    return sps.convolve(np.asarray(x, dtype=np.float64), as_filter(h))


def causal_filter(x, h) -> np.ndarray:
    """Array-level causal FIR filtering with zero initial state."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise InvalidArgument("empty input")
    return convolve_full(x, h)[: x.size]


def fir_filter(x: Signal, h) -> Signal:
    """y(n) = sum_k h(k) x(n-k), truncated to len(x)."""
    return x.like(causal_filter(x.samples, h))


def dft(c) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 1 or c.size == 0:
        raise InvalidArgument("dft needs a non-empty 1-D vector")
    return np.fft.fft(c)


def idft(bins, tol: float = 1e-9) -> np.ndarray:
    """Inverse DFT of a conjugate-symmetric spectrum, returned as a real vector.

    The imaginary residual is compared against ``tol`` scaled by the peak of
    the real part (at least 1), so large filters are not rejected for
    rounding noise.
    """
    bins = np.asarray(bins, dtype=np.complex128)
    if bins.ndim != 1 or bins.size == 0:
        raise InvalidArgument("idft needs a non-empty 1-D spectrum")
    out = np.fft.ifft(bins)
    scale = max(1.0, float(np.abs(out.real).max()))
    resid = float(np.abs(out.imag).max())
    if resid > tol * scale:
        raise NonRealResult(f"imaginary residual {resid:.3e} exceeds tolerance")
    return out.real.copy()


def design_bandpass_fir(
    low_hz: float, high_hz: float, taps: int, fs_hz: int = FS_HZ, delay_taps: int | None = None
) -> np.ndarray:
    """Hann-windowed sinc bandpass whose window and sinc share the centre ``delay_taps``.

    The window half-width is the distance from the delay to the nearer end of
    the filter, so the response is linear phase about ``delay_taps``. Default
    delay is the filter centre.
    """
    if delay_taps is None:
        delay_taps = (taps - 1) // 2
    if not 0 < low_hz < high_hz < fs_hz / 2:
        raise InvalidArgument(f"band [{low_hz}, {high_hz}] Hz outside (0, {fs_hz / 2}) Hz")
    if taps < 3:
        raise InvalidArgument("taps must be >= 3")
    if not 0 <= delay_taps < taps:
        raise InvalidArgument("delay_taps must lie in [0, taps)")
    n = np.arange(taps) - delay_taps
    fl, fh = 2.0 * low_hz / fs_hz, 2.0 * high_hz / fs_hz
    h = fh * np.sinc(fh * n) - fl * np.sinc(fl * n)
    half = min(delay_taps, taps - 1 - delay_taps)
    win = np.where(np.abs(n) <= half, 0.5 + 0.5 * np.cos(np.pi * n / (half + 1)), 0.0)
    return h * win


def freq_response_db(h, freqs_hz, fs_hz: int = FS_HZ) -> np.ndarray:
    h = as_filter(h)
    f = np.atleast_1d(np.asarray(freqs_hz, dtype=np.float64))
    k = np.arange(h.size)
    resp = np.exp(-2j * np.pi * np.outer(f, k) / fs_hz) @ h
    return 20.0 * np.log10(np.maximum(np.abs(resp), 1e-300))


def white_noise(seed: int, n: int) -> np.ndarray:
    """Uniform(-1, 1) samples from a counter-based (Philox) generator."""
    rng = np.random.Generator(np.random.Philox(int(seed)))
    return rng.uniform(-1.0, 1.0, int(n))


def _resolve_gains(band_set, gains) -> dict[int, float]:
    bands = sorted(int(b) for b in band_set)
    if gains is None:
        return {b: 1.0 for b in bands}
    if isinstance(gains, Mapping):
        return {b: float(gains[b]) for b in bands}
    gains = list(gains)
    if len(gains) != len(bands):
        raise InvalidArgument("need one gain per band")
    return dict(zip(bands, map(float, gains)))


def gen_subband_noise(
    seed: int,
    band_set,
    gains: Mapping[int, float] | Sequence[float] | None,
    dur_s: float,
    fs_hz: int,
    bank,
) -> Signal:
    """Band-limited noise from the sub control filters of ``bank``.

    A white excitation one filter-length long is circularly filtered by
    ``sum(gain_m * c_m)`` and tiled, i.e. the steady state of filtering a
    periodic white source. Every DFT bin of the period therefore belongs to
    exactly one band, so the active band set is unambiguous. The output is
    scaled to unit peak. Bands are 1-based.
    """
    filters = getattr(bank, "filters", bank)
    band_set = [int(b) for b in band_set]
    if not band_set:
        raise InvalidArgument("band_set is empty")
    gmap = _resolve_gains(band_set, gains)
    n_bands = len(filters)
    if min(gmap) < 1 or max(gmap) > n_bands:
        raise InvalidArgument(f"band index outside [1, {n_bands}]")
    period = len(filters[0])
    shaping = np.zeros(period, dtype=np.complex128)
    for b, g in gmap.items():
        shaping += g * np.fft.fft(filters[b - 1])
    cycle = np.fft.ifft(np.fft.fft(white_noise(seed, period)) * shaping).real
    n = int(round(dur_s * fs_hz))
    if n < 1:
        raise InvalidArgument("duration too short")
    x = np.tile(cycle, -(-n // period))[:n]
    peak = np.abs(x).max()
    if peak == 0.0:
        raise InvalidArgument("selected bands carry no energy")
    return Signal(x / peak, fs_hz)


def nr_db(d: Signal, e: Signal, window_s: float = 1.0) -> NrSeries:
    """Per-window 10 log10(sum d^2 / sum e^2)."""
    if len(d) != len(e) or d.sample_rate_hz != e.sample_rate_hz:
        raise InvalidArgument("disturbance and residual must match in length and rate")
    if window_s <= 0:
        raise InvalidArgument("window_s must be positive")
    win = int(round(window_s * d.sample_rate_hz))
    count = len(d) // win
    vals = np.empty(count)
    for w in range(count):
        sl = slice(w * win, (w + 1) * win)
        pd = float(np.dot(d.samples[sl], d.samples[sl]))
        pe = float(np.dot(e.samples[sl], e.samples[sl]))
        if pd == 0.0:
            vals[w] = 0.0
        elif pe == 0.0:
            vals[w] = NR_CLAMP_DB
        else:
            vals[w] = min(10.0 * np.log10(pd / pe), NR_CLAMP_DB)
    return NrSeries(float(window_s), vals)


def stft_spectrogram(x: Signal, win: int = 512, hop: int = 256) -> Spectrogram:
    """One-sided Hann STFT power in dB.

    Cells are scaled so that summing a column in linear units gives the mean
    power of that frame.
    """
    if win > len(x) or win < 2:
        raise InvalidArgument("window longer than signal")
    if hop < 1:
        raise InvalidArgument("hop must be >= 1")
    w = np.hanning(win + 2)[1:-1]  # strictly positive periodic-like Hann
    frames = np.lib.stride_tricks.sliding_window_view(x.samples, win)[::hop]
    spec = np.fft.rfft(frames * w, axis=1)
    power = np.abs(spec) ** 2 / (win * np.sum(w**2))
    power[:, 1 : (win + 1) // 2] *= 2.0
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(power)
    db = np.maximum(db, SPEC_FLOOR_DB).T
    freqs = np.fft.rfftfreq(win, 1.0 / x.sample_rate_hz)
    times = np.arange(frames.shape[0]) * hop / x.sample_rate_hz
    return Spectrogram(db, freqs, times)


PRIMARY_DELAY = 64
SECONDARY_DELAY = 32
PATH_TAPS = 255
PATH_BAND_HZ = (20.0, 7980.0)


def acoustic_paths(
    fs_hz: int = FS_HZ,
    taps: int = PATH_TAPS,
    primary_delay: int = PRIMARY_DELAY,
    secondary_delay: int = SECONDARY_DELAY,
) -> tuple[np.ndarray, np.ndarray]:
    """Default (primary, secondary) path impulse responses: 20-7980 Hz bandpasses."""
    low, high = PATH_BAND_HZ
    p = design_bandpass_fir(low, high, taps, fs_hz, primary_delay)
    s = design_bandpass_fir(low, high, taps, fs_hz, secondary_delay)
    return p, s
