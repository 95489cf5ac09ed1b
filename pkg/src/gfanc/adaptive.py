"""LMS machinery: FxLMS pretraining/baseline and the adaptive labelling loop.

The secondary-path estimate used for the filtered reference is the true
secondary path (perfect-knowledge simulation). The disturbance at the error
microphone is ``d = fir_filter(x, p)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.fft import next_fast_len

from gfanc.errors import DivergenceError, InvalidArgument
from gfanc.filterbank import SubFilterBank
from gfanc.signal_core import Signal, as_filter, causal_filter

FXLMS_STEP = 1e-4
W_LIMIT = 1e6
G_LIMIT = 1e3
LABEL_STEP_SCALE = 0.005


@dataclass(frozen=True)
class FxlmsConfig:
    step_size: float = FXLMS_STEP
    n_taps: int = 1024
    leak: float = 0.0

    def __post_init__(self):
        if not self.step_size >= 0:
            raise InvalidArgument("step_size must be non-negative")
        if self.n_taps < 1:
            raise InvalidArgument("n_taps must be >= 1")
        if not 0.0 <= self.leak < 1.0:
            raise InvalidArgument("leak must lie in [0, 1)")


@njit(cache=True)
def _fxlms_kernel(x, xf, d, s, w, mu, leak, limit):
    """Sample-wise FxLMS. Updates ``w`` in place; returns (e, index of divergence or -1)."""
    L = x.shape[0]
    N = w.shape[0]
    Ls = s.shape[0]
    xpad = np.zeros(L + N - 1)
    xpad[N - 1 :] = x
    xfpad = np.zeros(L + N - 1)
    xfpad[N - 1 :] = xf
    yhist = np.zeros(L + Ls - 1)
    e = np.empty(L)
    keep = 1.0 - leak
    for n in range(L):
        base = n + N - 1
        y = 0.0
        for k in range(N):
            y += w[k] * xpad[base - k]
        yhist[n + Ls - 1] = y
        ys = 0.0
        for j in range(Ls):
            ys += s[j] * yhist[n + Ls - 1 - j]
        err = d[n] - ys
        e[n] = err
        if not np.isfinite(err):
            return e, n
        step = mu * err
        for k in range(N):
            wk = keep * w[k] + step * xfpad[base - k]
            w[k] = wk
            if abs(wk) > limit:
                return e, n
    return e, -1


def _run_fxlms(x: np.ndarray, p, s, cfg: FxlmsConfig, w: np.ndarray) -> np.ndarray:
    d = causal_filter(x, p)
    xf = causal_filter(x, s)
    e, bad = _fxlms_kernel(x, xf, d, as_filter(s), w, float(cfg.step_size), float(cfg.leak), W_LIMIT)
    if bad >= 0:
        raise DivergenceError(
            f"FxLMS diverged at sample {bad} (step size {cfg.step_size} too large)"
        )
    return e


def fxlms_pretrain(x: Signal, p, s, cfg: FxlmsConfig = FxlmsConfig(), epochs: int = 1) -> np.ndarray:
    """Train a broadband control filter on ``x`` with ``epochs`` passes of FxLMS."""
    if epochs < 1:
        raise InvalidArgument("epochs must be >= 1")
    w = np.zeros(cfg.n_taps)
    for _ in range(epochs):
        _run_fxlms(x.samples, p, s, cfg, w)
    return w


def fxlms_run(x: Signal, p, s, cfg: FxlmsConfig = FxlmsConfig(), w0=None) -> tuple[Signal, np.ndarray]:
    """Run FxLMS from ``w0`` (zeros by default); returns the residual and final filter."""
    w = np.zeros(cfg.n_taps) if w0 is None else as_filter(w0).copy()
    if w.size != cfg.n_taps:
        raise InvalidArgument("w0 length does not match cfg.n_taps")
    e = _run_fxlms(x.samples, p, s, cfg, w)
    return x.like(e), w


@dataclass(frozen=True)
class LabelAdaptState:
    """Signals driving the combination-weight LMS for one frame."""

    y: np.ndarray  # (L, M) sub filter outputs
    y_filtered: np.ndarray  # (L, M) sub filter outputs through the secondary path
    d: np.ndarray  # (L,) disturbance
    s: np.ndarray
    start: int  # first sample with fully populated delay lines

    @property
    def n_bands(self) -> int:
        return self.y.shape[1]

    def default_step(self) -> float:
        power = float(np.mean(self.y_filtered[self.start :] ** 2))
        if power == 0.0:
            return 0.0
        return LABEL_STEP_SCALE / (self.n_bands * power)


def label_streams(x: Signal, bank: SubFilterBank, p, s) -> LabelAdaptState:
    p, s = as_filter(p), as_filter(s)
    L = len(x)
    # one FFT of the frame serves every band; lengths cover the full linear convolutions
    nfft = next_fast_len(L + bank.n_taps + s.size)
    X = np.fft.rfft(x.samples, nfft)
    H = np.fft.rfft(bank.filters, nfft, axis=1)
    y = np.fft.irfft(X * H, nfft, axis=1)[:, :L].T
    yf = np.fft.irfft(X * H * np.fft.rfft(s, nfft), nfft, axis=1)[:, :L].T
    d = causal_filter(x.samples, p)
    start = max(bank.n_taps + s.size - 2, p.size - 1)
    if start >= len(x):
        raise InvalidArgument("frame shorter than the filter start-up transient")
    return LabelAdaptState(np.ascontiguousarray(y), np.ascontiguousarray(yf), d, s, start)


@njit(cache=True)
def _label_kernel(Y, Yf, d, s, g, mu, passes, tol, start, limit):
    L, M = Y.shape
    Ls = s.shape[0]
    yg = np.zeros(L + Ls - 1)
    used = 0
    for _ in range(passes):
        used += 1
        g_prev = g.copy()
        yg[:] = 0.0
        for n in range(L):
            acc = 0.0
            for m in range(M):
                acc += Y[n, m] * g[m]
            yg[n + Ls - 1] = acc
            if n < start:
                continue
            ys = 0.0
            for j in range(Ls):
                ys += s[j] * yg[n + Ls - 1 - j]
            step = mu * (d[n] - ys)
            for m in range(M):
                g[m] += step * Yf[n, m]
                if not abs(g[m]) <= limit:
                    return used, True
        delta = 0.0
        for m in range(M):
            delta = max(delta, abs(g[m] - g_prev[m]))
        if delta < tol:
            break
    return used, False


def adapt_weights(state: LabelAdaptState, mu: float | None = None, passes: int = 10, tol: float = 1e-3):
    """Run the weight LMS on prepared streams; returns (g, passes used)."""
    mu = state.default_step() if mu is None else float(mu)
    g = np.zeros(state.n_bands)
    used, diverged = _label_kernel(
        state.y, state.y_filtered, state.d, state.s, g, mu, int(passes), float(tol), state.start, G_LIMIT
    )
    if diverged:
        raise DivergenceError(f"combination weights diverged (mu={mu:.3e})")
    return g, used


def label_adapt(
    x: Signal, bank: SubFilterBank, p, s, mu: float | None = None, passes: int = 10, tol: float = 1e-3
) -> np.ndarray:
    """Converged combination weights for one noise frame, starting from zeros.

    ``mu=None`` uses ``0.005 / (M * mean power of the filtered sub outputs)``.
    Adaptation starts once every delay line holds frame samples; up to
    ``passes`` sweeps over the frame, stopping when no weight moved more
    than ``tol`` in a sweep.
    """
    g, _ = adapt_weights(label_streams(x, bank, p, s), mu, passes, tol)
    return g


def binarize(g) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if np.any(np.isnan(g)):
        raise InvalidArgument("NaN combination weight")
    return (g >= 0.5).astype(np.int8)
