"""Slow but obviously-correct reference implementations used by the tests.

None of these import the code under test.
"""

import numpy as np
from scipy import linalg


def naive_dft(c):
    c = np.asarray(c, dtype=np.float64)
    n = c.size
    out = np.zeros(n, dtype=np.complex128)
    for k in range(n):
        for j in range(n):
            out[k] += c[j] * np.exp(-2j * np.pi * k * j / n)
    return out


def brute_filter(x, h):
    """y(n) = sum_k h(k) x(n-k), zero initial state, len(x) samples."""
    y = np.zeros(len(x))
    for n in range(len(x)):
        for k in range(len(h)):
            if n - k >= 0:
                y[n] += h[k] * x[n - k]
    return y


def lag_matrix(x, n_taps):
    """Rows are [x(n), x(n-1), ..., x(n-n_taps+1)]."""
    x = np.asarray(x, dtype=np.float64)
    col = x
    row = np.zeros(n_taps)
    row[0] = x[0]
    return linalg.toeplitz(col, row)


def wiener_filter(x, p, s, n_taps):
    """Block least-squares control filter by the normal equations.

    Minimises sum (d - (x*s)*w)^2 with d = x*p, using lagged dot products
    for the (Toeplitz) autocorrelation matrix and a dense solve.
    """
    x = np.asarray(x, dtype=np.float64)
    d = np.convolve(x, p)[: x.size]
    xf = np.convolve(x, s)[: x.size]
    n = xf.size
    r = np.array([xf[: n - k] @ xf[k:] for k in range(n_taps)])
    b = np.array([d[k:] @ xf[: n - k] for k in range(n_taps)])
    return np.linalg.solve(linalg.toeplitz(r), b)


def normal_equation_weights(y_filtered, d, start=0):
    """g minimising ||d - Y' g||^2 over samples [start, L), min-norm solution."""
    Y = np.asarray(y_filtered)[start:]
    dd = np.asarray(d)[start:]
    G = Y.T @ Y
    b = Y.T @ dd
    # eigen-decomposition pseudo-inverse; directions with no energy get zero weight
    vals, vecs = np.linalg.eigh(G)
    keep = vals > vals.max() * 1e-10
    return vecs[:, keep] @ ((vecs[:, keep].T @ b) / vals[keep])


def naive_conv1d(x, W, b, stride, pad):
    """x: (L, Cin); W: (Cout, Cin, k). Per-element loops."""
    L, cin = x.shape
    cout, _, k = W.shape
    xp = np.zeros((L + 2 * pad, cin))
    xp[pad : pad + L] = x
    lout = (L + 2 * pad - k) // stride + 1
    out = np.zeros((lout, cout))
    for t in range(lout):
        for o in range(cout):
            acc = b[o]
            for c in range(cin):
                for j in range(k):
                    acc += W[o, c, j] * xp[t * stride + j, c]
            out[t, o] = acc
    return out


def naive_batchnorm(x, gamma, beta, mean, var, eps=1e-5):
    out = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        c = idx[-1]
        out[idx] = gamma[c] * (x[idx] - mean[c]) / np.sqrt(var[c] + eps) + beta[c]
    return out


def naive_bce(p, t, clamp=1e-7):
    total = 0.0
    p = np.asarray(p, dtype=np.float64).ravel()
    t = np.asarray(t, dtype=np.float64).ravel()
    for pi, ti in zip(p, t):
        pi = min(max(pi, clamp), 1 - clamp)
        total += ti * np.log(pi) + (1 - ti) * np.log(1 - pi)
    return -total / p.size


def central_difference(f, value, index, h=1e-4):
    old = value[index]
    value[index] = old + h
    up = f()
    value[index] = old - h
    down = f()
    value[index] = old
    return (up - down) / (2 * h)


def rel_err(a, b, floor=1e-6):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def check_layer_gradients(layer, x, rng, n_checks=40):
    """Compare analytic parameter and input gradients of sum(R * layer(x)) with central differences."""
    out = layer.forward(x, train=True)
    R = rng.standard_normal(out.shape)
    dx = layer.backward(R)

    def loss():
        return float(np.sum(R * layer.forward(x, train=True)))

    worst = 0.0
    for leaf in layer.sublayers():
        for name, value in leaf.params.items():
            grad = leaf.grads[name]
            for _ in range(min(n_checks, value.size)):
                idx = tuple(rng.integers(0, s) for s in value.shape)
                num = central_difference(loss, value, idx)
                worst = max(worst, rel_err(grad[idx], num))
    if dx is not None:
        for _ in range(n_checks):
            idx = tuple(rng.integers(0, s) for s in x.shape)
            num = central_difference(loss, x, idx)
            worst = max(worst, rel_err(dx[idx], num))
    return worst


def away_from_zero(rng, shape, margin=0.05):
    v = rng.standard_normal(shape)
    return np.where(np.abs(v) < margin, np.sign(v + 1e-12) * margin, v)


def band_power_fraction(x, bins):
    """Fraction of DFT power of ``x`` lying in ``bins`` (DFT of the whole record)."""
    X = np.abs(np.fft.fft(x)) ** 2
    return X[list(bins)].sum() / X.sum()
