import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gfanc.adaptive import (
    FxlmsConfig,
    adapt_weights,
    binarize,
    fxlms_pretrain,
    fxlms_run,
    label_adapt,
    label_streams,
)
from gfanc.errors import DivergenceError, InvalidArgument
from gfanc.filterbank import decompose
from gfanc.signal_core import Signal, causal_filter, fir_filter, gen_subband_noise, nr_db, white_noise

from oracles import normal_equation_weights

FS = 16000


def delta(n, k=0):
    h = np.zeros(n)
    h[k] = 1.0
    return h


@pytest.fixture(scope="module")
def delta_bank():
    return decompose(delta(1024), 15)


class TestFxlmsConfig:
    def test_defaults(self):
        cfg = FxlmsConfig()
        assert (cfg.step_size, cfg.n_taps, cfg.leak) == (1e-4, 1024, 0.0)

    @pytest.mark.parametrize("kw", [{"step_size": -1}, {"n_taps": 0}, {"leak": 1.0}])
    def test_invalid(self, kw):
        with pytest.raises(InvalidArgument):
            FxlmsConfig(**kw)


class TestFxlms:
    def test_identity_paths(self):
        x = Signal(white_noise(1, 20000))
        w = fxlms_pretrain(x, delta(1), delta(1), FxlmsConfig(step_size=0.01, n_taps=8))
        assert np.max(np.abs(w - delta(8))) < 0.05

    def test_pure_delay(self):
        x = Signal(white_noise(2, 20000))
        w = fxlms_pretrain(x, delta(4, 3), delta(1), FxlmsConfig(step_size=0.01, n_taps=8))
        assert np.max(np.abs(w - delta(8, 3))) < 0.05

    def test_zero_step_is_uncontrolled(self, paths):
        p, s = paths
        x = Signal(white_noise(3, 4000))
        e, w = fxlms_run(x, p, s, FxlmsConfig(step_size=0.0, n_taps=64))
        np.testing.assert_array_equal(e.samples, causal_filter(x.samples, p))
        assert not w.any()

    def test_residual_below_disturbance(self, fxlms_30s, paths):
        x, e, _ = fxlms_30s
        d = causal_filter(x.samples, paths[0])
        assert np.sum(e.samples**2) < np.sum(d**2)

    def test_frozen_restart(self, fxlms_30s, paths):
        # restarting from the converged filter keeps its performance immediately
        x, e, w = fxlms_30s
        p, s = paths
        final = nr_db(fir_filter(x, p), e).values_db[-1]
        x2 = Signal(white_noise(99, FS))
        e2, _ = fxlms_run(x2, p, s, FxlmsConfig(), w)
        first = nr_db(fir_filter(x2, p), e2).values_db[0]
        assert abs(first - final) < 3.0

    def test_monotone_trend_while_converging(self, fxlms_30s):
        # 100-sample block powers, averaged 16 blocks at a time, over the first 8 s
        _, e, _ = fxlms_30s
        blocks = (e.samples[: 8 * FS].reshape(-1, 100) ** 2).mean(axis=1)
        smoothed = blocks.reshape(-1, 16).mean(axis=1)[10:]
        violations = np.mean(np.diff(smoothed) > 0)
        assert violations <= 0.05

    def test_band_switch_recovery_takes_longer_than_a_frame(self, bank, paths):
        p, s = paths
        a = gen_subband_noise(1, [2], None, 5.0, FS, bank).samples
        b = gen_subband_noise(2, [9], None, 5.0, FS, bank).samples
        x = Signal(np.r_[a, b])
        e, _ = fxlms_run(x, p, s)
        nr = nr_db(fir_filter(x, p), e).values_db
        assert nr[5] < nr[4] - 10
        assert nr[6] < nr[4]
        assert nr[9] > nr[5]

    def test_divergence_detected(self, paths):
        p, s = paths
        with pytest.raises(DivergenceError):
            fxlms_pretrain(Signal(white_noise(4, 8000)), p, s, FxlmsConfig(step_size=1.0, n_taps=64))

    def test_w0_length_checked(self, paths):
        with pytest.raises(InvalidArgument):
            fxlms_run(Signal(np.ones(10)), *paths, FxlmsConfig(n_taps=8), np.zeros(4))

    def test_leak_shrinks_filter(self):
        x = Signal(white_noise(1, 20000))
        cfg = FxlmsConfig(step_size=0.01, n_taps=8)
        w = fxlms_pretrain(x, delta(1), delta(1), cfg)
        wl = fxlms_pretrain(x, delta(1), delta(1), FxlmsConfig(step_size=0.01, n_taps=8, leak=0.01))
        assert abs(wl[0]) < abs(w[0])

    def test_deterministic(self, paths):
        x = Signal(white_noise(5, 3000))
        a = fxlms_pretrain(x, *paths, FxlmsConfig(n_taps=32))
        b = fxlms_pretrain(x, *paths, FxlmsConfig(n_taps=32))
        assert a.tobytes() == b.tobytes()


class TestLabelAdapt:
    def test_zero_step(self, delta_bank):
        x = gen_subband_noise(0, [3], None, 1.0, FS, delta_bank)
        g = label_adapt(x, delta_bank, delta(1), delta(1), mu=0.0)
        assert not g.any()

    def test_single_band_identity_paths(self, delta_bank):
        x = gen_subband_noise(0, [3], None, 1.0, FS, delta_bank)
        g = label_adapt(x, delta_bank, delta(1), delta(1))
        assert 0.8 <= g[2] <= 1.2
        assert np.max(np.abs(np.delete(g, 2))) < 0.2

    def test_broadband_identity_paths(self, delta_bank):
        x = gen_subband_noise(0, range(1, 16), None, 1.0, FS, delta_bank)
        g = label_adapt(x, delta_bank, delta(1), delta(1))
        assert np.all((g >= 0.8) & (g <= 1.2))

    def test_streams_match_direct_filtering(self, bank, paths):
        p, s = paths
        x = gen_subband_noise(5, [4, 11], None, 1.0, FS, bank)
        st_ = label_streams(x, bank, p, s)
        for m in (0, 3, 10):
            np.testing.assert_allclose(st_.y[:, m], causal_filter(x.samples, bank.filters[m]), atol=1e-12)
            ref = causal_filter(causal_filter(x.samples, bank.filters[m]), s)
            np.testing.assert_allclose(st_.y_filtered[:, m], ref, atol=1e-12)
        assert st_.start == 1024 + 255 - 2

    def test_oracle_agreement(self, bank, paths):
        p, s = paths
        rng = np.random.default_rng(7)
        worst = 0.0
        for trial in range(50):
            bands = rng.choice(np.arange(1, 16), size=rng.integers(1, 4), replace=False)
            gains = rng.uniform(0.5, 1.0, bands.size)
            x = gen_subband_noise(1000 + trial, bands, gains, 1.0, FS, bank)
            g = label_adapt(x, bank, p, s)
            # oracle: direct convolution and the normal equations on the adapted samples
            start = 1024 + s.size - 2
            yf = np.stack([np.convolve(x.samples, np.convolve(c, s))[: len(x)] for c in bank.filters], axis=1)
            d = np.convolve(x.samples, p)[: len(x)]
            g_ls = normal_equation_weights(yf, d, start)
            worst = max(worst, np.max(np.abs(g - g_ls)))
            assert set(np.flatnonzero(binarize(g)) + 1) == set(bands.tolist())
        assert worst < 0.05

    @pytest.mark.parametrize("a", [0.5, 2.0])
    def test_scale_covariance(self, bank, paths, a):
        p, s = paths
        x = gen_subband_noise(3, [2, 9], [0.7, 1.0], 1.0, FS, bank)
        g1 = label_adapt(x, bank, p, s)
        g2 = label_adapt(x.like(a * x.samples), bank, p, s)
        assert np.max(np.abs(g1 - g2)) < 0.05

    def test_divergence(self, bank, paths):
        x = gen_subband_noise(3, [2, 9], None, 1.0, FS, bank)
        with pytest.raises(DivergenceError):
            label_adapt(x, bank, *paths, mu=10.0)

    def test_early_stop(self, bank, paths):
        x = gen_subband_noise(3, [5], None, 1.0, FS, bank)
        _, used = adapt_weights(label_streams(x, bank, *paths), passes=10, tol=1e-3)
        assert used < 10

    def test_frame_too_short(self, bank, paths):
        with pytest.raises(InvalidArgument):
            label_streams(Signal(np.ones(500)), bank, *paths)


class TestBinarize:
    def test_tie_goes_up(self):
        np.testing.assert_array_equal(binarize([0.5]), [1])

    def test_examples(self):
        np.testing.assert_array_equal(binarize([0.49, 0.51, -0.2]), [0, 1, 0])
        np.testing.assert_array_equal(binarize(np.zeros(15)), np.zeros(15))

    def test_nan(self):
        with pytest.raises(InvalidArgument):
            binarize([0.1, np.nan])

    @given(st.lists(st.integers(0, 1), min_size=1, max_size=20))
    def test_idempotent(self, bits):
        t = binarize(bits)
        np.testing.assert_array_equal(binarize(t), t)
        np.testing.assert_array_equal(t, bits)
