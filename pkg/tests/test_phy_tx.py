import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bletwin.errors import ConfigError
from bletwin.phy_tx import IqFrame, ModConfig, frequency_trajectory, gaussian_taps, gfsk_modulate, instantaneous_frequency

bit_lists = st.lists(st.integers(0, 1), min_size=1, max_size=200)


class TestModConfig:
    def test_defaults(self):
        cfg = ModConfig()
        assert cfg.sample_rate == 16e6
        assert cfg.deviation / cfg.symbol_rate == 0.25  # modulation index 0.5

    @pytest.mark.parametrize("kw", [dict(sps=1), dict(sps=2.5), dict(bt=0), dict(bt=1.5), dict(deviation=-1),
                                    dict(span_symbols=0)])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            ModConfig(**kw)


class TestGaussianTaps:
    @pytest.mark.parametrize("bt, sps, span", [(0.5, 16, 3), (0.3, 8, 4), (1.0, 4, 2)])
    def test_unit_gain_and_symmetric(self, bt, sps, span):
        h = gaussian_taps(bt, sps, span)
        assert h.size == span * sps + 1
        assert h.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.array_equal(h, h[::-1])

    def test_3db_bandwidth(self):
        # the continuous Gaussian pulse has |H(B)| = 1/sqrt(2) at B = bt * symbol rate
        sps, bt = 64, 0.5
        h = gaussian_taps(bt, sps, 8)
        f = bt / sps  # cycles per sample
        H = abs(np.sum(h * np.exp(-2j * np.pi * f * np.arange(h.size))))
        assert H == pytest.approx(1 / np.sqrt(2), rel=1e-3)


class TestModulator:
    @given(bit_lists)
    def test_length_and_constant_envelope(self, bits):
        frame = gfsk_modulate(bits)
        assert len(frame) == len(bits) * 16
        assert np.allclose(np.abs(frame.samples), 1.0)

    def test_steady_state_deviation(self):
        fr = gfsk_modulate([1] * 20 + [0] * 20)
        f = instantaneous_frequency(fr)
        assert f[5 * 16:15 * 16].mean() == pytest.approx(250e3, rel=1e-9)
        assert f[25 * 16:35 * 16].mean() == pytest.approx(-250e3, rel=1e-9)

    def test_phase_per_symbol_is_quarter_turn(self):
        # modulation index 0.5: a long run of ones advances phase by pi/2 per symbol
        fr = gfsk_modulate([1] * 10)
        step = np.angle(fr.samples[16 * 6] / fr.samples[16 * 5])
        assert step == pytest.approx(np.pi / 2, abs=1e-9)

    def test_alternating_peak_below_full_deviation(self):
        f = frequency_trajectory([0, 1] * 10, ModConfig())
        assert 0.5 * 250e3 < np.abs(f[32:-32]).max() < 250e3

    def test_center_offset(self):
        fr = gfsk_modulate([1] * 8 + [0] * 8, ModConfig(center_offset=1e6))
        assert fr.center_hz == 1e6
        assert instantaneous_frequency(fr).mean() == pytest.approx(1e6, rel=1e-2)

    @given(bit_lists)
    def test_phase_continuous(self, bits):
        s = gfsk_modulate(bits).samples
        d = np.angle(s[1:] * np.conj(s[:-1]))
        assert np.all(np.abs(d) <= 2 * np.pi * 250e3 / 16e6 + 1e-9)

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            gfsk_modulate([])


class TestIqFrame:
    def test_immutable(self):
        fr = gfsk_modulate([1, 0, 1])
        with pytest.raises(ValueError):
            fr.samples[0] = 0

    def test_rejects_nan(self):
        with pytest.raises(ConfigError):
            IqFrame(np.array([1, np.nan]), 1e6)

    def test_rejects_bad_rate(self):
        with pytest.raises(ConfigError):
            IqFrame(np.ones(3), 0)

    def test_frequency_needs_two_samples(self):
        with pytest.raises(ConfigError):
            instantaneous_frequency(IqFrame(np.ones(1), 1e6))
