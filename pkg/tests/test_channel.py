import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bletwin.channel import (
    ChannelConfig,
    apply_awgn,
    apply_cfo,
    apply_channel,
    apply_clock_offset,
    apply_phase_noise,
    power_to_snr,
)
from bletwin.errors import ConfigError
from bletwin.phy_tx import IqFrame, instantaneous_frequency

FS = 16e6


def tone(freq, n, fs=FS):
    return IqFrame(np.exp(2j * np.pi * freq * np.arange(n) / fs), fs)


class TestConfig:
    def test_power_to_snr(self):
        # thermal floor -174 dBm/Hz + 10 dB NF + 60 dB (1 MHz) = -104 dBm
        assert power_to_snr(-70) == pytest.approx(34.0)
        assert power_to_snr(-104) == pytest.approx(0.0)

    def test_rx_power_resolves(self):
        assert ChannelConfig(rx_power_dbm=-90).resolved_snr_db() == pytest.approx(14.0)

    def test_exclusive(self):
        with pytest.raises(ConfigError):
            ChannelConfig(snr_db=10, rx_power_dbm=-90)

    def test_unset_level(self):
        with pytest.raises(ConfigError):
            ChannelConfig().resolved_snr_db()

    @pytest.mark.parametrize("kw", [dict(linewidth_hz=-1), dict(clock_ppm=1000), dict(noise_bandwidth_hz=0)])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            ChannelConfig(snr_db=10, **kw)


class TestAwgn:
    @pytest.mark.parametrize("snr_db", [0.0, 10.0, 20.0])
    def test_in_band_snr(self, snr_db):
        x = tone(0, 200_000)
        y = apply_awgn(x, ChannelConfig(snr_db=snr_db, seed=3))
        noise = y.samples - x.samples
        # noise is white over fs, so the 1 MHz band holds fs/1MHz less of it
        in_band = np.mean(np.abs(noise) ** 2) * 1e6 / FS
        assert 10 * math.log10(1 / in_band) == pytest.approx(snr_db, abs=0.1)

    def test_noiseless_is_identity(self):
        x = tone(1e5, 100)
        assert np.array_equal(apply_awgn(x, ChannelConfig.noiseless()).samples, x.samples)

    def test_seeded(self):
        x = tone(0, 500)
        a = apply_awgn(x, ChannelConfig(snr_db=5, seed=9)).samples
        b = apply_awgn(x, ChannelConfig(snr_db=5, seed=9)).samples
        c = apply_awgn(x, ChannelConfig(snr_db=5, seed=10)).samples
        assert np.array_equal(a, b) and not np.array_equal(a, c)

    def test_explicit_signal_power(self):
        x = IqFrame(np.concatenate([np.zeros(100_000), np.ones(100_000)]), FS)
        y = apply_awgn(x, ChannelConfig(snr_db=10, seed=1), signal_power=1.0)
        var = np.var(y.samples[:100_000])
        assert var == pytest.approx(0.1 * FS / 1e6, rel=0.03)


class TestCfo:
    @given(st.floats(-200e3, 200e3))
    def test_shift(self, cfo):
        f = instantaneous_frequency(apply_cfo(tone(0, 64), cfo))
        assert np.allclose(f, cfo, atol=1e-3)

    def test_drift(self):
        fr = apply_cfo(tone(0, 16_000), 0.0, drift_hz_per_s=1e9)
        f = instantaneous_frequency(fr)
        # after 1 ms the offset has ramped to 1 MHz
        assert f[-1] == pytest.approx(1e6, rel=1e-3)


class TestPhaseNoise:
    def test_increment_variance(self):
        n, lw = 400_000, 10e3
        fr = apply_phase_noise(tone(0, n), lw, seed=2)
        inc = np.angle(fr.samples[1:] * np.conj(fr.samples[:-1]))
        assert np.var(inc) == pytest.approx(2 * np.pi * lw / FS, rel=0.02)

    def test_zero_linewidth(self):
        x = tone(1e5, 10)
        assert np.array_equal(apply_phase_noise(x, 0).samples, x.samples)

    def test_envelope_preserved(self):
        assert np.allclose(np.abs(apply_phase_noise(tone(0, 1000), 1e3, 0).samples), 1)


class TestClockOffset:
    def test_output_length(self):
        x = IqFrame(np.ones(1_000_000, complex), FS)
        assert len(apply_clock_offset(x, 100)) == 999_900

    @pytest.mark.parametrize("ppm", [-500.0, 100.0, 500.0])
    def test_tone_scaled(self, ppm):
        f0 = 1e6
        y = apply_clock_offset(tone(f0, 20_000), ppm)
        f = instantaneous_frequency(y)[100:-100]
        assert f.mean() == pytest.approx(f0 * (1 + ppm * 1e-6), rel=2e-6)

    def test_zero_is_identity(self):
        x = tone(1e5, 50)
        assert np.array_equal(apply_clock_offset(x, 0).samples, x.samples)

    def test_interior_accuracy(self):
        f0 = 2e6
        y = apply_clock_offset(tone(f0, 4000), 200)
        m = np.arange(len(y))
        ref = np.exp(2j * np.pi * f0 * m * (1 + 200e-6) / FS)
        assert np.abs(y.samples[32:-32] - ref[32:-32]).max() < 1e-3


class TestApplyChannel:
    def test_deterministic(self):
        cfg = ChannelConfig(snr_db=8, cfo_hz=3e4, linewidth_hz=1e3, clock_ppm=50, seed=4)
        x = tone(2e5, 3000)
        assert np.array_equal(apply_channel(x, cfg).samples, apply_channel(x, cfg).samples)

    def test_noiseless_passthrough(self):
        x = tone(2e5, 300)
        assert np.array_equal(apply_channel(x, ChannelConfig.noiseless()).samples, x.samples)

    def test_needs_level(self):
        with pytest.raises(ConfigError):
            apply_channel(tone(0, 10), ChannelConfig())
