"""Impairment channel: AWGN, carrier offset and drift, oscillator phase noise, sample-clock error.

The defaults for linewidth and ppm error are illustrative, not measured
values for any particular free-running oscillator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _accel
from .errors import ConfigError
from .phy_tx import IqFrame

THERMAL_NOISE_DBM_HZ = -174.0


def power_to_snr(rx_power_dbm: float, noise_figure_db: float = 10.0, bandwidth_hz: float = 1e6) -> float:
    """Received power to SNR in ``bandwidth_hz`` for a receiver with the given noise figure."""
    if bandwidth_hz <= 0:
        raise ConfigError("bandwidth must be positive")
    return rx_power_dbm - (THERMAL_NOISE_DBM_HZ + noise_figure_db + 10 * math.log10(bandwidth_hz))


@dataclass(frozen=True)
class ChannelConfig:
    """Channel impairments.  Set exactly one of ``snr_db`` and ``rx_power_dbm``.

    ``snr_db`` is measured in ``noise_bandwidth_hz`` (1 MHz by default, so at
    the 1 Mb/s symbol rate it equals Eb/N0).  ``snr_db=inf`` disables noise.
    """

    snr_db: float | None = None
    rx_power_dbm: float | None = None
    noise_figure_db: float = 10.0
    noise_bandwidth_hz: float = 1e6
    cfo_hz: float = 0.0
    drift_hz_per_s: float = 0.0
    linewidth_hz: float = 0.0
    clock_ppm: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.snr_db is not None and self.rx_power_dbm is not None:
            raise ConfigError("snr_db and rx_power_dbm are mutually exclusive")
        if self.linewidth_hz < 0:
            raise ConfigError("linewidth_hz must be >= 0")
        if abs(self.clock_ppm) >= 1000:
            raise ConfigError("|clock_ppm| must be below 1000")
        if self.noise_bandwidth_hz <= 0:
            raise ConfigError("noise_bandwidth_hz must be positive")

    @classmethod
    def noiseless(cls, **kw) -> "ChannelConfig":
        return cls(snr_db=math.inf, **kw)

    def resolved_snr_db(self) -> float:
        if self.snr_db is not None:
            return float(self.snr_db)
        if self.rx_power_dbm is not None:
            return power_to_snr(self.rx_power_dbm, self.noise_figure_db, self.noise_bandwidth_hz)
        raise ConfigError("channel has neither snr_db nor rx_power_dbm")

    def with_(self, **changes) -> "ChannelConfig":
        return replace(self, **changes)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def apply_awgn(frame: IqFrame, cfg: ChannelConfig, signal_power: float | None = None, rng=None) -> IqFrame:
    """Add complex white Gaussian noise for the configured in-band SNR.

    ``signal_power`` defaults to the mean power of the frame; pass the known
    signal power when the frame contains idle (zero) stretches.
    """
    snr_db = cfg.resolved_snr_db()
    if math.isinf(snr_db) and snr_db > 0:
        return frame.with_samples(frame.samples.copy(), origin="channel")
    x = frame.samples
    if signal_power is None:
        signal_power = float(np.mean(np.abs(x) ** 2)) if x.size else 0.0
    # in-band noise power scaled up to the full simulated bandwidth
    noise_var = signal_power / 10 ** (snr_db / 10) * frame.sample_rate / cfg.noise_bandwidth_hz
    g = _rng(cfg.seed if rng is None else rng)
    noise = g.standard_normal((2, x.size)) * math.sqrt(noise_var / 2)
    return frame.with_samples(x + noise[0] + 1j * noise[1], origin="channel")


def apply_cfo(frame: IqFrame, cfo_hz: float, drift_hz_per_s: float = 0.0) -> IqFrame:
    """Rotate by a carrier offset whose frequency ramps as ``cfo + drift * t``."""
    if cfo_hz == 0 and drift_hz_per_s == 0:
        return frame.with_samples(frame.samples.copy(), origin="channel")
    t = np.arange(len(frame)) / frame.sample_rate
    phase = 2 * np.pi * (cfo_hz * t + 0.5 * drift_hz_per_s * t * t)
    return frame.with_samples(frame.samples * np.exp(1j * phase), origin="channel")


def apply_phase_noise(frame: IqFrame, linewidth_hz: float, seed=0) -> IqFrame:
    """Wiener phase noise with per-sample increment variance 2*pi*linewidth/fs."""
    if linewidth_hz < 0:
        raise ConfigError("linewidth_hz must be >= 0")
    if linewidth_hz == 0:
        return frame.with_samples(frame.samples.copy(), origin="channel")
    step_std = math.sqrt(2 * math.pi * linewidth_hz / frame.sample_rate)
    steps = _rng(seed).standard_normal(len(frame)) * step_std
    steps[0] = 0.0
    return frame.with_samples(frame.samples * np.exp(1j * np.cumsum(steps)), origin="channel")


def apply_clock_offset(frame: IqFrame, ppm: float) -> IqFrame:
    """Resample as if the source clock ran ``ppm`` fast.

    Output sample m is the input evaluated at position m * (1 + ppm*1e-6), so
    the output is shorter by that factor and tones rise in frequency by it.
    Windowed-sinc interpolation, 32 taps, Kaiser beta 8.
    """
    if abs(ppm) >= 1000:
        raise ConfigError("|ppm| must be below 1000")
    if ppm == 0 or len(frame) == 0:
        return frame.with_samples(frame.samples.copy(), origin="channel")
    step = 1.0 + ppm * 1e-6
    n_out = int(math.floor((len(frame) - 1) / step)) + 1
    return frame.with_samples(_accel.sinc_resample(frame.samples, step, n_out), origin="channel")


def apply_channel(frame: IqFrame, cfg: ChannelConfig, signal_power: float | None = None) -> IqFrame:
    """All impairments in physical order: clock, carrier offset, phase noise, then receiver noise."""
    phase_seed, noise_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    out = apply_clock_offset(frame, cfg.clock_ppm)
    out = apply_cfo(out, cfg.cfo_hz, cfg.drift_hz_per_s)
    out = apply_phase_noise(out, cfg.linewidth_hz, np.random.default_rng(phase_seed))
    return apply_awgn(out, cfg, signal_power=signal_power, rng=np.random.default_rng(noise_seed))
