"""GFSK modulator for the LE 1M PHY."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class ModConfig:
    symbol_rate: float = 1e6
    deviation: float = 250e3
    bt: float = 0.5
    sps: int = 16
    center_offset: float = 0.0
    span_symbols: int = 3

    def __post_init__(self):
        if int(self.sps) != self.sps or self.sps < 2:
            raise ConfigError(f"sps must be an integer >= 2, got {self.sps}")
        if self.deviation <= 0 or self.symbol_rate <= 0:
            raise ConfigError("deviation and symbol_rate must be positive")
        if not 0 < self.bt <= 1:
            raise ConfigError(f"bt must lie in (0, 1], got {self.bt}")
        if self.span_symbols < 1:
            raise ConfigError("span_symbols must be >= 1")

    @property
    def sample_rate(self) -> float:
        return self.symbol_rate * self.sps

    def with_(self, **changes) -> "ModConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class IqFrame:
    """Complex samples plus the rate they were taken at.

    ``center_hz`` is the frequency, relative to 0 Hz of the complex stream, at
    which the wanted signal is centred.
    """

    samples: np.ndarray
    sample_rate: float
    center_hz: float = 0.0
    origin: str = "tx"

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.complex128)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        if not self.sample_rate > 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(s)):
            raise ConfigError("frame contains non-finite samples")

    def __len__(self) -> int:
        return self.samples.size

    def with_samples(self, samples, origin: str | None = None, **changes) -> "IqFrame":
        return replace(self, samples=samples, origin=origin or self.origin, **changes)


def gaussian_taps(bt: float, sps: int, span_symbols: int = 3) -> np.ndarray:
    """Sampled Gaussian pulse spanning ``span_symbols`` symbols, normalised to unit DC gain."""
    if bt <= 0 or sps < 1 or span_symbols < 1:
        raise ConfigError("bt, sps and span_symbols must be positive")
    n = span_symbols * sps + 1
    t = (np.arange(n) - (n - 1) / 2) / sps
    sigma = np.sqrt(np.log(2)) / (2 * np.pi * bt)
    h = np.exp(-0.5 * (t / sigma) ** 2)
    h /= h.sum()
    # force exact symmetry after normalisation
    return 0.5 * (h + h[::-1])


def frequency_trajectory(bits, cfg: ModConfig) -> np.ndarray:
    """Instantaneous frequency (Hz) per output sample, before integration."""
    bits = np.asarray(bits, dtype=np.int8)
    if bits.size == 0:
        raise ConfigError("cannot modulate an empty bit sequence")
    taps = gaussian_taps(cfg.bt, cfg.sps, cfg.span_symbols)
    half = (taps.size - 1) // 2
    nrz = np.repeat(2.0 * bits - 1.0, cfg.sps)
    # prime the filter with the first and last levels so the edges carry no start-up transient
    padded = np.concatenate([np.full(half, nrz[0]), nrz, np.full(half, nrz[-1])])
    level = np.convolve(padded, taps, mode="valid")
    return cfg.center_offset + cfg.deviation * level


def gfsk_modulate(bits, cfg: ModConfig = ModConfig()) -> IqFrame:
    """Constant-envelope GFSK waveform; bit 1 maps to +deviation."""
    freq = frequency_trajectory(bits, cfg)
    phase = np.empty_like(freq)
    phase[0] = 0.0
    np.cumsum(2 * np.pi * freq[:-1] / cfg.sample_rate, out=phase[1:])
    return IqFrame(np.exp(1j * phase), cfg.sample_rate, center_hz=cfg.center_offset, origin="tx")


def instantaneous_frequency(frame: IqFrame) -> np.ndarray:
    """Phase-difference frequency estimate, one value per adjacent sample pair."""
    s = frame.samples
    if s.size < 2:
        raise ConfigError("need at least two samples to estimate frequency")
    return np.angle(s[1:] * np.conj(s[:-1])) * frame.sample_rate / (2 * np.pi)
