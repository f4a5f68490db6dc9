"""Packet-error-rate sweeps and receiver sensitivity.

A sweep sends random maximum-length ADV_IND packets through the complete
TX -> channel -> RX chain at each level and counts a packet as lost unless
the receiver returns exactly the PDU that was sent.  The preamble is not
part of the error definition, so a 37-byte payload gives 368 counted bits.

Every packet draws its own RNG stream from ``(seed, level index, packet
index)``; workers only return error counts, so the result does not depend
on how the work was split.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from .channel import ChannelConfig, apply_channel
from .errors import BleTwinError, ConfigError
from .frames import MAX_PAYLOAD, PduType, assemble_packet, random_pdu
from .phy_rx import FrontEndConfig, demodulate_packet
from .phy_tx import ModConfig, gfsk_modulate

CSV_SCHEMA = "bletwin-sweep/1"
CSV_COLUMNS = ("level", "n", "errors", "per", "ber")
LEVEL_KINDS = ("snr_db", "power_dbm")
BITS_PER_MAX_PACKET = 32 + 16 + 8 * MAX_PAYLOAD + 24  # 368, preamble excluded


def per_to_ber(per: float, bits_per_packet: int = BITS_PER_MAX_PACKET) -> float:
    """Bit error rate implied by a packet error rate, assuming independent bit errors."""
    if not 0.0 <= per <= 1.0:
        raise ConfigError(f"PER must lie in [0, 1], got {per}")
    if bits_per_packet < 1:
        raise ConfigError("bits_per_packet must be >= 1")
    if per == 1.0:
        return 1.0
    return -math.expm1(math.log1p(-per) / bits_per_packet)


def ber_to_per(ber: float, bits_per_packet: int = BITS_PER_MAX_PACKET) -> float:
    if not 0.0 <= ber <= 1.0:
        raise ConfigError(f"BER must lie in [0, 1], got {ber}")
    if ber == 1.0:
        return 1.0
    return -math.expm1(math.log1p(-ber) * bits_per_packet)


@dataclass(frozen=True)
class SweepConfig:
    """One PER sweep.

    ``levels`` are SNR values in dB or received powers in dBm, according to
    ``level_kind``.  ``channel`` is a template: its impairments apply at
    every level and its SNR/power fields are replaced per level.  With
    ``channel_enabled=False`` packets go straight from TX to RX.
    """

    levels: tuple[float, ...]
    level_kind: str = "snr_db"
    packets_per_level: int = 2000
    payload_bytes: int = MAX_PAYLOAD
    fe: FrontEndConfig = FrontEndConfig()
    mod: ModConfig = ModConfig()
    channel: ChannelConfig = ChannelConfig()
    channel_enabled: bool = True
    channel_index: int = 37
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        if not self.levels:
            raise ConfigError("a sweep needs at least one level")
        if self.level_kind not in LEVEL_KINDS:
            raise ConfigError(f"level_kind must be one of {LEVEL_KINDS}, got {self.level_kind!r}")
        if self.packets_per_level < 1:
            raise ConfigError("packets_per_level must be >= 1")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0 (0 means one per CPU)")
        if self.mod.symbol_rate != self.fe.symbol_rate:
            raise ConfigError("modulator and receiver disagree on the symbol rate")

    @property
    def bits_per_packet(self) -> int:
        return 32 + 16 + 8 * self.payload_bytes + 24

    def channel_at(self, level_idx: int, seed: int) -> ChannelConfig:
        value = self.levels[level_idx]
        if not self.channel_enabled:
            return ChannelConfig.noiseless(seed=seed)
        if self.level_kind == "snr_db":
            return replace(self.channel, snr_db=value, rx_power_dbm=None, seed=seed)
        return replace(self.channel, snr_db=None, rx_power_dbm=value, seed=seed)

    def with_(self, **changes) -> "SweepConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class SweepResult:
    config: SweepConfig
    levels: tuple[float, ...]
    n: tuple[int, ...]
    errors: tuple[int, ...]
    timestamp: str = field(default="", compare=False)
    elapsed_s: float = field(default=0.0, compare=False)

    @property
    def per(self) -> np.ndarray:
        return np.asarray(self.errors, float) / np.asarray(self.n, float)

    @property
    def ber(self) -> np.ndarray:
        bits = self.config.bits_per_packet
        return np.array([per_to_ber(p, bits) for p in self.per])

    def per_interval(self, confidence: float = 0.95) -> np.ndarray:
        """Exact (Clopper-Pearson) PER interval per level, shape (n_levels, 2)."""
        out = []
        for k, n in zip(self.errors, self.n):
            ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=confidence, method="exact")
            out.append((ci.low, ci.high))
        return np.array(out)

    def is_monotone(self, confidence: float = 0.95) -> bool:
        """True unless PER rises with level by more than the sampling uncertainty allows."""
        order = np.argsort(self.levels)
        ci = self.per_interval(confidence)[order]
        return all(ci[i + 1, 0] <= ci[i, 1] for i in range(len(order) - 1))

    def to_csv(self) -> str:
        cfg = self.config
        buf = io.StringIO()
        buf.write(f"# {CSV_SCHEMA} level_kind={cfg.level_kind} seed={cfg.seed} "
                  f"payload_bytes={cfg.payload_bytes} adc_bits={cfg.fe.adc_bits} "
                  f"channel_enabled={int(cfg.channel_enabled)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for lvl, n, e, p, b in zip(self.levels, self.n, self.errors, self.per, self.ber):
            w.writerow([f"{lvl:.3f}", n, e, f"{p:.6f}", f"{b:.6e}"])
        return buf.getvalue()


def packet_seed(seed: int, level_idx: int, pkt_idx: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(level_idx), int(pkt_idx)])


def run_packet(cfg: SweepConfig, level_idx: int, pkt_idx: int) -> bool:
    """Send one random packet at one level; True when it was received correctly."""
    rng = np.random.default_rng(packet_seed(cfg.seed, level_idx, pkt_idx))
    pdu = random_pdu(rng, cfg.payload_bytes, PduType.ADV_IND)
    tx = gfsk_modulate(assemble_packet(pdu, cfg.channel_index), cfg.mod)
    # random idle lead-in so the receiver never sees a packet at a fixed sample phase
    sps = cfg.mod.sps
    lead = int(rng.integers(3 * sps, 5 * sps))
    samples = np.concatenate([np.zeros(lead, complex), tx.samples, np.zeros(3 * sps, complex)])
    chan = cfg.channel_at(level_idx, int(rng.integers(2 ** 63)))
    rx = apply_channel(tx.with_samples(samples), chan, signal_power=1.0)
    try:
        return demodulate_packet(rx, cfg.fe, cfg.channel_index) == pdu
    except BleTwinError:
        return False


def _count_errors(cfg: SweepConfig, level_idx: int, start: int, stop: int) -> tuple[int, int]:
    errors = sum(not run_packet(cfg, level_idx, k) for k in range(start, stop))
    return level_idx, errors


def _chunks(cfg: SweepConfig, n_workers: int):
    size = max(1, math.ceil(cfg.packets_per_level / max(1, 4 * n_workers)))
    for li in range(len(cfg.levels)):
        for start in range(0, cfg.packets_per_level, size):
            yield li, start, min(start + size, cfg.packets_per_level)


def run_per_sweep(cfg: SweepConfig) -> SweepResult:
    """Measure PER at every level of ``cfg``."""
    t0 = time.perf_counter()
    n_workers = cfg.workers or os.cpu_count() or 1
    errors = [0] * len(cfg.levels)
    tasks = list(_chunks(cfg, n_workers))
    if n_workers == 1:
        done = [_count_errors(cfg, *t) for t in tasks]
    else:
        with ProcessPoolExecutor(n_workers) as pool:
            futures = [pool.submit(_count_errors, cfg, *t) for t in tasks]
            done = [f.result() for f in futures]
    for li, e in done:
        errors[li] += e
    return SweepResult(
        config=cfg,
        levels=cfg.levels,
        n=(cfg.packets_per_level,) * len(cfg.levels),
        errors=tuple(errors),
        timestamp=time.strftime("%Y-%m-%dT%H:%M:%S"),
        elapsed_s=time.perf_counter() - t0,
    )


def sensitivity_from_sweep(result: SweepResult, per_threshold: float = 0.308) -> float | None:
    """Lowest level at which PER reaches ``per_threshold``.

    Between the last failing and the first passing level the crossing is
    found by linear interpolation of log10(PER).  A level with no errors is
    treated as half an error so the logarithm stays finite.
    """
    if len(result.levels) < 2:
        raise ConfigError("sensitivity needs at least two sweep levels")
    order = np.argsort(result.levels)
    lv = np.asarray(result.levels, float)[order]
    n = np.asarray(result.n, float)[order]
    per = np.maximum(result.per[order], 0.5 / n)
    passing = np.flatnonzero(result.per[order] <= per_threshold)
    if passing.size == 0:
        return None
    i = int(passing[0])
    if i == 0:
        return float(lv[0])
    y0, y1 = math.log10(per[i - 1]), math.log10(per[i])
    yt = math.log10(max(per_threshold, 1e-300))
    if y1 == y0:
        return float(lv[i])
    return float(lv[i - 1] + (yt - y0) * (lv[i] - lv[i - 1]) / (y1 - y0))


# --------------------------------------------------------------------------
# key=value configuration files
# --------------------------------------------------------------------------

def parse_kv_text(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def load_kv(path) -> dict[str, str]:
    try:
        return parse_kv_text(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc


def _coerce(text: str, default, name: str):
    if text.lower() in ("none", "null", ""):
        return None
    try:
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, str):
            return text
        return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


def apply_overrides(obj, values: dict[str, str], prefix: str = ""):
    """New dataclass with fields replaced by parsed ``values`` (unknown keys rejected)."""
    names = {f.name: f for f in dataclasses.fields(obj)}
    changes = {}
    for key, text in values.items():
        if key not in names:
            raise ConfigError(f"unknown setting {prefix}{key}")
        changes[key] = _coerce(text, getattr(obj, key), prefix + key)
    return replace(obj, **changes)


def sweep_config_from_kv(values: dict[str, str], seed: int | None = None) -> SweepConfig:
    """Build a SweepConfig from flat keys; ``fe.*``, ``mod.*`` and ``channel.*`` reach the sub-configs."""
    groups: dict[str, dict[str, str]] = {"": {}, "fe": {}, "mod": {}, "channel": {}}
    for key, value in values.items():
        head, _, tail = key.partition(".")
        if tail and head in groups:
            groups[head][tail] = value
        else:
            groups[""][key] = value
    top = dict(groups[""])
    if "levels" not in top:
        raise ConfigError("sweep config needs a 'levels' entry")
    try:
        levels = tuple(float(v) for v in top.pop("levels").replace(",", " ").split())
    except ValueError:
        raise ConfigError("levels must be a list of numbers") from None
    base = SweepConfig(levels=levels)
    cfg = apply_overrides(base, top)
    cfg = cfg.with_(
        fe=apply_overrides(cfg.fe, groups["fe"], "fe."),
        mod=apply_overrides(cfg.mod, groups["mod"], "mod."),
        channel=apply_overrides(cfg.channel, groups["channel"], "channel."),
    )
    if seed is not None:
        cfg = cfg.with_(seed=seed)
    return cfg
