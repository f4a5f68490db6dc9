"""Quantised low-IF receiver.

The chain is: complex mix to the IF, resample to the ADC rate, independent
mid-rise quantisation of I and Q, then a non-coherent one-symbol matched
filter against the mark (IF + deviation) and space (IF - deviation) tones.

At a modulation index of 0.5 the two tones are only 1/(2T) apart, so they
are not orthogonal over a single symbol when the carrier phase is unknown.
Bit decisions therefore default to combining three consecutive symbol
correlations along every continuous-phase tone pattern and picking the
best match.

Clock recovery is a bit-transition detector.  The matched filter is slid
one sample at a time and its hard decision (mark > space) flips about half
a symbol before every bit boundary.  During the alternating preamble the
flip instants, folded modulo the symbol length, vote for the symbol phase.
Only comparisons and counter increments are involved, no multiplies beyond
the correlators themselves.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
from scipy.signal import resample_poly

from . import _accel
from .errors import ConfigError, FrameError, NoDetectionError, NoSignalError
from .frames import ACCESS_ADDRESS_BITS, MAX_PAYLOAD, AdvPdu, int_to_bits, parse_packet
from .phy_tx import IqFrame

MAX_BITS_AFTER_AA = 16 + 8 * MAX_PAYLOAD + 24  # 336
PREAMBLE_MIN_TRANSITIONS = 7


@dataclass(frozen=True)
class FrontEndConfig:
    """Receiver model.

    ``full_scale=None`` sets the ADC range from the frame RMS (2 x RMS), a
    fixed gain chosen per frame rather than a tracking AGC.
    ``detector_span`` is the number of symbols combined per bit decision; 1
    is the plain per-symbol mark/space magnitude comparison.
    """

    if_hz: float = 2.5e6
    sample_rate: float = 16e6
    adc_bits: int = 4
    full_scale: float | None = None
    deviation: float = 250e3
    symbol_rate: float = 1e6
    detector_span: int = 3

    def __post_init__(self):
        if self.detector_span < 1 or self.detector_span % 2 == 0:
            raise ConfigError(f"detector_span must be a positive odd integer, got {self.detector_span}")
        if not 2 <= self.adc_bits <= 16:
            raise ConfigError(f"adc_bits must lie in 2..16, got {self.adc_bits}")
        if self.sample_rate <= 2 * (abs(self.if_hz) + self.deviation):
            raise ConfigError(
                f"sample rate {self.sample_rate:g} Hz too low for IF {self.if_hz:g} Hz "
                f"+ deviation {self.deviation:g} Hz")
        sps = self.sample_rate / self.symbol_rate
        if abs(sps - round(sps)) > 1e-9 or round(sps) < 2:
            raise ConfigError(f"sample_rate / symbol_rate must be an integer >= 2, got {sps:g}")
        if self.full_scale is not None and self.full_scale <= 0:
            raise ConfigError("full_scale must be positive")

    @property
    def sps(self) -> int:
        return int(round(self.sample_rate / self.symbol_rate))

    def with_(self, **changes) -> "FrontEndConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class QuantizedIq:
    i_codes: np.ndarray
    q_codes: np.ndarray
    cfg: FrontEndConfig
    step: float

    def __post_init__(self):
        if self.i_codes.shape != self.q_codes.shape:
            raise ValueError("I and Q code arrays differ in length")

    def __len__(self) -> int:
        return self.i_codes.size

    def levels(self) -> np.ndarray:
        """Integer reconstruction levels 2*code + 1, as complex numbers."""
        return (2 * self.i_codes.astype(np.float64) + 1) + 1j * (2 * self.q_codes.astype(np.float64) + 1)

    def dequantize(self) -> np.ndarray:
        return self.levels() * (self.step / 2)

    def is_constant(self) -> bool:
        """True when every sample has the same code, i.e. the ADC saw no signal."""
        if not len(self):
            return True
        return bool(np.all(self.i_codes == self.i_codes[0]) and np.all(self.q_codes == self.q_codes[0]))


@dataclass(frozen=True)
class SymbolTiming:
    offset_samples: int
    sps: int

    def __post_init__(self):
        if not 0 <= self.offset_samples < self.sps:
            raise ValueError(f"offset {self.offset_samples} outside 0..{self.sps - 1}")


@dataclass(frozen=True, eq=False)
class PacketCapture:
    bits: np.ndarray
    start_index: int
    aa_errors: int
    timing: SymbolTiming


def quantize(x: np.ndarray, bits: int, full_scale: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Mid-rise uniform quantiser on each rail; returns (i_codes, q_codes, step)."""
    step = 2.0 * full_scale / 2 ** bits
    lo, hi = -(2 ** (bits - 1)), 2 ** (bits - 1) - 1
    i = np.clip(np.floor(x.real / step), lo, hi).astype(np.int16)
    q = np.clip(np.floor(x.imag / step), lo, hi).astype(np.int16)
    return i, q, step


def low_if_front_end(frame: IqFrame, cfg: FrontEndConfig = FrontEndConfig()) -> QuantizedIq:
    """Mix the signal centre to ``cfg.if_hz``, resample to the ADC rate and quantise."""
    x = frame.samples
    if frame.sample_rate != cfg.sample_rate:
        ratio = Fraction(cfg.sample_rate / frame.sample_rate).limit_denominator(1000)
        x = resample_poly(x, ratio.numerator, ratio.denominator)
    n = np.arange(x.size)
    x = x * np.exp(2j * np.pi * (cfg.if_hz - frame.center_hz) / cfg.sample_rate * n)
    full_scale = cfg.full_scale
    if full_scale is None:
        rms = math.sqrt(float(np.mean(np.abs(x) ** 2))) if x.size else 0.0
        full_scale = 2.0 * rms if rms > 0 else 1.0
    i, q, step = quantize(x, cfg.adc_bits, full_scale)
    return QuantizedIq(i, q, cfg, step)


def tone_templates(cfg: FrontEndConfig) -> np.ndarray:
    """Conjugated one-symbol mark and space tones, shape (2, sps)."""
    m = np.arange(cfg.sps)
    freqs = np.array([cfg.if_hz + cfg.deviation, cfg.if_hz - cfg.deviation])
    return np.exp(-2j * np.pi * freqs[:, None] * m[None, :] / cfg.sample_rate)


def sliding_correlations(q: QuantizedIq) -> np.ndarray:
    """Complex (mark, space) correlation for a one-symbol window starting at every sample.

    The stream is zero-padded by half a symbol so a final symbol cut short by
    the end of the capture (filter delay, clock offset) is still decided.
    """
    x = np.concatenate([q.levels(), np.zeros(q.cfg.sps // 2, complex)])
    return _accel.sliding_correlation(x, tone_templates(q.cfg))


def sliding_metrics(q: QuantizedIq) -> np.ndarray:
    """(mark, space) correlation magnitude for a window starting at every sample."""
    return np.abs(sliding_correlations(q))


def matched_filter_metrics(q: QuantizedIq, timing: SymbolTiming) -> np.ndarray:
    """Per-symbol (mark_mag, space_mag) for windows on the given symbol grid."""
    n_sym = (len(q) - timing.offset_samples) // timing.sps
    corr = sliding_correlations(q)
    return np.abs(corr[timing.offset_samples:timing.offset_samples + n_sym * timing.sps:timing.sps])


def hard_decisions(mags: np.ndarray) -> np.ndarray:
    return (mags[:, 0] > mags[:, 1]).astype(np.uint8)


@functools.lru_cache(maxsize=16)
def _span_patterns(span: int, phase_mark: float, phase_space: float):
    """Tone index per position and the template phase at each symbol start, for all 2**span patterns."""
    pats = np.array(list(itertools.product((0, 1), repeat=span)), dtype=np.int64)
    step = np.where(pats == 0, phase_mark, phase_space)
    start_phase = np.concatenate([np.zeros((pats.shape[0], 1)), np.cumsum(step, axis=1)[:, :-1]], axis=1)
    return pats, np.exp(-1j * start_phase)


def symbol_decisions(corr: np.ndarray, cfg: FrontEndConfig, stride: int = 1) -> np.ndarray:
    """Bit decisions from complex (mark, space) correlations.

    ``corr[k]`` is the correlation of the window decided at k; its neighbouring
    symbols sit at ``k +/- stride`` (stride 1 for a per-symbol array, ``sps``
    for the per-sample sliding array).

    With ``cfg.detector_span == 1`` a bit is 1 when the mark magnitude beats
    the space magnitude.  With a longer (odd) span the correlations of the
    neighbouring symbols are added with the phase a continuous-phase tone
    sequence would have accumulated, for every neighbour pattern; the bit
    takes the centre value of the best-matching pattern.
    """
    span = cfg.detector_span
    if span == 1:
        return hard_decisions(np.abs(corr))
    n = corr.shape[0]
    pad = (span // 2) * stride
    padded = np.concatenate([np.zeros((pad, 2), complex), corr, np.zeros((pad, 2), complex)])
    t_sym = 1.0 / cfg.symbol_rate
    pats, rot = _span_patterns(span, 2 * np.pi * (cfg.if_hz + cfg.deviation) * t_sym % (2 * np.pi),
                               2 * np.pi * (cfg.if_hz - cfg.deviation) * t_sym % (2 * np.pi))
    # acc[p, k] = sum_j rot[p, j] * corr[k + (j - span//2) * stride, pats[p, j]]
    acc = np.zeros((pats.shape[0], n), complex)
    for j in range(span):
        acc += rot[:, j:j + 1] * padded[j * stride:j * stride + n][:, pats[:, j]].T
    mag = np.abs(acc)
    centre_is_mark = pats[:, span // 2] == 0
    return (mag[centre_is_mark].max(axis=0) > mag[~centre_is_mark].max(axis=0)).astype(np.uint8)


def sliding_decisions(corr: np.ndarray, cfg: FrontEndConfig) -> np.ndarray:
    """Hard decision for a symbol window starting at every sample."""
    return symbol_decisions(corr, cfg, stride=cfg.sps)


def demodulate_symbols(q: QuantizedIq, timing: SymbolTiming) -> np.ndarray:
    """Bits on the symbol grid defined by ``timing``."""
    corr = sliding_correlations(q)
    return symbol_decisions(corr[timing.offset_samples::timing.sps], q.cfg)


def _transitions(decisions: np.ndarray) -> np.ndarray:
    return np.flatnonzero(decisions[1:] != decisions[:-1]) + 1


def debounced_transitions(decisions: np.ndarray, min_run: int) -> np.ndarray:
    """Transitions of the sliding hard decision, ignoring flicker shorter than ``min_run``.

    A change is accepted once the new value holds for ``min_run`` samples; the
    transition is placed midway between the first flicker toward the new value
    and the start of the run that finally held.
    """
    raw = _transitions(decisions)
    if raw.size == 0 or min_run <= 1:
        return raw
    starts = np.concatenate([[0], raw])
    ends = np.concatenate([raw, [decisions.size]])
    accepted = []
    current = decisions[0]
    pending = -1
    for start, end in zip(starts.tolist(), ends.tolist()):
        val = decisions[start]
        if val == current:
            continue
        if end - start >= min_run:
            accepted.append((pending + start) // 2 if pending >= 0 else start)
            current = val
            pending = -1
        elif pending < 0:
            pending = start
    return np.asarray(accepted, dtype=np.int64)


def _offset_from_transitions(transitions: np.ndarray, sps: int) -> int:
    # each flip sits half a symbol before a boundary; vote on the boundary phase
    votes = np.bincount((transitions + sps // 2) % sps, minlength=sps)
    smoothed = 2 * votes + np.roll(votes, 1) + np.roll(votes, -1)
    return int(np.argmax(smoothed))


def clock_recovery(q: QuantizedIq, search_window: int = 8, start: int = 0) -> SymbolTiming:
    """Symbol phase from decision transitions in the first ``search_window`` symbols after ``start``."""
    sps = q.cfg.sps
    if q.is_constant():
        raise NoSignalError("ADC output is constant")
    d = sliding_decisions(sliding_correlations(q), q.cfg)
    seg = d[start:start + search_window * sps + 1]
    t = debounced_transitions(seg, sps // 4)
    if t.size == 0:
        raise NoSignalError("no bit transitions inside the clock-recovery window")
    return SymbolTiming(_offset_from_transitions(t + start, sps), sps)


def _preamble_runs(transitions: np.ndarray, sps: int) -> list[tuple[int, int]]:
    """(first, last) transition indices of runs spaced one symbol apart."""
    if transitions.size < PREAMBLE_MIN_TRANSITIONS:
        return []
    good = np.abs(np.diff(transitions) - sps) <= sps // 4
    runs = []
    i = 0
    n = good.size
    while i < n:
        if not good[i]:
            i += 1
            continue
        j = i
        while j < n and good[j]:
            j += 1
        if j - i >= PREAMBLE_MIN_TRANSITIONS - 1:
            runs.append((i, j))
        i = j
    return runs


def detect_and_capture(
    q: QuantizedIq,
    aa: int = 0x8E89BED6,
    aa_err_threshold: int = 2,
    start_sample: int = 0,
    capture_bits: int = MAX_BITS_AFTER_AA,
    corr: np.ndarray | None = None,
) -> PacketCapture | None:
    """Find the first preamble + access address at or after ``start_sample``.

    Returns the access address and up to ``capture_bits`` following bits, or
    None when nothing matches within ``aa_err_threshold`` bit errors.
    """
    sps = q.cfg.sps
    aa_bits = int_to_bits(aa, 32) if aa != 0x8E89BED6 else ACCESS_ADDRESS_BITS
    if corr is None:
        corr = sliding_correlations(q)
    t = debounced_transitions(sliding_decisions(corr, q.cfg), sps // 4)
    t = t[t >= start_sample]
    for first, last in _preamble_runs(t, sps):
        offset = _offset_from_transitions(t[first:last + 1], sps)
        begin = max(int(t[first]) - 2 * sps, 0)
        begin += (offset - begin) % sps
        run_bits = (int(t[last]) - int(t[first])) // sps + 1
        n_bits = min(run_bits + 16 + 32 + capture_bits, (corr.shape[0] - begin + sps - 1) // sps)
        grid = begin + sps * np.arange(n_bits)
        bits = symbol_decisions(corr[grid], q.cfg)
        mism = _accel.window_mismatches(bits[:run_bits + 16 + 32], aa_bits)
        hits = np.flatnonzero(mism <= aa_err_threshold)
        if hits.size == 0:
            continue
        j = int(hits[0])
        return PacketCapture(
            bits=bits[j:j + 32 + capture_bits].copy(),
            start_index=int(grid[j]),
            aa_errors=int(mism[j]),
            timing=SymbolTiming(offset, sps),
        )
    return None


def demodulate_packet(
    frame: IqFrame,
    fe: FrontEndConfig = FrontEndConfig(),
    channel_index: int = 37,
    aa_err_threshold: int = 2,
) -> AdvPdu:
    """Front end, detection and packet parsing; raises the first error met."""
    q = low_if_front_end(frame, fe)
    if q.is_constant():
        raise NoSignalError("ADC output is constant")
    corr = sliding_correlations(q)
    cap = detect_and_capture(q, aa_err_threshold=aa_err_threshold, corr=corr)
    if cap is None:
        if _transitions(sliding_decisions(corr, fe)).size == 0:
            raise NoSignalError("no bit transitions in frame")
        raise NoDetectionError("no access address found")
    return parse_packet(cap.bits, channel_index, max_aa_errors=aa_err_threshold)


def demodulate_quantized(q: QuantizedIq, channel_index: int = 37, aa_err_threshold: int = 2):
    """Every packet in a capture, as (capture, PDU or FrameError) pairs."""
    if q.is_constant():
        return []
    corr = sliding_correlations(q)
    out = []
    start = 0
    while True:
        cap = detect_and_capture(q, aa_err_threshold=aa_err_threshold, start_sample=start, corr=corr)
        if cap is None:
            return out
        try:
            result = parse_packet(cap.bits, channel_index, max_aa_errors=aa_err_threshold)
        except FrameError as exc:
            result = exc
        out.append((cap, result))
        start = cap.start_index + 32 * q.cfg.sps
