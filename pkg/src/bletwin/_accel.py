"""Hot inner loops, compiled with numba when available.

Every kernel has two implementations with identical semantics: a numba
``@njit`` loop and a vectorised numpy version.  The public names in this
module are bound to one or the other at import time.  Set
``BLETWIN_NO_NUMBA=1`` in the environment to force the numpy path (useful
for debugging and for checking that both paths agree).
"""

from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("BLETWIN_NO_NUMBA", "0").lower() in ("", "0", "false", "no")
BACKEND = "numba" if USE_NUMBA else "numpy"

__all__ = [
    "BACKEND",
    "HAVE_NUMBA",
    "crc24_register",
    "sliding_correlation",
    "sinc_resample",
    "window_mismatches",
]


# --------------------------------------------------------------------------
# CRC-24 register
# --------------------------------------------------------------------------

def _crc24_register_py(bits, init, poly):
    reg = int(init)
    for b in bits:
        fb = ((reg >> 23) & 1) ^ int(b)
        reg = (reg << 1) & 0xFFFFFF
        if fb:
            reg ^= poly
    return reg


# --------------------------------------------------------------------------
# Sliding complex correlation against short templates
# --------------------------------------------------------------------------

def _sliding_correlation_np(x, templates):
    n_tap = templates.shape[1]
    if x.shape[0] < n_tap:
        return np.zeros((0, templates.shape[0]), dtype=np.complex128)
    windows = sliding_window_view(x, n_tap)
    return windows @ templates.T


# --------------------------------------------------------------------------
# Windowed-sinc fractional resampler
# --------------------------------------------------------------------------

def _sinc_resample_np(x, step, n_out, half_taps, beta):
    t = np.arange(n_out) * step
    base = np.floor(t).astype(np.int64)
    frac = t - base
    k = np.arange(-half_taps + 1, half_taps + 1)
    idx = base[:, None] + k[None, :]
    d = frac[:, None] - k[None, :]
    w = np.sinc(d) * np.i0(beta * np.sqrt(np.clip(1.0 - (d / half_taps) ** 2, 0.0, None))) / np.i0(beta)
    valid = (idx >= 0) & (idx < x.shape[0])
    gathered = np.where(valid, x[np.clip(idx, 0, x.shape[0] - 1)], 0.0)
    return (gathered * w).sum(axis=1)


# --------------------------------------------------------------------------
# Hamming distance of every window of a bit stream against a pattern
# --------------------------------------------------------------------------

def _window_mismatches_np(bits, pattern):
    n = pattern.shape[0]
    if bits.shape[0] < n:
        return np.zeros(0, dtype=np.int64)
    windows = sliding_window_view(bits, n)
    return (windows != pattern[None, :]).sum(axis=1).astype(np.int64)


if HAVE_NUMBA:

    @njit(cache=True)
    def _crc24_register_nb(bits, init, poly):
        reg = init
        for i in range(bits.shape[0]):
            fb = ((reg >> 23) & 1) ^ (bits[i] & 1)
            reg = (reg << 1) & 0xFFFFFF
            if fb:
                reg ^= poly
        return reg

    @njit(cache=True)
    def _sliding_correlation_nb(x, templates):
        n_tmpl, n_tap = templates.shape
        n = x.shape[0] - n_tap + 1
        if n < 0:
            n = 0
        out = np.empty((n, n_tmpl), dtype=np.complex128)
        for i in range(n):
            for t in range(n_tmpl):
                acc = 0j
                for m in range(n_tap):
                    acc += x[i + m] * templates[t, m]
                out[i, t] = acc
        return out

    @njit(cache=True)
    def _bessel_i0(v):
        # power series; converges quickly for the window betas used here
        s = 1.0
        term = 1.0
        k = 1
        while True:
            term *= (v / (2.0 * k)) ** 2
            s += term
            if term < 1e-17 * s:
                break
            k += 1
        return s

    @njit(cache=True)
    def _sinc_resample_nb(x, step, n_out, half_taps, beta):
        out = np.zeros(n_out, dtype=np.complex128)
        norm = _bessel_i0(beta)
        n_in = x.shape[0]
        for m in range(n_out):
            t = m * step
            base = int(np.floor(t))
            frac = t - base
            acc = 0j
            for k in range(-half_taps + 1, half_taps + 1):
                j = base + k
                if j < 0 or j >= n_in:
                    continue
                d = frac - k
                if d == 0.0:
                    s = 1.0
                else:
                    s = np.sin(np.pi * d) / (np.pi * d)
                r = 1.0 - (d / half_taps) ** 2
                if r < 0.0:
                    r = 0.0
                acc += x[j] * s * _bessel_i0(beta * np.sqrt(r)) / norm
            out[m] = acc
        return out

    @njit(cache=True)
    def _window_mismatches_nb(bits, pattern):
        n = pattern.shape[0]
        n_win = bits.shape[0] - n + 1
        if n_win < 0:
            n_win = 0
        out = np.empty(n_win, dtype=np.int64)
        for i in range(n_win):
            c = 0
            for k in range(n):
                if bits[i + k] != pattern[k]:
                    c += 1
            out[i] = c
        return out


def crc24_register(bits: np.ndarray, init: int, poly: int) -> int:
    """Clock ``bits`` through a 24-bit Galois LFSR and return the final state."""
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    if USE_NUMBA:
        return int(_crc24_register_nb(bits, np.int64(init), np.int64(poly)))
    return _crc24_register_py(bits, init, poly)


def sliding_correlation(x: np.ndarray, templates: np.ndarray) -> np.ndarray:
    """Complex correlation of every length-L window of ``x`` with each template.

    ``templates`` has shape (n_templates, L) and already holds the conjugated
    reference tones.  Returns shape (len(x) - L + 1, n_templates).
    """
    x = np.ascontiguousarray(x, dtype=np.complex128)
    templates = np.ascontiguousarray(templates, dtype=np.complex128)
    if USE_NUMBA:
        return _sliding_correlation_nb(x, templates)
    return _sliding_correlation_np(x, templates)


def sinc_resample(x: np.ndarray, step: float, n_out: int, half_taps: int = 16, beta: float = 8.0) -> np.ndarray:
    """Evaluate ``x`` at fractional input positions ``m * step`` for m < n_out."""
    x = np.ascontiguousarray(x, dtype=np.complex128)
    if USE_NUMBA:
        return _sinc_resample_nb(x, float(step), int(n_out), int(half_taps), float(beta))
    return _sinc_resample_np(x, float(step), int(n_out), int(half_taps), float(beta))


def window_mismatches(bits: np.ndarray, pattern: np.ndarray) -> np.ndarray:
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    pattern = np.ascontiguousarray(pattern, dtype=np.uint8)
    if USE_NUMBA:
        return _window_mismatches_nb(bits, pattern)
    return _window_mismatches_np(bits, pattern)


def numpy_kernels():
    """The pure-numpy implementations, regardless of the active backend."""
    return {
        "crc24_register": lambda bits, init, poly: _crc24_register_py(
            np.asarray(bits, dtype=np.uint8), init, poly),
        "sliding_correlation": lambda x, t: _sliding_correlation_np(
            np.asarray(x, dtype=np.complex128), np.asarray(t, dtype=np.complex128)),
        "sinc_resample": lambda x, step, n_out, half_taps=16, beta=8.0: _sinc_resample_np(
            np.asarray(x, dtype=np.complex128), float(step), int(n_out), int(half_taps), float(beta)),
        "window_mismatches": lambda bits, p: _window_mismatches_np(
            np.asarray(bits, dtype=np.uint8), np.asarray(p, dtype=np.uint8)),
    }


def numba_kernels():
    """The compiled implementations; raises if numba is not importable."""
    if not HAVE_NUMBA:
        raise RuntimeError("numba is not available")
    return {
        "crc24_register": lambda bits, init, poly: int(_crc24_register_nb(
            np.ascontiguousarray(bits, dtype=np.uint8), np.int64(init), np.int64(poly))),
        "sliding_correlation": lambda x, t: _sliding_correlation_nb(
            np.ascontiguousarray(x, dtype=np.complex128), np.ascontiguousarray(t, dtype=np.complex128)),
        "sinc_resample": lambda x, step, n_out, half_taps=16, beta=8.0: _sinc_resample_nb(
            np.ascontiguousarray(x, dtype=np.complex128), float(step), int(n_out), int(half_taps), float(beta)),
        "window_mismatches": lambda bits, p: _window_mismatches_nb(
            np.ascontiguousarray(bits, dtype=np.uint8), np.ascontiguousarray(p, dtype=np.uint8)),
    }
