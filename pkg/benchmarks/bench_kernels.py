"""Compare the numba and pure-numpy kernels on packet-sized inputs.

    python benchmarks/bench_kernels.py [--repeat N]

Each kernel is warmed up once (so JIT compilation is excluded), then timed
as the best of N runs.  A final row times one full receive of a
maximum-length packet with each backend, run in a subprocess so the
backend flag takes effect at import.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from bletwin import _accel
from bletwin.phy_rx import FrontEndConfig, tone_templates

RECEIVE_SNIPPET = """
import numpy as np, timeit
from bletwin import frames as F
from bletwin.phy_tx import gfsk_modulate
from bletwin.phy_rx import demodulate_packet
pdu = F.random_pdu(np.random.default_rng(0), 37, F.PduType.ADV_IND)
tx = gfsk_modulate(F.assemble_packet(pdu, 37))
frame = tx.with_samples(np.concatenate([np.zeros(64), tx.samples, np.zeros(64)]))
demodulate_packet(frame)
print(min(timeit.repeat(lambda: demodulate_packet(frame), number=1, repeat={repeat})))
"""


def workloads(rng):
    n = 6200  # one max-length packet at 16 samples per symbol, plus padding
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    bits = rng.integers(0, 2, 400).astype(np.uint8)
    return {
        "crc24_register": (rng.integers(0, 2, 344).astype(np.uint8), 0x555555, 0x65B),
        "sliding_correlation": (x, tone_templates(FrontEndConfig())),
        "sinc_resample": (x, 1.0001, int((n - 1) / 1.0001) + 1),
        "window_mismatches": (bits, bits[100:132].copy()),
    }


def best_of(fn, args, repeat):
    fn(*args)  # warm-up / compile
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def receive_time(no_numba: bool, repeat: int) -> float:
    env = dict(os.environ, BLETWIN_NO_NUMBA="1" if no_numba else "0")
    out = subprocess.run([sys.executable, "-c", RECEIVE_SNIPPET.format(repeat=repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")

    np_k, nb_k = _accel.numpy_kernels(), _accel.numba_kernels()
    rows = []
    for name, wl in workloads(np.random.default_rng(0)).items():
        t_np = best_of(np_k[name], wl, args.repeat)
        t_nb = best_of(nb_k[name], wl, args.repeat)
        rows.append((name, t_np, t_nb))
    rows.append(("demodulate_packet (full)", receive_time(True, args.repeat), receive_time(False, args.repeat)))

    print(f"{'kernel':<26s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speed-up':>9s}")
    for name, t_np, t_nb in rows:
        print(f"{name:<26s} {t_np * 1e3:11.3f} {t_nb * 1e3:11.3f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
