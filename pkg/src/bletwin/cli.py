"""Command-line entry point: ``bletwin <subcommand> ...``.

Subcommands::

    encode       PDU hex (header + payload, no CRC) -> on-air packet hex
    decode       packet hex lines or an I/Q capture -> parsed packet report
    modulate     PDU hex -> I/Q file (iq16, or q4 after the receiver front end)
    demodulate   I/Q file -> every packet found
    sweep        key=value sweep config -> CSV of level,n,errors,per,ber
    scan-sim     key=value scan config -> event trace (text or CSV)

Configuration files are plain ``key = value`` lines with ``#`` comments; see
the README for the recognised keys.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .channel import ChannelConfig, apply_channel
from .errors import BleTwinError, ConfigError
from .frames import (
    AdvPdu,
    DeviceAddress,
    GapBlock,
    air_bits_to_hex,
    assemble_packet,
    hex_to_air_bits,
    parse_packet,
    pdu_from_bytes,
)
from .harness import apply_overrides, load_kv, run_per_sweep, sensitivity_from_sweep, sweep_config_from_kv
from .iqfile import detect_format, read_iq, read_q4, write_iq, write_q4
from .link import AdvertiserState, ScannerState, run_scan_simulation
from .phy_rx import FrontEndConfig, demodulate_quantized, low_if_front_end
from .phy_tx import ModConfig, gfsk_modulate


def _hex_lines(args) -> list[str]:
    if args.hex:
        return list(args.hex)
    src = sys.stdin if args.input in (None, "-") else None
    try:
        text = src.read() if src else Path(args.input).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {args.input}: {exc.strerror}") from None
    return [ln.split("#", 1)[0].strip() for ln in text.splitlines() if ln.split("#", 1)[0].strip()]


def _pdu_from_hex(text: str) -> AdvPdu:
    try:
        raw = bytes.fromhex(text.replace(" ", "").replace(":", ""))
    except ValueError:
        raise ConfigError(f"not a hex string: {text!r}") from None
    return pdu_from_bytes(raw)


def _write_text(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _configs(args) -> dict[str, str]:
    return load_kv(args.config) if args.config else {}


def _split(values: dict[str, str]) -> tuple[dict, dict, dict, dict]:
    top, fe, mod, chan = {}, {}, {}, {}
    for k, v in values.items():
        head, _, tail = k.partition(".")
        target = {"fe": fe, "mod": mod, "channel": chan}.get(head) if tail else None
        if target is None:
            top[k] = v
        else:
            target[tail] = v
    return top, fe, mod, chan


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_encode(args) -> int:
    for line in _hex_lines(args):
        bits = assemble_packet(_pdu_from_hex(line), args.channel)
        print(air_bits_to_hex(bits))
    return 0


def _report(pdu: AdvPdu) -> str:
    return pdu.summary()


def _demod_file(args) -> list:
    fmt = args.format or detect_format(args.input)
    if fmt == "q4":
        q = read_q4(args.input)
    else:
        _, fe, _, _ = _split(_configs(args))
        q = low_if_front_end(read_iq(args.input), apply_overrides(FrontEndConfig(), fe, "fe."))
    return demodulate_quantized(q, args.channel)


def _is_capture(path) -> bool:
    if path == "-":
        return False
    try:
        detect_format(path)
    except BleTwinError:
        return False
    return True


def cmd_decode(args) -> int:
    if args.input and not args.hex and _is_capture(args.input):
        results = [r for _, r in _demod_file(args)]
        if not results:
            raise BleTwinError("no packet found in capture")
    else:
        results = []
        for line in _hex_lines(args):
            try:
                results.append(parse_packet(hex_to_air_bits(line), args.channel))
            except BleTwinError as exc:
                results.append(exc)
    failed = 0
    for r in results:
        if isinstance(r, AdvPdu):
            print(_report(r))
        else:
            failed += 1
            print(f"ERROR {type(r).__name__}: {r}")
    if failed:
        raise BleTwinError(f"{failed} of {len(results)} packets failed to decode")
    return 0


def cmd_modulate(args) -> int:
    if not args.output:
        raise ConfigError("modulate needs --output")
    top, fe, mod, chan = _split(_configs(args))
    mcfg = apply_overrides(ModConfig(), mod, "mod.")
    pdus = [_pdu_from_hex(h) for h in _hex_lines(args)]
    gap = np.zeros(int(top.get("gap_symbols", 8)) * mcfg.sps, complex)
    parts = [gap]
    for pdu in pdus:
        parts += [gfsk_modulate(assemble_packet(pdu, args.channel), mcfg).samples, gap]
    frame = gfsk_modulate([0], mcfg).with_samples(np.concatenate(parts))
    if chan or args.snr is not None:
        ccfg = apply_overrides(ChannelConfig(), chan, "channel.")
        if args.snr is not None:
            ccfg = ccfg.with_(snr_db=args.snr, rx_power_dbm=None)
        if ccfg.snr_db is None and ccfg.rx_power_dbm is None:
            ccfg = ccfg.with_(snr_db=float("inf"))
        frame = apply_channel(frame, ccfg.with_(seed=args.seed), signal_power=1.0)
    if (args.format or "iq16") == "q4":
        n = write_q4(args.output, low_if_front_end(frame, apply_overrides(FrontEndConfig(), fe, "fe.")))
    else:
        n = write_iq(args.output, frame)
    print(f"wrote {len(pdus)} packet(s), {n} bytes to {args.output}")
    return 0


def cmd_demodulate(args) -> int:
    if not args.input:
        raise ConfigError("demodulate needs an input file")
    found = _demod_file(args)
    good = 0
    for cap, r in found:
        if isinstance(r, AdvPdu):
            good += 1
            print(f"@{cap.start_index:8d}  aa_err={cap.aa_errors}  {_report(r)}")
        else:
            print(f"@{cap.start_index:8d}  ERROR {type(r).__name__}: {r}")
    if not good:
        raise BleTwinError("no valid packet recovered")
    return 0


def cmd_sweep(args) -> int:
    if not args.config:
        raise ConfigError("sweep needs --config")
    cfg = sweep_config_from_kv(_configs(args), seed=args.seed)
    if args.workers is not None:
        cfg = cfg.with_(workers=args.workers)
    result = run_per_sweep(cfg)
    text = result.to_csv()
    sens = sensitivity_from_sweep(result) if len(cfg.levels) >= 2 else None
    _write_text(args.output, text)
    unit = "dB" if cfg.level_kind == "snr_db" else "dBm"
    print(f"sensitivity (PER <= 30.8%): {'not reached' if sens is None else f'{sens:.2f} {unit}'}",
          file=sys.stderr)
    return 0


def cmd_scan_sim(args) -> int:
    top, fe, mod, chan = _split(_configs(args))
    known = {"duration_us", "adv_address", "scan_address", "adv_name", "rsp_data", "trace_format"}
    unknown = set(top) - known
    if unknown:
        raise ConfigError(f"unknown setting {sorted(unknown)[0]}")
    adv_addr = DeviceAddress.from_string(top.get("adv_address", "C0:FF:EE:00:00:01"))
    scan_addr = DeviceAddress.from_string(top.get("scan_address", "11:22:33:44:55:66"))
    name = top.get("adv_name", "bletwin").encode()
    try:
        rsp = bytes.fromhex(top.get("rsp_data", "48656c6c6f"))
    except ValueError:
        raise ConfigError("rsp_data must be hex") from None
    adv = AdvertiserState(AdvPdu.adv_ind(adv_addr, [GapBlock(0x09, name)]),
                          AdvPdu.scan_rsp(adv_addr, [GapBlock(0xFF, rsp)]), delay_seed=args.seed)
    ccfg = apply_overrides(ChannelConfig(), chan, "channel.")
    if ccfg.snr_db is None and ccfg.rx_power_dbm is None:
        ccfg = ccfg.with_(snr_db=float("inf"))
    trace = run_scan_simulation(
        adv, ScannerState(scan_addr), ccfg, duration_us=float(top.get("duration_us", 300_000)), seed=args.seed,
        mod=apply_overrides(ModConfig(), mod, "mod."), fe=apply_overrides(FrontEndConfig(), fe, "fe."))
    style = args.trace_format or top.get("trace_format", "text")
    if style not in ("text", "csv"):
        raise ConfigError(f"trace_format must be text or csv, got {style!r}")
    _write_text(args.output, trace.to_csv() if style == "csv" else trace.to_text())
    return 0


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--format", choices=("iq16", "q4"), help="I/Q file format")
    common.add_argument("--channel", type=int, default=37, help="advertising channel (default 37)")
    common.add_argument("-o", "--output", help="output file (default stdout where applicable)")

    p = argparse.ArgumentParser(prog="bletwin", description="BLE LE 1M transceiver digital twin")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def hex_input(sp):
        sp.add_argument("input", nargs="?", help="file of hex lines ('-' for stdin)")
        sp.add_argument("--hex", action="append", help="hex string (repeatable)")

    sp = sub.add_parser("encode", parents=[common], help="PDU hex -> on-air packet hex")
    hex_input(sp)
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("decode", parents=[common], help="packet hex or I/Q capture -> report")
    hex_input(sp)
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("modulate", parents=[common], help="PDU hex -> I/Q file")
    hex_input(sp)
    sp.add_argument("--snr", type=float, help="add noise at this SNR (dB)")
    sp.set_defaults(func=cmd_modulate)

    sp = sub.add_parser("demodulate", parents=[common], help="I/Q file -> packets")
    sp.add_argument("input", help="IQ16 or Q4 file")
    sp.set_defaults(func=cmd_demodulate)

    sp = sub.add_parser("sweep", parents=[common], help="PER sweep -> CSV")
    sp.add_argument("--workers", type=int, help="worker processes (0 = one per CPU)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("scan-sim", parents=[common], help="active-scanning simulation -> trace")
    sp.add_argument("--trace-format", choices=("text", "csv"))
    sp.set_defaults(func=cmd_scan_sim)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (BleTwinError, ValueError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"bletwin {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
