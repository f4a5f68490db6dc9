"""Digital twin of a crystal-free, low-IF Bluetooth LE 1M transceiver.

Modules: :mod:`frames` (packet codec), :mod:`phy_tx` (GFSK modulator),
:mod:`channel` (impairments), :mod:`phy_rx` (quantised receiver),
:mod:`link` (active scanning), :mod:`harness` (PER sweeps),
:mod:`iqfile` (capture files) and :mod:`cli`.
"""

__version__ = "0.1.0"

from ._accel import BACKEND
from .channel import ChannelConfig, apply_channel, power_to_snr
from .frames import AdvPdu, DeviceAddress, GapBlock, PduType, assemble_packet, parse_packet
from .harness import SweepConfig, SweepResult, per_to_ber, run_per_sweep, sensitivity_from_sweep
from .link import AdvertiserState, EventTrace, ScannerState, run_scan_simulation
from .phy_rx import FrontEndConfig, demodulate_packet, low_if_front_end
from .phy_tx import IqFrame, ModConfig, gfsk_modulate

__all__ = [
    "BACKEND",
    "AdvPdu",
    "AdvertiserState",
    "ChannelConfig",
    "DeviceAddress",
    "EventTrace",
    "FrontEndConfig",
    "GapBlock",
    "IqFrame",
    "ModConfig",
    "PduType",
    "ScannerState",
    "SweepConfig",
    "SweepResult",
    "apply_channel",
    "assemble_packet",
    "demodulate_packet",
    "gfsk_modulate",
    "low_if_front_end",
    "parse_packet",
    "per_to_ber",
    "power_to_snr",
    "run_per_sweep",
    "run_scan_simulation",
    "sensitivity_from_sweep",
]
