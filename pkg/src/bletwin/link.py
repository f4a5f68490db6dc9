"""Advertising-channel link layer: active scanning between one advertiser and one scanner.

Both roles are pure step functions ``(state, input, now) -> (state, action)``.
:func:`run_scan_simulation` drives them with a microsecond discrete-event
loop in which every transmission is modulated, passed through the channel
model and demodulated by the other side.  PHY processing takes no time; a
packet occupies the air for one microsecond per bit.
"""

from __future__ import annotations

import csv
import enum
import heapq
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelConfig, apply_channel
from .errors import BleTwinError
from .frames import ADVERTISING_CHANNELS, AdvPdu, DeviceAddress, GapBlock, PduType, assemble_packet
from .phy_rx import FrontEndConfig, demodulate_packet
from .phy_tx import IqFrame, ModConfig, gfsk_modulate

T_IFS_US = 150.0
RX_WINDOW_MARGIN_US = 10.0


def airtime_us(pdu: AdvPdu, symbol_rate: float = 1e6) -> float:
    """Preamble through CRC, one bit per symbol."""
    return (8 + 32 + 16 + 8 * pdu.header.length + 24) * 1e6 / symbol_rate


# --------------------------------------------------------------------------
# inputs and actions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Timer:
    pass


@dataclass(frozen=True)
class Received:
    pdu: AdvPdu
    channel: int


@dataclass(frozen=True)
class Transmit:
    pdu: AdvPdu
    channel: int
    at_us: float


@dataclass(frozen=True)
class Listen:
    channel: int


@dataclass(frozen=True)
class Idle:
    pass


# --------------------------------------------------------------------------
# advertiser
# --------------------------------------------------------------------------

class AdvPhase(enum.Enum):
    IDLE_WAIT = "IdleWait"
    ADVERTISING = "Advertising"
    LISTEN = "ListenForScanReq"
    SEND_RSP = "SendScanRsp"


@dataclass(frozen=True)
class AdvertiserState:
    adv_pdu: AdvPdu
    rsp_pdu: AdvPdu
    phase: AdvPhase = AdvPhase.ADVERTISING
    channel: int = 37
    timer_us: float | None = 0.0
    adv_interval_us: float = 100_000.0
    max_adv_delay_us: float = 10_000.0
    t_ifs_us: float = T_IFS_US
    channels: tuple[int, ...] = ADVERTISING_CHANNELS
    event_start_us: float = 0.0
    event_count: int = 0
    delay_seed: int = 0

    @property
    def address(self) -> DeviceAddress:
        return self.adv_pdu.adv_addr

    def listening_on(self) -> int | None:
        return self.channel if self.phase == AdvPhase.LISTEN else None


def _next_advertising_slot(state: AdvertiserState, now: float) -> AdvertiserState:
    idx = state.channels.index(state.channel)
    if idx + 1 < len(state.channels):
        return replace(state, phase=AdvPhase.ADVERTISING, channel=state.channels[idx + 1], timer_us=now)
    # end of event: interval plus a pseudo-random delay, reproducible from the seed
    delay = float(np.random.default_rng([state.delay_seed, state.event_count]).integers(
        0, int(state.max_adv_delay_us) + 1))
    start = state.event_start_us + state.adv_interval_us + delay
    return replace(state, phase=AdvPhase.IDLE_WAIT, channel=state.channels[0], timer_us=start,
                   event_start_us=start, event_count=state.event_count + 1)


def advertiser_step(state: AdvertiserState, event, now: float):
    """One transition of the advertiser; returns (new_state, action)."""
    if isinstance(event, Timer):
        if state.timer_us is None or now < state.timer_us:
            return state, Idle()
        if state.phase == AdvPhase.IDLE_WAIT:
            return replace(state, phase=AdvPhase.ADVERTISING, timer_us=now), Idle()
        if state.phase == AdvPhase.ADVERTISING:
            end = now + airtime_us(state.adv_pdu)
            deadline = end + state.t_ifs_us + airtime_us(AdvPdu.scan_req(state.address, state.address)) \
                + RX_WINDOW_MARGIN_US
            return (replace(state, phase=AdvPhase.LISTEN, timer_us=deadline),
                    Transmit(state.adv_pdu, state.channel, now))
        # listen window closed, or scan response finished
        return _next_advertising_slot(state, now), Idle()

    if isinstance(event, Received) and state.phase == AdvPhase.LISTEN:
        pdu = event.pdu
        if event.channel == state.channel and pdu.kind == PduType.SCAN_REQ and pdu.adv_addr == state.address:
            at = now + state.t_ifs_us
            return (replace(state, phase=AdvPhase.SEND_RSP, timer_us=at + airtime_us(state.rsp_pdu)),
                    Transmit(state.rsp_pdu, state.channel, at))
        return state, Listen(state.channel)

    return state, Idle()


# --------------------------------------------------------------------------
# scanner
# --------------------------------------------------------------------------

class ScanPhase(enum.Enum):
    SCANNING = "Scanning"
    AWAIT_RSP = "AwaitScanRsp"


@dataclass(frozen=True)
class ScannerState:
    address: DeviceAddress
    channel: int = 37
    phase: ScanPhase = ScanPhase.SCANNING
    timer_us: float | None = None
    pending: AdvPdu | None = None
    t_ifs_us: float = T_IFS_US
    discovered: dict = field(default_factory=dict)

    def listening_on(self) -> int | None:
        return self.channel


def scanner_step(state: ScannerState, event, now: float):
    """One transition of the active scanner; returns (new_state, action)."""
    if isinstance(event, Timer):
        if state.phase == ScanPhase.AWAIT_RSP and state.timer_us is not None and now >= state.timer_us:
            return replace(state, phase=ScanPhase.SCANNING, timer_us=None, pending=None), Listen(state.channel)
        return state, Idle()

    if not isinstance(event, Received) or event.channel != state.channel:
        return state, Idle()
    pdu = event.pdu
    if state.phase == ScanPhase.SCANNING and pdu.kind == PduType.ADV_IND:
        req = AdvPdu.scan_req(state.address, pdu.adv_addr)
        at = now + state.t_ifs_us
        deadline = at + airtime_us(req) + state.t_ifs_us + airtime_us(_MAX_PDU) + RX_WINDOW_MARGIN_US
        return (replace(state, phase=ScanPhase.AWAIT_RSP, timer_us=deadline, pending=pdu),
                Transmit(req, state.channel, at))
    if state.phase == ScanPhase.AWAIT_RSP and pdu.kind == PduType.SCAN_RSP \
            and pdu.adv_addr == state.pending.adv_addr:
        found = dict(state.discovered)
        found[pdu.adv_addr] = (state.pending.blocks, pdu.blocks)
        return (replace(state, phase=ScanPhase.SCANNING, timer_us=None, pending=None, discovered=found),
                Listen(state.channel))
    return state, Listen(state.channel)


_MAX_PDU = AdvPdu.adv_ind(DeviceAddress(bytes(6)), [GapBlock(0, bytes(29))])


# --------------------------------------------------------------------------
# trace
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceEvent:
    time_us: float
    actor: str
    action: str
    channel: int | None
    summary: str


@dataclass
class EventTrace:
    events: list[TraceEvent] = field(default_factory=list)
    advertiser: AdvertiserState | None = None
    scanner: ScannerState | None = None

    def add(self, *args) -> None:
        ev = TraceEvent(*args)
        if self.events and ev.time_us < self.events[-1].time_us:
            raise ValueError("trace timestamps must be non-decreasing")
        self.events.append(ev)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def transmissions(self) -> list[TraceEvent]:
        return [e for e in self.events if e.action == "TX"]

    def to_text(self) -> str:
        lines = []
        for e in self.events:
            ch = "--" if e.channel is None else f"{e.channel:2d}"
            lines.append(f"{e.time_us:12.1f} us  {e.actor:<10s} {e.action:<8s} ch{ch}  {e.summary}")
        return "\n".join(lines) + ("\n" if lines else "")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_us", "actor", "action", "channel", "summary"])
        for e in self.events:
            w.writerow([f"{e.time_us:.1f}", e.actor, e.action, "" if e.channel is None else e.channel, e.summary])
        return buf.getvalue()


# --------------------------------------------------------------------------
# discrete-event loop
# --------------------------------------------------------------------------

def _phy_link(pdu: AdvPdu, channel: int, chan_cfg: ChannelConfig, mod: ModConfig, fe: FrontEndConfig):
    """Send one packet through modulator, channel and receiver; returns a PDU or the receive error."""
    tx = gfsk_modulate(assemble_packet(pdu, channel), mod)
    pad = np.zeros(4 * mod.sps, complex)
    frame = IqFrame(np.concatenate([pad, tx.samples, pad]), tx.sample_rate, tx.center_hz)
    rx = apply_channel(frame, chan_cfg, signal_power=1.0)
    try:
        return demodulate_packet(rx, fe, channel)
    except BleTwinError as exc:
        return exc


def run_scan_simulation(
    adv: AdvertiserState,
    scan: ScannerState,
    channel_cfg: ChannelConfig = ChannelConfig.noiseless(),
    duration_us: float = 300_000.0,
    seed: int = 0,
    mod: ModConfig = ModConfig(),
    fe: FrontEndConfig = FrontEndConfig(),
    advertiser_step=advertiser_step,
    scanner_step=scanner_step,
) -> EventTrace:
    """Run both machines for ``duration_us``.

    The returned trace also carries the final advertiser and scanner states.
    Each transmission draws its channel seed from ``(seed, transmission index)``.
    """
    trace = EventTrace()
    states = {"advertiser": adv, "scanner": scan}
    steps = {"advertiser": advertiser_step, "scanner": scanner_step}
    peer = {"advertiser": "scanner", "scanner": "advertiser"}
    # (time, order, seq, kind, payload); at equal times deliveries go first, then transmissions, then timers
    queue: list = []
    seq = 0
    n_tx = 0

    def push(t, order, kind, payload):
        nonlocal seq
        heapq.heappush(queue, (t, order, seq, kind, payload))
        seq += 1

    def arm(actor):
        st = states[actor]
        if st.timer_us is not None:
            push(st.timer_us, 2, "timer", (actor, st.timer_us, st.phase))

    def apply(actor, event, now):
        old = states[actor]
        new, action = steps[actor](old, event, now)
        states[actor] = new
        if new.phase != old.phase or new.channel != old.channel:
            trace.add(now, actor, "STATE", new.channel, new.phase.value)
        if isinstance(action, Transmit):
            push(action.at_us, 1, "tx", (actor, action))
        if (new.timer_us, new.phase) != (old.timer_us, old.phase):
            arm(actor)

    for actor in states:
        arm(actor)

    while queue and queue[0][0] < duration_us:
        now, _, _, kind, payload = heapq.heappop(queue)
        if kind == "timer":
            actor, t, phase = payload
            if (states[actor].timer_us, states[actor].phase) != (t, phase):
                continue  # superseded
            apply(actor, Timer(), now)
        elif kind == "tx":
            actor, action = payload
            trace.add(now, actor, "TX", action.channel, action.pdu.summary())
            cfg = channel_cfg.with_(seed=int(np.random.SeedSequence([seed, n_tx]).generate_state(1)[0]))
            n_tx += 1
            result = _phy_link(action.pdu, action.channel, cfg, mod, fe)
            push(now + airtime_us(action.pdu, mod.symbol_rate), 0, "rx", (peer[actor], action.channel, result))
        else:
            actor, ch, result = payload
            if states[actor].listening_on() != ch:
                continue
            if isinstance(result, AdvPdu):
                trace.add(now, actor, "RX", ch, result.summary())
                apply(actor, Received(result, ch), now)
            else:
                trace.add(now, actor, "RX_FAIL", ch, f"{type(result).__name__}: {result}")
    trace.advertiser = states["advertiser"]
    trace.scanner = states["scanner"]
    return trace
