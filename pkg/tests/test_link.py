"""Active scanning: step functions, event loop and trace export."""

import time

import pytest

from bletwin.channel import ChannelConfig
from bletwin.frames import AdvPdu, DeviceAddress, GapBlock, PduType
from bletwin.link import (
    T_IFS_US,
    AdvertiserState,
    AdvPhase,
    EventTrace,
    Idle,
    Received,
    ScannerState,
    ScanPhase,
    Timer,
    Transmit,
    advertiser_step,
    airtime_us,
    run_scan_simulation,
    scanner_step,
)

ADV_A = DeviceAddress.from_string("C0:FF:EE:00:00:01")
SCAN_A = DeviceAddress.from_string("11:22:33:44:55:66")
OTHER = DeviceAddress.from_string("DE:AD:BE:EF:00:00")


def advertiser(**kw):
    return AdvertiserState(AdvPdu.adv_ind(ADV_A, [GapBlock(0x09, b"SCUM")]),
                           AdvPdu.scan_rsp(ADV_A, [GapBlock(0xFF, b"hello")]), **kw)


def kinds(trace, action="TX"):
    return [e.summary.split()[0] for e in trace if e.action == action]


class TestAirtime:
    def test_lengths(self):
        assert airtime_us(AdvPdu.scan_req(SCAN_A, ADV_A)) == 176.0
        assert airtime_us(AdvPdu.adv_ind(ADV_A, [GapBlock(0, bytes(29))])) == 376.0


class TestAdvertiserStep:
    def test_transmits_then_listens(self):
        st, act = advertiser_step(advertiser(), Timer(), 0.0)
        assert isinstance(act, Transmit) and act.pdu.kind == PduType.ADV_IND
        assert st.phase == AdvPhase.LISTEN and st.listening_on() == 37

    def test_answers_matching_scan_req(self):
        st, _ = advertiser_step(advertiser(), Timer(), 0.0)
        st, act = advertiser_step(st, Received(AdvPdu.scan_req(SCAN_A, ADV_A), 37), 500.0)
        assert isinstance(act, Transmit) and act.pdu.kind == PduType.SCAN_RSP
        assert act.at_us == 500.0 + T_IFS_US
        assert st.phase == AdvPhase.SEND_RSP

    def test_ignores_foreign_scan_req(self):
        st, _ = advertiser_step(advertiser(), Timer(), 0.0)
        st2, act = advertiser_step(st, Received(AdvPdu.scan_req(SCAN_A, OTHER), 37), 500.0)
        assert not isinstance(act, Transmit)
        assert st2 == st

    def test_listen_timeout_moves_to_next_channel(self):
        st, _ = advertiser_step(advertiser(), Timer(), 0.0)
        st, _ = advertiser_step(st, Timer(), st.timer_us)
        assert (st.phase, st.channel) == (AdvPhase.ADVERTISING, 38)

    def test_event_ends_in_idle_with_bounded_delay(self):
        st = advertiser(channel=39)
        st, _ = advertiser_step(st, Timer(), 0.0)
        st, _ = advertiser_step(st, Timer(), st.timer_us)
        assert st.phase == AdvPhase.IDLE_WAIT and st.channel == 37
        assert 100_000.0 <= st.timer_us <= 110_000.0

    def test_early_timer_is_ignored(self):
        st = advertiser(timer_us=50.0)
        assert advertiser_step(st, Timer(), 10.0) == (st, Idle())


class TestScannerStep:
    def test_requests_on_adv_ind(self):
        adv = AdvPdu.adv_ind(ADV_A)
        st, act = scanner_step(ScannerState(SCAN_A), Received(adv, 37), 176.0)
        assert act == Transmit(AdvPdu.scan_req(SCAN_A, ADV_A), 37, 176.0 + T_IFS_US)
        assert st.phase == ScanPhase.AWAIT_RSP and st.pending == adv

    def test_records_response(self):
        adv = AdvPdu.adv_ind(ADV_A, [GapBlock(9, b"x")])
        st, _ = scanner_step(ScannerState(SCAN_A), Received(adv, 37), 0.0)
        st, _ = scanner_step(st, Received(AdvPdu.scan_rsp(ADV_A, [GapBlock(1, b"y")]), 37), 600.0)
        assert st.phase == ScanPhase.SCANNING
        assert st.discovered[ADV_A] == ((GapBlock(9, b"x"),), (GapBlock(1, b"y"),))

    def test_response_timeout(self):
        st, _ = scanner_step(ScannerState(SCAN_A), Received(AdvPdu.adv_ind(ADV_A), 37), 0.0)
        st, _ = scanner_step(st, Timer(), st.timer_us)
        assert st.phase == ScanPhase.SCANNING and not st.discovered

    def test_other_channel_ignored(self):
        st = ScannerState(SCAN_A)
        assert scanner_step(st, Received(AdvPdu.adv_ind(ADV_A), 38), 0.0) == (st, Idle())


class TestSimulation:
    def test_lossless_sequence(self):
        t0 = time.perf_counter()
        trace = run_scan_simulation(advertiser(), ScannerState(SCAN_A), duration_us=5_000)
        assert time.perf_counter() - t0 < 5
        assert kinds(trace)[:4] == ["ADV_IND", "SCAN_REQ", "SCAN_RSP", "ADV_IND"]
        assert kinds(trace, "RX")[:3] == ["ADV_IND", "SCAN_REQ", "SCAN_RSP"]
        assert ADV_A in trace.scanner.discovered

    def test_interframe_spacing_is_exact(self):
        trace = run_scan_simulation(advertiser(), ScannerState(SCAN_A), duration_us=2_000)
        ev = [e for e in trace if e.action in ("TX", "RX")]
        rx_adv = next(e for e in ev if e.action == "RX" and e.summary.startswith("ADV_IND"))
        tx_req = next(e for e in ev if e.action == "TX" and e.summary.startswith("SCAN_REQ"))
        rx_req = next(e for e in ev if e.action == "RX" and e.summary.startswith("SCAN_REQ"))
        tx_rsp = next(e for e in ev if e.action == "TX" and e.summary.startswith("SCAN_RSP"))
        assert tx_req.time_us - rx_adv.time_us == T_IFS_US
        assert tx_rsp.time_us - rx_req.time_us == T_IFS_US

    def test_mismatched_adva_gets_no_response(self):
        def misaddressed(state, event, now):
            st, act = scanner_step(state, event, now)
            if isinstance(act, Transmit) and act.pdu.kind == PduType.SCAN_REQ:
                act = Transmit(AdvPdu.scan_req(SCAN_A, OTHER), act.channel, act.at_us)
            return st, act

        trace = run_scan_simulation(advertiser(), ScannerState(SCAN_A), duration_us=250_000,
                                    scanner_step=misaddressed)
        assert "SCAN_REQ" in kinds(trace)
        assert "SCAN_RSP" not in kinds(trace)
        assert not trace.scanner.discovered

    def test_deep_fade_no_transaction(self):
        trace = run_scan_simulation(advertiser(), ScannerState(SCAN_A), ChannelConfig(snr_db=-10),
                                    duration_us=2_000)
        assert "SCAN_REQ" not in kinds(trace)
        assert "RX_FAIL" in {e.action for e in trace}

    def test_zero_duration(self):
        assert len(run_scan_simulation(advertiser(), ScannerState(SCAN_A), duration_us=0)) == 0

    def test_periodic_events(self):
        trace = run_scan_simulation(advertiser(), ScannerState(SCAN_A), duration_us=250_000)
        assert kinds(trace).count("SCAN_RSP") == 3

    def test_deterministic(self):
        cfg = ChannelConfig(snr_db=12)
        a = run_scan_simulation(advertiser(), ScannerState(SCAN_A), cfg, duration_us=120_000, seed=5)
        b = run_scan_simulation(advertiser(), ScannerState(SCAN_A), cfg, duration_us=120_000, seed=5)
        assert a.to_csv() == b.to_csv()


class TestTrace:
    def test_time_must_not_go_back(self):
        tr = EventTrace()
        tr.add(5.0, "scanner", "TX", 37, "x")
        with pytest.raises(ValueError):
            tr.add(4.0, "scanner", "TX", 37, "y")

    def test_csv_and_text(self):
        trace = run_scan_simulation(advertiser(), ScannerState(SCAN_A), duration_us=1_000)
        csv_lines = trace.to_csv().splitlines()
        assert csv_lines[0] == "time_us,actor,action,channel,summary"
        assert len(csv_lines) == len(trace) + 1
        text = trace.to_text().splitlines()
        assert len(text) == len(trace)
        assert "ADV_IND" in text[1]
