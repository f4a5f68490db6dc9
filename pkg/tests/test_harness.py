import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bletwin.channel import ChannelConfig
from bletwin.errors import ConfigError
from bletwin.harness import (
    CSV_COLUMNS,
    SweepConfig,
    SweepResult,
    apply_overrides,
    ber_to_per,
    parse_kv_text,
    per_to_ber,
    run_packet,
    run_per_sweep,
    sensitivity_from_sweep,
    sweep_config_from_kv,
)
from bletwin.phy_rx import FrontEndConfig


def fake_result(levels, per, n=2000):
    cfg = SweepConfig(levels=levels, packets_per_level=n)
    return SweepResult(cfg, tuple(levels), (n,) * len(levels), tuple(int(round(p * n)) for p in per))


class TestPerBer:
    def test_equivalence_point(self):
        assert per_to_ber(0.308, 368) == pytest.approx(0.001, abs=1e-5)

    def test_bounds(self):
        assert per_to_ber(0.0, 368) == 0.0
        assert per_to_ber(1.0, 368) == 1.0

    @pytest.mark.parametrize("bad", [-0.01, 1.01, math.nan])
    def test_out_of_range(self, bad):
        with pytest.raises(ConfigError):
            per_to_ber(bad)

    @given(st.floats(1e-9, 1 - 1e-9), st.floats(1e-9, 1 - 1e-9))
    def test_strictly_increasing(self, a, b):
        if a < b * (1 - 1e-9):
            assert per_to_ber(a) < per_to_ber(b)
        if a <= b:
            assert per_to_ber(a) <= per_to_ber(b)

    @given(st.floats(0, 1))
    def test_inverse(self, per):
        assert ber_to_per(per_to_ber(per, 368), 368) == pytest.approx(per, abs=1e-12)

    def test_max_packet_bits(self):
        assert SweepConfig(levels=(0,)).bits_per_packet == 368


class TestSensitivity:
    def test_all_pass_returns_lowest(self):
        assert sensitivity_from_sweep(fake_result((-80, -75, -70), (0.1, 0.01, 0))) == -80

    def test_all_fail(self):
        assert sensitivity_from_sweep(fake_result((-80, -75), (0.9, 0.5))) is None

    def test_interpolates_between_brackets(self):
        s = sensitivity_from_sweep(fake_result((-72, -70), (0.5, 0.2)))
        assert -72 < s < -70
        expected = -72 + 2 * (math.log10(0.308) - math.log10(0.5)) / (math.log10(0.2) - math.log10(0.5))
        assert s == pytest.approx(expected, abs=1e-9)

    def test_unsorted_levels(self):
        assert sensitivity_from_sweep(fake_result((-70, -72), (0.2, 0.5))) == \
            sensitivity_from_sweep(fake_result((-72, -70), (0.5, 0.2)))

    def test_needs_two_levels(self):
        with pytest.raises(ConfigError):
            sensitivity_from_sweep(fake_result((-70,), (0.1,)))


class TestSweep:
    def test_channel_disabled_is_error_free(self):
        r = run_per_sweep(SweepConfig(levels=(-30.0, 0.0), packets_per_level=40, channel_enabled=False))
        assert r.errors == (0, 0)

    def test_far_below_threshold_loses_everything(self):
        r = run_per_sweep(SweepConfig(levels=(-20.0,), packets_per_level=2000))
        assert r.per[0] == 1.0

    def test_accounting_and_csv(self):
        r = run_per_sweep(SweepConfig(levels=(8, 11, 30), packets_per_level=30, seed=2))
        assert all(0 <= e <= n for e, n in zip(r.errors, r.n))
        lines = r.to_csv().splitlines()
        assert lines[0].startswith("# bletwin-sweep/1")
        assert lines[1] == ",".join(CSV_COLUMNS) == "level,n,errors,per,ber"
        assert len(lines) == 5
        assert r.errors[2] == 0

    def test_power_levels(self):
        cfg = SweepConfig(levels=(-120.0, -60.0), level_kind="power_dbm", packets_per_level=10)
        assert run_per_sweep(cfg).errors == (10, 0)

    def test_deterministic_and_worker_independent(self):
        cfg = SweepConfig(levels=(10.0, 12.0), packets_per_level=24, seed=7)
        a = run_per_sweep(cfg)
        b = run_per_sweep(cfg.with_(workers=2))
        assert a.to_csv() == b.to_csv()
        assert (a.levels, a.n, a.errors) == (b.levels, b.n, b.errors)

    def test_packet_is_reproducible(self):
        cfg = SweepConfig(levels=(11.0,), seed=3)
        assert [run_packet(cfg, 0, k) for k in range(10)] == [run_packet(cfg, 0, k) for k in range(10)]

    def test_impairments_from_template(self):
        cfg = SweepConfig(levels=(25.0,), packets_per_level=20, channel=ChannelConfig(cfo_hz=40e3))
        assert cfg.channel_at(0, 1).cfo_hz == 40e3
        assert run_per_sweep(cfg).errors == (0,)

    @pytest.mark.parametrize("kw", [dict(levels=()), dict(level_kind="volts"), dict(packets_per_level=0),
                                    dict(workers=-1)])
    def test_rejects(self, kw):
        base = dict(levels=(1.0,))
        base.update(kw)
        with pytest.raises(ConfigError):
            SweepConfig(**base)

    def test_monotonicity_check(self):
        assert fake_result((1, 2, 3), (0.5, 0.2, 0.05)).is_monotone()
        assert fake_result((1, 2, 3), (0.5, 0.51, 0.05)).is_monotone()
        assert not fake_result((1, 2, 3), (0.2, 0.5, 0.05)).is_monotone()


class TestKvConfig:
    def test_parse(self):
        text = "# comment\nlevels = 1, 2 3\n\npackets_per_level=5  # trailing\nfe.adc_bits = 12\n"
        kv = parse_kv_text(text)
        assert kv == {"levels": "1, 2 3", "packets_per_level": "5", "fe.adc_bits": "12"}
        cfg = sweep_config_from_kv(kv, seed=9)
        assert cfg.levels == (1.0, 2.0, 3.0)
        assert cfg.packets_per_level == 5 and cfg.fe.adc_bits == 12 and cfg.seed == 9

    def test_channel_keys(self):
        cfg = sweep_config_from_kv({"levels": "-90", "level_kind": "power_dbm", "channel.cfo_hz": "5e4",
                                    "channel.clock_ppm": "-100", "channel_enabled": "false"})
        assert cfg.channel.cfo_hz == 5e4 and cfg.channel.clock_ppm == -100 and not cfg.channel_enabled

    @pytest.mark.parametrize("text", ["levels 1 2", "= 3", "levels=a,b"])
    def test_syntax_errors(self, text):
        with pytest.raises(ConfigError):
            sweep_config_from_kv(parse_kv_text(text))

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="fe.bogus"):
            sweep_config_from_kv({"levels": "1", "fe.bogus": "2"})

    def test_missing_levels(self):
        with pytest.raises(ConfigError):
            sweep_config_from_kv({})

    def test_optional_fields(self):
        fe = apply_overrides(FrontEndConfig(), {"full_scale": "0.5"})
        assert fe.full_scale == 0.5
        assert apply_overrides(fe, {"full_scale": "none"}).full_scale is None

    def test_bad_number(self):
        with pytest.raises(ConfigError):
            apply_overrides(FrontEndConfig(), {"adc_bits": "four"})
