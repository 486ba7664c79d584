import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ghostpeak.attack import AttackConfig
from ghostpeak.channel import free_space_channel
from ghostpeak.phy import ConfigurationError
from ghostpeak.ranging import (
    C_M_PER_PS,
    DeviceClock,
    DeviceConfig,
    MeasurementError,
    PhyConfig,
    ds_twr_distance_full,
    ds_twr_distance_simple,
    predicted_reduction,
    run_exchange,
    ss_twr_distance,
)

C = 299_792_458.0
NS = 1000.0  # ps
TS = 1e12 / 2.048e9
TICK = 15.65
INI, RESP = DeviceConfig(1), DeviceConfig(2)


# -- formulas -------------------------------------------------------------------


def test_ss_twr_examples():
    assert ss_twr_distance(1020 * NS, 1000 * NS) == pytest.approx(2.998, abs=5e-4)
    assert ss_twr_distance(1000 * NS, 1000 * NS) == 0.0
    with pytest.raises(MeasurementError):
        ss_twr_distance(999 * NS, 1000 * NS)


def test_ds_twr_examples():
    sym = (1020 * NS, 1000 * NS, 1020 * NS, 1000 * NS)
    assert ds_twr_distance_full(*sym) == pytest.approx(C * 10e-9, abs=1e-12)
    assert ds_twr_distance_simple(*sym) == pytest.approx(C * 10e-9, abs=1e-12)
    assert ds_twr_distance_full(1000 * NS, 1000 * NS, 1000 * NS, 1000 * NS) == 0.0
    assert ds_twr_distance_simple(990 * NS, 1000 * NS, 990 * NS, 1000 * NS) < 0
    with pytest.raises(MeasurementError):
        ds_twr_distance_full(0.0, 0.0, 0.0, 0.0)


def _measured(tof, reply_b, reply_a, ppm_a=0.0, ppm_b=0.0):
    """Intervals measured by initiator A and responder B with fractional clock errors."""
    ka, kb = 1 + ppm_a * 1e-6, 1 + ppm_b * 1e-6
    return (ka * (2 * tof + reply_b), kb * reply_b, kb * (2 * tof + reply_a), ka * reply_a)


def test_responder_clock_offset_example():
    tof = 10 * NS
    iv = _measured(tof, 1000 * NS, 1000 * NS, ppm_b=100)
    truth = C_M_PER_PS * tof
    assert abs(ds_twr_distance_full(*iv) - truth) < 1e-3
    # The simple form picks up c/4 * e * (round2 - reply1) from the responder's skew.
    expect = C_M_PER_PS / 4 * 100e-6 * (2 * tof + 1000 * NS - 1000 * NS)
    assert ds_twr_distance_simple(*iv) - truth == pytest.approx(expect, rel=1e-6)
    # With asymmetric replies the same skew costs the simple form millimetres.
    iv = _measured(tof, 1000 * NS, 100 * NS, ppm_b=100)
    err = ds_twr_distance_simple(*iv) - truth
    assert err == pytest.approx(C_M_PER_PS / 4 * 100e-6 * (2 * tof - 900 * NS), rel=1e-6)
    assert abs(err) > 6e-3 and abs(ds_twr_distance_full(*iv) - truth) < 1e-3


def test_predicted_reduction_examples():
    delta = 66.713 * NS
    assert predicted_reduction("packet2", delta) == pytest.approx(10.0, abs=1e-4)
    assert predicted_reduction("packet3", delta) == pytest.approx(5.0, abs=1e-4)
    assert predicted_reduction("both", delta) == pytest.approx(15.0, abs=1e-4)
    assert predicted_reduction("packet2", delta) == 2 * predicted_reduction("packet3", delta)
    assert predicted_reduction("both", 2 * NS, 4 * NS) == pytest.approx(C_M_PER_PS * (NS + NS))
    with pytest.raises(ValueError):
        predicted_reduction("packet2", -1.0)


@settings(max_examples=300, deadline=None)
@given(
    tof=st.integers(0, 10**5),
    r1=st.integers(10**5, 5 * 10**9),
    r2=st.integers(10**5, 5 * 10**9),
)
def test_full_equals_simple_with_ideal_clocks(tof, r1, r2):
    iv = tuple(map(float, _measured(tof, r1, r2)))
    assert abs(ds_twr_distance_full(*iv) - ds_twr_distance_simple(*iv)) <= 1e-12
    assert ds_twr_distance_full(*iv) == pytest.approx(C_M_PER_PS * tof, abs=1e-12)


def test_clock_robustness_asymmetric_replies():
    rng = np.random.default_rng(4)
    better = 0
    n = 10_000
    for _ in range(n):
        tof = rng.uniform(1, 100) * NS
        rb, ra = rng.uniform(0.1, 5.0, 2) * 1e9  # replies 0.1 .. 5 ms
        while abs(ra - rb) < 1e6:  # asymmetric by at least 1 us
            ra = rng.uniform(0.1, 5.0) * 1e9
        ppm = rng.uniform(-100, 100)
        on_b = rng.random() < 0.5
        iv = _measured(tof, rb, ra, *((0.0, ppm) if on_b else (ppm, 0.0)))
        truth = C_M_PER_PS * tof
        better += abs(ds_twr_distance_full(*iv) - truth) < abs(ds_twr_distance_simple(*iv) - truth)
    assert better / n >= 0.99


# -- clocks ---------------------------------------------------------------------


def test_device_clock():
    clk = DeviceClock(offset=500.0, ppm=20.0, tick=TICK)
    assert clk.to_global(clk.local(12345.0)) == pytest.approx(12345.0)
    q = clk.quantize(1000.0)
    assert q / TICK == pytest.approx(round(q / TICK)) and abs(q - 1000.0) <= TICK / 2
    with pytest.raises(ConfigurationError):
        DeviceClock(tick=0)
    with pytest.raises(ConfigurationError):
        DeviceClock(ppm=1000)


# -- full exchanges -------------------------------------------------------------


def test_noiseless_exchange_within_one_sample():
    for seed in range(20):
        ex = run_exchange(INI, RESP, free_space_channel(10.0), seed=seed)
        assert ex.ok and len(ex.packets) == 3
        assert abs(ex.distance_full - 10.0) <= C_M_PER_PS * TS / 2
        assert min(ex.t_round1, ex.t_reply1, ex.t_round2, ex.t_reply2) >= 0
        assert ex.advances == (0, 0, 0)


def test_noiseless_with_nlos_tap_times_los():
    ch = free_space_channel(8.0, extra_taps=((3000.0, 0.7),))
    for seed in range(10):
        ex = run_exchange(INI, RESP, ch, seed=seed)
        assert ex.ok and abs(ex.distance_full - 8.0) <= C_M_PER_PS * TS / 2


def test_clock_offsets_cancelled_by_ds_twr():
    ini = DeviceConfig(1, DeviceClock(offset=1e9, ppm=40.0), reply_time=3e8)
    resp = DeviceConfig(2, DeviceClock(offset=-7e8, ppm=-35.0), reply_time=9e8)
    ex = run_exchange(ini, resp, free_space_channel(12.0), seed=3)
    assert ex.ok
    assert abs(ex.distance_full - 12.0) <= C_M_PER_PS * TS / 2 + 1e-3
    assert abs(ex.distance_simple - 12.0) > abs(ex.distance_full - 12.0)


def test_ss_twr_mode():
    ex = run_exchange(INI, RESP, free_space_channel(6.0), seed=1, mode="ss-twr")
    assert ex.ok and len(ex.packets) == 2
    assert abs(ex.distance_full - 6.0) <= C_M_PER_PS * TS / 2


def test_report_message_is_received():
    ex = run_exchange(INI, RESP, free_space_channel(6.0), seed=2, phy=PhyConfig(report_message=True))
    assert ex.ok and [p.index for p in ex.packets] == [1, 2, 3, 4]
    assert ex.packets[3].rx_status == "ok"


def test_exchange_deterministic_and_fresh_sts_per_packet():
    a = run_exchange(INI, RESP, free_space_channel(9.0, noise_sigma=238.0), seed=77)
    b = run_exchange(INI, RESP, free_space_channel(9.0, noise_sigma=238.0), seed=77)
    assert a.distance_full == b.distance_full and a.t_round1 == b.t_round1
    counters = [p.spec.sts.counter for p in a.packets]
    assert counters == [counters[0], counters[0] + 1, counters[0] + 2]


def test_weak_signal_is_not_detected():
    ex = run_exchange(INI, RESP, free_space_channel(15.0, noise_sigma=1e6), seed=0)
    assert ex.status in ("packet-lost", "no-detection") and not ex.ok
    assert math.isnan(ex.distance_full) and ex.failed_packet == 1


def _attacked_pair(target: str):
    """First seed whose noiseless attacked exchange realizes an advance on ``target``."""
    k = {"packet2": 1, "packet3": 2}[target]
    atk = AttackConfig(targets=(target,), sts_gain=16.0, timing_jitter_sigma=0.0)
    ch = free_space_channel(15.0)
    for seed in range(200):
        ex = run_exchange(INI, RESP, ch, attack=atk, seed=seed)
        if ex.ok and ex.advances[k] > 0:
            return run_exchange(INI, RESP, ch, seed=seed), ex, ex.advances[k]
    raise AssertionError("no advance realized")


def test_packet2_attack_shortens_both_rounds():
    clean, hit, k = _attacked_pair("packet2")
    delta = k * TS
    assert clean.t_round1 - hit.t_round1 == pytest.approx(delta, abs=TICK)
    assert clean.t_round2 - hit.t_round2 == pytest.approx(delta, abs=TICK)
    assert hit.t_reply1 == pytest.approx(clean.t_reply1, abs=1e-3)
    assert hit.t_reply2 == pytest.approx(clean.t_reply2, abs=1e-3)
    red = clean.distance_simple - hit.distance_simple
    assert red == pytest.approx(predicted_reduction("packet2", delta), abs=C_M_PER_PS * TICK)
    assert hit.attack_reduction == pytest.approx(predicted_reduction("packet2", delta), abs=C_M_PER_PS * TICK)


def test_packet3_attack_shortens_only_round2():
    clean, hit, k = _attacked_pair("packet3")
    delta = k * TS
    assert hit.t_round1 == pytest.approx(clean.t_round1, abs=1e-3)
    assert clean.t_round2 - hit.t_round2 == pytest.approx(delta, abs=TICK)
    assert hit.t_reply1 == pytest.approx(clean.t_reply1, abs=1e-3)
    assert hit.t_reply2 == pytest.approx(clean.t_reply2, abs=1e-3)
    red = clean.distance_simple - hit.distance_simple
    assert red == pytest.approx(predicted_reduction("packet3", delta), abs=C_M_PER_PS * TICK)


def test_device_config_validation():
    with pytest.raises(ConfigurationError):
        DeviceConfig(device_id=2**16)
    with pytest.raises(ConfigurationError):
        DeviceConfig(reply_time=0)
    with pytest.raises(ConfigurationError):
        PhyConfig(sample_rate=1.9968e9 + 1)
