import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ghostpeak.channel import ChannelModel, MediumEvent, apply_channel, free_space_channel, mix
from ghostpeak.phy import (
    BasebandSignal,
    ConfigurationError,
    HrpPacketSpec,
    PulseShape,
    StsConfig,
    local_template,
    modulate_packet,
    preamble_code,
)
from ghostpeak.receiver import compute_cir

FS = 2.048e9
TS = 1e12 / FS


def pulse_signal(n=64, at=0, amp=1.0) -> BasebandSignal:
    x = np.zeros(n, complex)
    x[at] = amp
    return BasebandSignal(x, FS)


def test_identity_channel():
    rng = np.random.default_rng(0)
    sig = BasebandSignal(rng.normal(size=100) + 1j * rng.normal(size=100), FS, t0=TS * 3)
    out = apply_channel(sig, ChannelModel())
    np.testing.assert_array_equal(out.samples, sig.samples)
    assert out.t0 == sig.t0


def test_two_taps_on_unit_pulse():
    ch = ChannelModel(((0.0, 1.0), (16000.0, 0.5)))
    out = apply_channel(pulse_signal(), ch).samples
    k = int(round(16000 / TS))
    assert np.flatnonzero(out).tolist() == [0, k]
    assert out[k] == pytest.approx(0.5)
    assert k * TS == pytest.approx(16000, abs=TS / 2)


def test_noise_is_seeded():
    ch = ChannelModel(noise_sigma=0.3, seed=42)
    a = apply_channel(pulse_signal(), ch)
    b = apply_channel(pulse_signal(), ch)
    c = apply_channel(pulse_signal(), ch.with_seed(43))
    np.testing.assert_array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_noise_power():
    ch = ChannelModel(noise_sigma=2.0, seed=1)
    out = apply_channel(BasebandSignal(np.zeros(200_000), FS), ch).samples
    assert np.mean(np.abs(out) ** 2) == pytest.approx(4.0, rel=0.02)


def test_channel_validation():
    with pytest.raises(ConfigurationError):
        ChannelModel(())
    with pytest.raises(ConfigurationError):
        ChannelModel(((-1.0, 1.0),))
    with pytest.raises(ConfigurationError):
        ChannelModel(((10.0, 1.0), (5.0, 1.0)))
    with pytest.raises(ConfigurationError):
        MediumEvent(pulse_signal(), ChannelModel(), emit_time=-1.0)


def test_free_space_channel():
    ch = free_space_channel(15.0, extra_taps=((2000.0, 0.5j),))
    assert ch.los_delay_ps == pytest.approx(15.0 / 299_792_458.0 * 1e12)
    assert ch.los_gain == pytest.approx(1 / 15)
    assert ch.taps[1][1] == pytest.approx(0.5j / 15)


def test_mix_single_event_is_shifted_channel_output():
    sig = BasebandSignal(np.arange(1, 9, dtype=complex), FS)
    ch = ChannelModel(((3 * TS, 1.0),))
    out = mix([MediumEvent(sig, ch, emit_time=10 * TS)], (0.0, 40 * TS), FS)
    expect = np.zeros(40, complex)
    expect[13:21] = sig.samples
    np.testing.assert_array_equal(out.samples, expect)


def test_mix_opposite_signals_cancel():
    sig = BasebandSignal(np.exp(1j * np.arange(50)), FS)
    neg = BasebandSignal(-sig.samples, FS)
    ev = [MediumEvent(sig, ChannelModel(), 5 * TS), MediumEvent(neg, ChannelModel(), 5 * TS)]
    assert not mix(ev, (0.0, 80 * TS), FS).samples.any()


def test_mix_rejects_mismatched_rates():
    other = BasebandSignal(np.ones(4), 4.096e9)
    with pytest.raises(ConfigurationError):
        mix([MediumEvent(other, ChannelModel(), 0.0)], (0.0, 10 * TS), FS)


@settings(max_examples=30, deadline=None)
@given(
    t_a=st.floats(0, 5000),
    t_b=st.floats(0, 5000),
    d_a=st.floats(0, 3000),
    d_b=st.floats(0, 3000),
)
def test_mix_linearity_and_causality(t_a, t_b, d_a, d_b):
    rng = np.random.default_rng(3)
    a = BasebandSignal(rng.normal(size=20) + 0j, FS)
    b = BasebandSignal(rng.normal(size=20) + 0j, FS)
    ea = MediumEvent(a, ChannelModel(((d_a, 1.0), (d_a + 1000, 0.3))), t_a)
    eb = MediumEvent(b, ChannelModel(((d_b, 0.7j),)), t_b)
    win = (0.0, 12000.0)
    both = mix([ea, eb], win, FS).samples
    np.testing.assert_allclose(both, mix([ea], win, FS).samples + mix([eb], win, FS).samples, atol=1e-12)
    first = min(round((t_a + d_a) / TS), round((t_b + d_b) / TS))
    assert not both[:first].any()
    # order of events does not matter
    np.testing.assert_array_equal(both, mix([eb, ea], win, FS).samples)


def test_mix_shows_legitimate_and_attack_correlation_groups():
    code = preamble_code(length=31)
    spec = HrpPacketSpec(preamble_code=code, preamble_repetitions=4, sts=StsConfig(1, length_bits=128))
    shape = PulseShape()
    legit = modulate_packet(spec, shape, FS)
    attacker = modulate_packet(spec, shape, FS)
    offset = 3e6  # 3 us
    ev = [
        MediumEvent(legit, free_space_channel(10.0), 1e6),
        MediumEvent(attacker, free_space_channel(0.3), 1e6 + offset),
    ]
    rx = mix(ev, (0.0, 1e6 + offset + legit.duration_ps + 1e5), FS)
    tmpl = local_template(HrpPacketSpec(preamble_code=code, preamble_repetitions=1), "preamble", shape, FS)
    cir = np.abs(compute_cir(rx, tmpl).values)
    legit_lag = round((1e6 + 10 / 299_792_458 * 1e12) / TS)
    atk_lag = round((1e6 + offset + 0.3 / 299_792_458 * 1e12) / TS)
    near = lambda lag: cir[lag - 3 : lag + 4].max()
    floor = np.median(cir)
    assert near(legit_lag) > 20 * floor
    assert near(atk_lag) > 20 * floor
    assert near(atk_lag) > near(legit_lag)  # the nearby attacker is louder
