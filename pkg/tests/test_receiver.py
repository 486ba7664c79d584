import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from ghostpeak.phy import BasebandSignal, ConfigurationError, HrpPacketSpec, PulseShape, StsConfig, local_template
from ghostpeak.ranging import PhyConfig, toa_bias_samples
from ghostpeak.receiver import (
    Cir,
    ReceiverConfig,
    ToaEstimate,
    compute_cir,
    detect_toa,
    estimate_noise_floor,
    sts_quality,
)

FS = 2.048e9
TS = 1e12 / FS


def sig(x, t0=0.0):
    return BasebandSignal(np.asarray(x, dtype=complex), FS, t0)


def cir_of(mags, t0=0.0) -> Cir:
    return Cir(np.asarray(mags, dtype=complex), t0, FS)


# -- compute_cir ----------------------------------------------------------------


def test_cir_hand_example():
    c = compute_cir(sig([0, 0, 1, -1, 0]), sig([1, -1]))
    np.testing.assert_allclose(c.values, [0, -1, 2, -1])
    assert int(np.argmax(np.abs(c.values))) == 2


def test_cir_self_correlation_is_energy():
    rng = np.random.default_rng(0)
    t = rng.normal(size=40) + 1j * rng.normal(size=40)
    c = compute_cir(sig(t, t0=123.0), sig(t))
    assert c.values[0] == pytest.approx(np.vdot(t, t).real)
    assert c.lag0_time == 123.0


def test_cir_uses_conjugate_template():
    c = compute_cir(sig([1j, 0]), sig([1j]))
    assert c.values[0] == pytest.approx(1.0)


def test_cir_template_too_long():
    with pytest.raises(ConfigurationError):
        compute_cir(sig([1, 2]), sig([1, 2, 3]))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(8, 60), k=st.integers(1, 8))
def test_cir_linearity(seed, n, k):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(2, n)) + 1j * rng.normal(size=(2, n))
    g = rng.normal(size=k) + 1j * rng.normal(size=k)
    lhs = compute_cir(sig(a + b), sig(g)).values
    rhs = compute_cir(sig(a), sig(g)).values + compute_cir(sig(b), sig(g)).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


# -- noise floor ----------------------------------------------------------------


def test_noise_floor_zero_with_single_peak():
    x = np.zeros(200)
    x[77] = 5.0
    assert estimate_noise_floor(cir_of(x)) == 0.0
    assert estimate_noise_floor(cir_of(x), ReceiverConfig(noise_estimator="trimmed-mean")) == 0.0


def test_noise_floor_of_gaussian_matches_rayleigh_median():
    rng = np.random.default_rng(1)
    z = (rng.normal(size=100_000) + 1j * rng.normal(size=100_000)) / math.sqrt(2)
    median = math.sqrt(math.log(2))  # median of |z| for unit-variance complex Gaussian
    assert estimate_noise_floor(Cir(z, 0.0, FS)) == pytest.approx(median, rel=0.10)


@pytest.mark.parametrize("estimator", ["median-abs", "trimmed-mean"])
def test_noise_floor_scale_equivariant(estimator):
    rng = np.random.default_rng(2)
    z = rng.normal(size=500) + 1j * rng.normal(size=500)
    cfg = ReceiverConfig(noise_estimator=estimator)
    assert estimate_noise_floor(Cir(7.5 * z, 0.0, FS), cfg) == pytest.approx(
        7.5 * estimate_noise_floor(Cir(z, 0.0, FS), cfg)
    )


def test_noise_floor_needs_64_lags():
    with pytest.raises(ConfigurationError):
        estimate_noise_floor(cir_of(np.ones(63)))


# -- detect_toa -----------------------------------------------------------------


def test_clean_peak():
    x = np.zeros(300)
    x[100] = 1.0
    toa = detect_toa(cir_of(x, t0=1000.0), ReceiverConfig(), noise_floor=1e-3)
    assert toa.peak_index == 100 and toa.accepted_index == 100
    assert not toa.leading_edge_used
    assert toa.toa == pytest.approx(1000.0 + 100 * TS)


def _two_peaks():
    x = np.zeros(300)
    x[100], x[92] = 1.0, 0.4
    return cir_of(x)


def test_early_peak_accepted():
    toa = detect_toa(_two_peaks(), ReceiverConfig(), noise_floor=1e-3)
    assert toa.accepted_index == 92 and toa.leading_edge_used
    assert toa.advance_samples == 8


def test_early_peak_rejected_by_relative_threshold():
    cfg = ReceiverConfig(leading_edge_rel_max_db=6.0)  # cutoff 0.5 > 0.4
    toa = detect_toa(_two_peaks(), cfg, noise_floor=1e-3)
    assert toa.accepted_index == 100 and not toa.leading_edge_used


def test_early_peak_outside_window_ignored():
    toa = detect_toa(_two_peaks(), ReceiverConfig(backsearch_window=7), noise_floor=1e-3)
    assert toa.accepted_index == 100


def test_no_detection_below_threshold():
    rng = np.random.default_rng(3)
    z = rng.normal(size=400) + 1j * rng.normal(size=400)
    assert detect_toa(Cir(z, 0.0, FS)) is None


def test_detection_invariant_peak_above_floor():
    toa = detect_toa(_two_peaks(), ReceiverConfig(), noise_floor=0.01)
    assert toa.peak_magnitude >= toa.noise_floor


cir_st = st.lists(st.floats(0, 10), min_size=64, max_size=200)


@settings(max_examples=200, deadline=None)
@given(m=cir_st, w=st.integers(0, 40), le=st.floats(-10, 30), rel=st.floats(0, 40))
def test_backsearch_bound(m, w, le, rel):
    cfg = ReceiverConfig(backsearch_window=w, detect_threshold_db=0.0, leading_edge_threshold_db=le,
                         leading_edge_rel_max_db=rel)
    toa = detect_toa(cir_of(m), cfg, noise_floor=0.1)
    if toa is not None:
        assert toa.peak_index - w <= toa.accepted_index <= toa.peak_index
        assert toa.toa >= toa.peak_toa - w * TS - 1e-6


@settings(max_examples=200, deadline=None)
@given(m=cir_st, lo=st.floats(-10, 30), step=st.floats(0, 20))
def test_raising_leading_edge_threshold_never_earlier(m, lo, step):
    c = cir_of(m)
    a = detect_toa(c, ReceiverConfig(detect_threshold_db=0.0, leading_edge_threshold_db=lo), noise_floor=0.1)
    b = detect_toa(c, ReceiverConfig(detect_threshold_db=0.0, leading_edge_threshold_db=lo + step), noise_floor=0.1)
    assert (a is None) == (b is None)
    if a is not None:
        assert b.toa >= a.toa


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.floats(1e-3, 1e3))
def test_scale_invariance(seed, k):
    rng = np.random.default_rng(seed)
    z = 0.1 * (rng.normal(size=256) + 1j * rng.normal(size=256))
    z[120] += 10
    z[112] += rng.uniform(0, 3)
    a = detect_toa(Cir(z, 0.0, FS))
    b = detect_toa(Cir(k * z, 0.0, FS))
    assume(a is not None)
    assert b is not None
    assert (a.accepted_index, a.peak_index, a.leading_edge_used) == (b.accepted_index, b.peak_index, b.leading_edge_used)


def test_noiseless_identity_channel_zero_error():
    spec = HrpPacketSpec(sts=StsConfig(9, length_bits=512))
    tmpl = local_template(spec, "sts", PulseShape(), FS)
    pad = np.zeros(300, complex)
    rx = sig(np.concatenate([pad, tmpl.samples, pad]))
    c = compute_cir(rx, tmpl)
    toa = detect_toa(c, ReceiverConfig(backsearch_window=0))
    assert toa.accepted_index == toa.peak_index == 300
    # With the default window the pulse main lobe itself passes the back-search, a
    # constant lead that devices calibrate out (see toa_bias_samples).
    lead = 300 - detect_toa(c).accepted_index
    assert lead == toa_bias_samples(PhyConfig(), ReceiverConfig())
    # LoS plus a weaker NLoS tap 4 ns later: the peak is the LoS tap, and so is the ToA.
    k = int(round(4000 / TS))
    rx2 = sig(np.concatenate([pad, tmpl.samples, np.zeros(k + 300)]) +
              np.concatenate([pad, np.zeros(k), 0.6 * tmpl.samples, pad]))
    toa2 = detect_toa(compute_cir(rx2, tmpl), ReceiverConfig(backsearch_window=0))
    assert toa2.accepted_index == 300


def test_late_strong_nlos_recovered_by_backsearch():
    spec = HrpPacketSpec(sts=StsConfig(11, length_bits=512))
    tmpl = local_template(spec, "sts", PulseShape(), FS).samples
    k = 10  # NLoS path 10 samples late and twice as strong
    pad = np.zeros(300, complex)
    rx = np.concatenate([pad, tmpl, np.zeros(k), pad])
    rx[300 + k : 300 + k + len(tmpl)] += 2 * tmpl
    c = compute_cir(sig(rx), sig(tmpl))
    cfg = ReceiverConfig(leading_edge_rel_max_db=10.0)
    toa = detect_toa(c, cfg, noise_floor=1e-3 * np.abs(c.values).max())
    assert toa.peak_index == 300 + k
    assert toa.leading_edge_used and toa.accepted_index <= 300


# -- STS quality ----------------------------------------------------------------


def _sts_setup(n_bits=256, seed=5):
    spec = HrpPacketSpec(sts=StsConfig(seed, length_bits=n_bits))
    return local_template(spec, "sts", PulseShape(), FS)


def _toa_at(q):
    return ToaEstimate(toa=0.0, peak_index=q, peak_magnitude=1.0, noise_floor=0.0, leading_edge_used=False,
                       accepted_index=q)


def test_quality_aligned_legitimate():
    tmpl = _sts_setup()
    rx = sig(np.concatenate([np.zeros(50), 0.3j * tmpl.samples, np.zeros(50)]))
    assert sts_quality(rx, tmpl, _toa_at(50)) >= 0.99
    assert sts_quality(rx, tmpl, _toa_at(50), ReceiverConfig(sts_max_bit_errors=0)) >= 0.99


def test_quality_pure_noise_near_zero():
    tmpl = _sts_setup()
    rng = np.random.default_rng(6)
    q = []
    for _ in range(1000):
        z = rng.normal(size=len(tmpl) + 10) + 1j * rng.normal(size=len(tmpl) + 10)
        q.append(sts_quality(sig(z), tmpl, _toa_at(5)))
    assert np.mean(q) < 0.05
    assert all(0 <= v <= 1 for v in q)


def test_bit_check_rejects_random_sts():
    n_bits = 128
    tmpl = _sts_setup(n_bits)
    pulse = PulseShape().samples(FS)
    rng = np.random.default_rng(7)
    cfg = ReceiverConfig(sts_max_bit_errors=0)
    passed = 0
    for _ in range(10_000):
        bits = rng.integers(0, 2, n_bits)
        grid = np.zeros((n_bits, 32))
        grid[:, :16] = np.outer(1 - 2 * bits, pulse)
        passed += sts_quality(sig(grid.ravel()), tmpl, _toa_at(0), cfg) > 0
    assert passed == 0


def test_quality_out_of_range_lag():
    tmpl = _sts_setup()
    rx = sig(np.zeros(len(tmpl) + 5))
    assert sts_quality(rx, tmpl, _toa_at(10)) == 0.0


def test_receiver_config_validation():
    with pytest.raises(ConfigurationError):
        ReceiverConfig(backsearch_window=-1)
    with pytest.raises(ConfigurationError):
        ReceiverConfig(detect_threshold_db=float("inf"))
    with pytest.raises(ConfigurationError):
        ReceiverConfig(noise_estimator="mean")
    assert ReceiverConfig().sts_max_bit_errors is None
