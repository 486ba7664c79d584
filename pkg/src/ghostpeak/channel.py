"""Tapped-delay-line propagation, additive noise and superposition on a shared medium."""

from __future__ import annotations

import cmath
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constants import SPEED_OF_LIGHT, sample_period_ps
from .phy import BasebandSignal, ConfigurationError


@dataclass(frozen=True)
class ChannelModel:
    """Multipath taps ``(delay_ps, complex gain)`` plus white complex Gaussian noise.

    ``noise_sigma`` is the per-sample standard deviation of the complex noise
    (``E|n|^2 = noise_sigma**2``).
    """

    taps: tuple[tuple[float, complex], ...] = ((0.0, 1.0 + 0j),)
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        taps = tuple((float(d), complex(g)) for d, g in self.taps)
        object.__setattr__(self, "taps", taps)
        if not taps:
            raise ConfigurationError("channel needs at least one tap")
        delays = [d for d, _ in taps]
        if min(delays) < 0:
            raise ConfigurationError("tap delays must be >= 0")
        if delays != sorted(delays):
            raise ConfigurationError("taps must be sorted by delay")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be >= 0")

    @property
    def los_delay_ps(self) -> float:
        return self.taps[0][0]

    @property
    def los_gain(self) -> complex:
        return self.taps[0][1]

    def with_seed(self, seed: int) -> "ChannelModel":
        return ChannelModel(self.taps, self.noise_sigma, seed)

    def tap_offsets(self, sample_rate: float) -> list[tuple[int, complex]]:
        ts = sample_period_ps(sample_rate)
        return [(int(round(d / ts)), g) for d, g in self.taps]


def free_space_channel(
    distance_m: float,
    phase: float = 0.0,
    noise_sigma: float = 0.0,
    seed: int = 0,
    reference_m: float = 1.0,
    extra_taps: Sequence[tuple[float, complex]] = (),
) -> ChannelModel:
    """LoS tap with 1/d amplitude; ``extra_taps`` are (excess delay ps, gain relative to LoS)."""
    if distance_m <= 0:
        raise ConfigurationError("distance must be positive")
    delay = distance_m / SPEED_OF_LIGHT * 1e12
    los = (reference_m / distance_m) * cmath.exp(1j * phase)
    taps = [(delay, los)] + [(delay + d, los * g) for d, g in extra_taps]
    taps.sort(key=lambda t: t[0])
    return ChannelModel(tuple(taps), noise_sigma, seed)


def noise(n: int, sigma: float, rng: np.random.Generator) -> np.ndarray:
    scale = sigma / np.sqrt(2.0)
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def apply_channel(sig: BasebandSignal, ch: ChannelModel) -> BasebandSignal:
    """Sum of delayed, scaled copies plus seeded noise.

    The output keeps ``sig.t0`` and is long enough to hold the latest copy.
    """
    offsets = ch.tap_offsets(sig.sample_rate)
    longest = max(k for k, _ in offsets)
    out = np.zeros(len(sig) + longest, dtype=np.complex128)
    for k, g in offsets:
        out[k : k + len(sig)] += g * sig.samples
    if ch.noise_sigma > 0:
        out += noise(len(out), ch.noise_sigma, np.random.default_rng(ch.seed))
    return BasebandSignal(out, sig.sample_rate, sig.t0)


@dataclass(frozen=True)
class MediumEvent:
    signal: BasebandSignal
    channel: ChannelModel
    emit_time: float  # ps
    source_id: int = 0

    def __post_init__(self) -> None:
        if self.emit_time < 0:
            raise ConfigurationError("emit_time must be >= 0")


def mix(
    events: Sequence[MediumEvent], window: tuple[float, float], sample_rate: float
) -> BasebandSignal:
    """Superpose channel-applied events on the global sample grid over ``window`` (ps)."""
    ts = sample_period_ps(sample_rate)
    first = int(round(window[0] / ts))
    n = max(int(round(window[1] / ts)) - first, 0)
    out = np.zeros(n, dtype=np.complex128)
    for ev in events:
        if ev.signal.sample_rate != sample_rate:
            raise ConfigurationError("all events must share the window sample rate")
        # Each path's total arrival time is rounded once, so alignment error stays within half a sample.
        base = ev.emit_time + ev.signal.t0
        offsets = [(int(round((base + d) / ts)) - first, g) for d, g in ev.channel.taps]
        start = min(k for k, _ in offsets)
        y = np.zeros(len(ev.signal) + max(k for k, _ in offsets) - start, dtype=np.complex128)
        for k, g in offsets:
            y[k - start : k - start + len(ev.signal)] += g * ev.signal.samples
        if ev.channel.noise_sigma > 0:
            y += noise(len(y), ev.channel.noise_sigma, np.random.default_rng(ev.channel.seed))
        lo, hi = max(start, 0), min(start + len(y), n)
        if lo < hi:
            out[lo:hi] += y[lo - start : hi - start]
    return BasebandSignal(out, sample_rate, first * ts)
