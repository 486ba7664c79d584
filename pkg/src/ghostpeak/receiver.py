"""Correlation receiver: CIR estimation, noise floor, back-search leading-edge detection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import signal as sp_signal

from .constants import slot_samples
from .phy import BasebandSignal, ConfigurationError


@dataclass(frozen=True)
class Cir:
    values: np.ndarray
    lag0_time: float  # ps, time of lag 0
    sample_rate: float
    lag0_index: int = 0  # global sample index of lag 0, when known

    def __post_init__(self) -> None:
        if len(self.values) < 1:
            raise ConfigurationError("CIR must have at least one lag")

    def __len__(self) -> int:
        return len(self.values)

    def lag_time(self, lag: int) -> float:
        return self.lag0_time + lag * 1e12 / self.sample_rate


@dataclass(frozen=True)
class ReceiverConfig:
    """Detection thresholds.

    The first six knobs are the leading-edge detector proper. The remaining
    ones configure packet acquisition and the checks around it.
    """

    backsearch_window: int = 16
    detect_threshold_db: float = 20.0
    leading_edge_threshold_db: float = 12.0
    leading_edge_rel_max_db: float = 20.0
    noise_estimator: Literal["median-abs", "trimmed-mean"] = "median-abs"
    sts_max_bit_errors: int | None = None  # None disables the bit-wise STS check
    sts_search_halfwidth: int = 96
    sts_peak_tolerance: int | None = 0  # STS peak vs preamble timing, samples; None disables
    acquisition_symbols: int = 16
    acquisition_threshold_db: float = 20.0
    max_sfd_errors: int = 0
    max_data_bit_errors: int = 0

    def __post_init__(self) -> None:
        if self.backsearch_window < 0:
            raise ConfigurationError("backsearch_window must be >= 0")
        for name in (
            "detect_threshold_db",
            "leading_edge_threshold_db",
            "leading_edge_rel_max_db",
            "acquisition_threshold_db",
        ):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite")
        if self.noise_estimator not in ("median-abs", "trimmed-mean"):
            raise ConfigurationError(f"unknown noise estimator {self.noise_estimator!r}")
        if self.sts_max_bit_errors is not None and self.sts_max_bit_errors < 0:
            raise ConfigurationError("sts_max_bit_errors must be >= 0")
        if self.sts_search_halfwidth < 1 or self.acquisition_symbols < 1:
            raise ConfigurationError("search window and acquisition length must be >= 1")
        if self.sts_peak_tolerance is not None and self.sts_peak_tolerance < 0:
            raise ConfigurationError("sts_peak_tolerance must be >= 0")
        if self.max_sfd_errors < 0 or self.max_data_bit_errors < 0:
            raise ConfigurationError("error budgets must be >= 0")


@dataclass(frozen=True)
class ToaEstimate:
    toa: float  # ps
    peak_index: int
    peak_magnitude: float
    noise_floor: float
    leading_edge_used: bool
    sts_quality: float = 0.0
    accepted_index: int = 0
    peak_toa: float = 0.0  # ps, time of the strongest peak

    @property
    def advance_samples(self) -> int:
        return self.peak_index - self.accepted_index


def compute_cir(received: BasebandSignal, template: BasebandSignal) -> Cir:
    """CIR[t] = sum_m conj(template[m]) * received[m + t] over all full-overlap lags."""
    if len(template) > len(received):
        raise ConfigurationError("template longer than received signal")
    if template.sample_rate != received.sample_rate:
        raise ConfigurationError("template and signal sample rates differ")
    values = sp_signal.correlate(received.samples, template.samples, mode="valid")
    return Cir(np.asarray(values, dtype=np.complex128), received.t0, received.sample_rate)


def estimate_noise_floor(cir: Cir, cfg: ReceiverConfig = ReceiverConfig()) -> float:
    """Robust magnitude scale over lags outside +-2W of the strongest peak."""
    mags = np.abs(cir.values)
    if len(mags) < 64:
        raise ConfigurationError("CIR too short for noise estimation (need >= 64 lags)")
    p = int(np.argmax(mags))
    guard = 2 * cfg.backsearch_window
    keep = np.ones(len(mags), dtype=bool)
    keep[max(p - guard, 0) : p + guard + 1] = False
    rest = mags[keep] if keep.any() else mags
    if cfg.noise_estimator == "median-abs":
        k = len(rest) // 2
        part = np.partition(rest, [k - 1, k] if len(rest) > 1 else [k])
        return float(part[k] if len(rest) % 2 else 0.5 * (part[k - 1] + part[k]))
    rest = np.sort(rest)
    cut = len(rest) // 10
    trimmed = rest[cut : len(rest) - cut] if len(rest) > 2 * cut else rest
    return float(np.mean(trimmed))


def _db(x: float) -> float:
    return 10 ** (x / 20)


def detect_toa(
    cir: Cir, cfg: ReceiverConfig = ReceiverConfig(), noise_floor: float | None = None
) -> ToaEstimate | None:
    """Strongest peak, then the earliest qualifying lag in the back-search window."""
    mags = np.abs(cir.values)
    if noise_floor is None:
        noise_floor = estimate_noise_floor(cir, cfg)
    p = int(np.argmax(mags))
    peak = float(mags[p])
    if peak <= 0 or peak < noise_floor * _db(cfg.detect_threshold_db):
        return None
    floor_cut = noise_floor * _db(cfg.leading_edge_threshold_db)
    rel_cut = peak * _db(-cfg.leading_edge_rel_max_db)
    q = p
    for lag in range(max(p - cfg.backsearch_window, 0), p):
        if mags[lag] > floor_cut and mags[lag] > rel_cut:
            q = lag
            break
    return ToaEstimate(
        toa=cir.lag_time(q),
        peak_index=cir.lag0_index + p,
        peak_magnitude=peak,
        noise_floor=noise_floor,
        leading_edge_used=q != p,
        accepted_index=cir.lag0_index + q,
        peak_toa=cir.lag_time(p),
    )


def sts_quality(
    received: BasebandSignal,
    template: BasebandSignal,
    toa: ToaEstimate,
    cfg: ReceiverConfig = ReceiverConfig(),
) -> float:
    """Normalized correlation at the accepted lag, optionally gated by a bit-wise check.

    ``toa.accepted_index`` is taken relative to ``received`` (lag 0 at its first sample).
    """
    q = toa.accepted_index
    n = len(template)
    seg = received.samples[q : q + n]
    if q < 0 or len(seg) < n:
        return 0.0
    g = template.samples
    corr = np.vdot(g, seg)
    energy = math.sqrt(float(np.vdot(g, g).real) * float(np.vdot(seg, seg).real))
    if energy == 0:
        return 0.0
    quality = min(abs(corr) / energy, 1.0)
    if cfg.sts_max_bit_errors is not None:
        per = slot_samples(received.sample_rate)
        slots = n // per
        per_slot = np.einsum(
            "ij,ij->i", np.conj(g[: slots * per].reshape(slots, per)), seg[: slots * per].reshape(slots, per)
        )
        ref = corr / abs(corr) if abs(corr) > 0 else 1.0
        active = np.abs(g[: slots * per].reshape(slots, per)).sum(axis=1) > 0
        errors = int(np.sum((per_slot * np.conj(ref)).real[active] <= 0))
        if errors > cfg.sts_max_bit_errors:
            return 0.0
    return quality
