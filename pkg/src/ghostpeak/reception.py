"""Packet reception on the slot-domain engine.

A receiver waiting for a packet runs, in order: preamble acquisition, SFD
check, STS timing (CIR + back-search), an STS/preamble consistency check, the
optional bit-wise STS check, and data decoding. Any failing stage ends the
reception with a status naming it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Literal, Sequence

import numpy as np

from .correlator import PulseTrain, SlotCorrelator
from .phy import HrpPacketSpec, PacketLayout, bpsk
from .receiver import Cir, ReceiverConfig, ToaEstimate, detect_toa

RxStatus = Literal[
    "ok", "no-preamble", "sfd-error", "no-detection", "sts-mismatch", "sts-rejected", "data-error"
]

# Failures that drop the frame. Only a CIR without a qualifying peak is reported
# as a missing detection instead.
LOST_STATUSES = frozenset({"no-preamble", "sfd-error", "sts-mismatch", "sts-rejected", "data-error"})

DEMOD_FILTER = "integrate"


@dataclass(frozen=True)
class ExpectedPacket:
    """What a receiver knows about the packet it is waiting for.

    ``data`` are the transmitted symbols; comparing against them stands in for
    the frame check sequence.
    """

    layout: PacketLayout
    acquisition: np.ndarray
    sfd: np.ndarray
    sts: np.ndarray | None
    data: np.ndarray | None

    @classmethod
    def from_spec(cls, spec: HrpPacketSpec, acquisition_symbols: int = 16) -> "ExpectedPacket":
        reps = min(acquisition_symbols, spec.preamble_repetitions)
        return cls(
            layout=spec.layout,
            acquisition=_acquisition_template(spec.preamble_code, reps),
            sfd=spec.symbols("sfd"),
            sts=None if spec.sts is None else spec.symbols("sts"),
            data=None if not spec.data_bits else spec.symbols("data"),
        )


@lru_cache(maxsize=16)
def _acquisition_template(code: tuple[int, ...], reps: int) -> np.ndarray:
    t = np.tile(np.asarray(code, dtype=np.float64), reps)
    t.setflags(write=False)
    return t


@dataclass(frozen=True)
class Reception:
    status: RxStatus
    anchor: int | None = None  # acquired packet start, global sample index
    toa: ToaEstimate | None = None
    cir: Cir | None = None
    sfd_errors: int = 0
    data_errors: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def lost(self) -> bool:
        return self.status in LOST_STATUSES


def packet_trains(spec: HrpPacketSpec, start: int, gain: complex, per_slot: int) -> list[PulseTrain]:
    """One pulse train per non-empty field of a packet whose first slot lands at sample ``start``."""
    lay = spec.layout
    out = []
    for name in ("preamble", "sfd", "sts", "data"):
        first, n = lay.span(name)
        field_gain = getattr(spec.gains, name)
        if not n or field_gain == 0:
            continue
        slots = spec.symbols(name)
        out.append(PulseTrain(slots, start + first * per_slot, gain * field_gain, name))
    return out


def acquisition_floor(engine: SlotCorrelator, template: np.ndarray, noise_sigma: float) -> float:
    """Median magnitude of the acquisition CIR under noise alone."""
    return noise_sigma * math.sqrt(float(np.dot(template, template)) * engine.energy * math.log(2))


def _windows(starts: Sequence[int], half: int) -> list[tuple[int, int]]:
    out: list[tuple[int, int]] = []
    for s in sorted(set(starts)):
        lo, hi = s - half, s + half + 1
        if out and lo <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return out


def acquire(
    engine: SlotCorrelator,
    template: np.ndarray,
    trains: Sequence[PulseTrain],
    noise_sigma: float,
    cfg: ReceiverConfig,
    rng: np.random.Generator | None,
) -> tuple[int, complex] | None:
    """Strongest preamble correlation near any arriving packet start.

    Only lags within one pulse length of an arrival are evaluated; elsewhere the
    acquisition CIR holds noise and code sidelobes far below threshold.
    """
    best: tuple[int, complex] | None = None
    starts = [tr.start for tr in trains if tr.field in ("", "preamble")]
    for lo, hi in _windows(starts, engine.P):
        v = engine.cir(template, trains, lo, hi - lo, noise_sigma, rng)
        i = int(np.argmax(np.abs(v)))
        if best is None or abs(v[i]) > abs(best[1]):
            best = (lo + i, complex(v[i]))
    if best is None:
        return None
    floor = acquisition_floor(engine, template, noise_sigma)
    if abs(best[1]) <= floor * 10 ** (cfg.acquisition_threshold_db / 20):
        return None
    return best


def _carrier_phase(values: np.ndarray, hint: complex) -> complex:
    """BPSK carrier phase from the field itself (squaring loop); ``hint`` resolves the sign ambiguity."""
    s = complex(np.sum(values * values))
    if s == 0:
        return hint
    r = np.sqrt(s / abs(s))
    return -r if (r * np.conj(hint)).real < 0 else r


def _sign_errors(values: np.ndarray, ref: complex, expected: np.ndarray) -> int:
    active = expected != 0
    proj = (values[active] * np.conj(ref)).real * expected[active]
    return int(np.count_nonzero(proj <= 0))


def receive(
    engine: SlotCorrelator,
    expected: ExpectedPacket,
    trains: Sequence[PulseTrain],
    noise_sigma: float,
    cfg: ReceiverConfig,
    rng: np.random.Generator | None,
    sample_rate: float,
) -> Reception:
    L = engine.L
    ts = 1e12 / sample_rate
    acq = acquire(engine, expected.acquisition, trains, noise_sigma, cfg, rng)
    if acq is None:
        return Reception("no-preamble")
    anchor, acq_value = acq
    ref = acq_value / abs(acq_value)
    lay = expected.layout

    sfd_start, n_sfd = lay.sfd
    sfd_errors = 0
    if n_sfd:
        v = engine.slot_outputs(trains, anchor + sfd_start * L, n_sfd, noise_sigma, rng, DEMOD_FILTER)
        sfd_errors = _sign_errors(v, _carrier_phase(v, ref), expected.sfd)
        if sfd_errors > cfg.max_sfd_errors:
            return Reception("sfd-error", anchor, sfd_errors=sfd_errors)

    if expected.sts is not None:
        template = expected.sts
        centre = anchor + lay.sts[0] * L
    else:
        template = expected.acquisition
        centre = anchor
    half = cfg.sts_search_halfwidth
    lag0 = centre - half
    values = engine.cir(template, trains, lag0, 2 * half + 1, noise_sigma, rng)
    cir = Cir(values, lag0 * ts, sample_rate, lag0_index=lag0)
    toa = detect_toa(cir, cfg)
    if toa is None:
        return Reception("no-detection", anchor, None, cir, sfd_errors)
    if cfg.sts_peak_tolerance is not None and abs(toa.peak_index - centre) > cfg.sts_peak_tolerance:
        return Reception("sts-mismatch", anchor, toa, cir, sfd_errors)

    peak_value = values[toa.peak_index - lag0]
    if expected.sts is not None:
        quality = _sts_quality(engine, template, trains, toa, values[toa.accepted_index - lag0], noise_sigma)
        if cfg.sts_max_bit_errors is not None:
            v = engine.slot_outputs(trains, toa.accepted_index, len(template), noise_sigma, rng)
            acc = values[toa.accepted_index - lag0]
            if _sign_errors(v, acc / abs(acc) if abs(acc) else 1.0, template) > cfg.sts_max_bit_errors:
                quality = 0.0
        toa = replace(toa, sts_quality=quality)
        if cfg.sts_max_bit_errors is not None and quality == 0.0:
            return Reception("sts-rejected", anchor, toa, cir, sfd_errors)
        ref = peak_value / abs(peak_value)

    data_errors = 0
    if expected.data is not None:
        start, n = lay.data
        v = engine.slot_outputs(trains, anchor + start * L, n, noise_sigma, rng, DEMOD_FILTER)
        data_errors = _sign_errors(v, _carrier_phase(v, ref), expected.data)
        if data_errors > cfg.max_data_bit_errors:
            return Reception("data-error", anchor, toa, cir, sfd_errors, data_errors)
    return Reception("ok", anchor, toa, cir, sfd_errors, data_errors)


def _sts_quality(
    engine: SlotCorrelator,
    template: np.ndarray,
    trains: Sequence[PulseTrain],
    toa: ToaEstimate,
    value: complex,
    noise_sigma: float,
) -> float:
    """|CIR| at the accepted lag over sqrt(template energy x received energy in its span)."""
    L, n = engine.L, len(template)
    q = toa.accepted_index
    e_t = n * engine.energy
    e_r = noise_sigma**2 * n * L
    for tr in trains:
        lo = max(0, -((tr.start - q) // L))
        hi = min(len(tr.slots), -((tr.start - q - n * L) // L))
        if hi > lo:
            seg = tr.slots[lo:hi]
            e_r += abs(tr.gain) ** 2 * engine.energy * float(np.dot(seg, seg))
    if e_r <= 0:
        return 0.0
    return min(abs(value) / math.sqrt(e_t * e_r), 1.0)


def leading_edge_bias(engine: SlotCorrelator, cfg: ReceiverConfig, n_slots: int = 4096, seed: int = 1) -> int:
    """Samples by which the back-search leads a clean, isolated path.

    The main lobe of the pulse autocorrelation sits inside the back-search
    window, so even a single path is timestamped a few samples early. Devices
    remove this constant the way real ones remove antenna delay.
    """
    rng = np.random.default_rng(seed)
    t = bpsk(rng.integers(0, 2, n_slots))
    half = cfg.sts_search_halfwidth
    start = 10 * engine.L
    values = engine.cir(t, [PulseTrain(t, start)], start - half, 2 * half + 1)
    toa = detect_toa(Cir(values, 0.0, 1.0, start - half), cfg, noise_floor=0.0)
    if toa is None:
        return 0
    return toa.advance_samples
