"""Two-way ranging between two simulated devices, with and without an attacker.

Every timestamp is the arrival (or departure) of a packet's STS start, read
on the local clock of the device that takes it and quantized to the clock
tick. Delayed transmissions are scheduled on the local clock, so a ToA that
is accepted early also moves the next transmission early.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Literal

import numpy as np

from .attack import TARGETS, AttackConfig, Emission, Target, reactive_schedule
from .channel import ChannelModel, free_space_channel
from .constants import (
    DEFAULT_NOISE_SIGMA,
    DEFAULT_SAMPLE_RATE,
    DEFAULT_TICK_PS,
    SLOT_PS,
    SPEED_OF_LIGHT,
    sample_period_ps,
    slot_samples,
)
from .correlator import PulseTrain, SlotCorrelator
from .phy import (
    DEFAULT_PREAMBLE_LENGTH,
    DEFAULT_PREAMBLE_REPETITIONS,
    DEFAULT_PREAMBLE_SEED,
    DEFAULT_SFD,
    DEFAULT_STS_BITS,
    DEFAULT_STS_GAP_SLOTS,
    ConfigurationError,
    HrpPacketSpec,
    PulseShape,
    StsConfig,
    preamble_code,
)
from .receiver import ReceiverConfig, ToaEstimate
from .reception import (
    ExpectedPacket,
    Reception,
    _acquisition_template,
    acquire,
    leading_edge_bias,
    packet_trains,
    receive,
)

C_M_PER_PS = SPEED_OF_LIGHT * 1e-12

Mode = Literal["ss-twr", "ds-twr"]
ExchangeStatus = Literal["ok", "packet-lost", "no-detection"]


class MeasurementError(ValueError):
    """Timestamps that cannot come from a valid exchange."""


# -- distance formulas ---------------------------------------------------------


def ss_twr_distance(t_round: float, t_reply: float) -> float:
    if t_round < t_reply:
        raise MeasurementError("round time shorter than reply time")
    return C_M_PER_PS * (t_round - t_reply) / 2


def ds_twr_distance_full(t_round1: float, t_reply1: float, t_round2: float, t_reply2: float) -> float:
    """Asymmetric DS-TWR; cancels clock frequency offset to first order."""
    denom = t_round1 + t_round2 + t_reply1 + t_reply2
    if not denom > 0:
        raise MeasurementError("non-positive DS-TWR denominator")
    # round1*round2 - reply1*reply2, arranged to avoid cancelling two ~1e18 ps^2 products
    num = (t_round1 - t_reply1) * t_round2 + t_reply1 * (t_round2 - t_reply2)
    return C_M_PER_PS * num / denom


def ds_twr_distance_simple(t_round1: float, t_reply1: float, t_round2: float, t_reply2: float) -> float:
    """Average of the two round trips; may be negative."""
    return C_M_PER_PS / 4 * (t_round1 + t_round2 - t_reply1 - t_reply2)


def predicted_reduction(target: str, delta: float, delta3: float | None = None) -> float:
    """Distance reduction (m) from a per-packet ToA advance (ps).

    For ``both``, ``delta`` is the packet 2 advance and ``delta3`` the packet 3
    advance (defaults to ``delta``).
    """
    if delta < 0 or (delta3 is not None and delta3 < 0):
        raise ValueError("advance must be >= 0")
    if target == "packet3":
        return C_M_PER_PS * delta / 4
    if target == "packet2":
        return C_M_PER_PS * delta / 2
    if target == "both":
        d3 = delta if delta3 is None else delta3
        return C_M_PER_PS * delta / 2 + C_M_PER_PS * d3 / 4
    raise ValueError(f"unknown target {target!r}")


# -- devices ---------------------------------------------------------------------


@dataclass(frozen=True)
class DeviceClock:
    offset: float = 0.0  # ps
    ppm: float = 0.0
    tick: float = DEFAULT_TICK_PS

    def __post_init__(self) -> None:
        if not self.tick > 0:
            raise ConfigurationError("clock tick must be positive")
        if not abs(self.ppm) < 1000:
            raise ConfigurationError("|ppm| must be below 1000")

    @property
    def rate(self) -> float:
        return 1.0 + self.ppm * 1e-6

    def local(self, t: float) -> float:
        return self.offset + t * self.rate

    def to_global(self, local: float) -> float:
        return (local - self.offset) / self.rate

    def quantize(self, local: float) -> float:
        return round(local / self.tick) * self.tick


@dataclass(frozen=True)
class DeviceConfig:
    device_id: int = 1
    clock: DeviceClock = DeviceClock()
    reply_time: float = 1e9  # ps
    receiver: ReceiverConfig = ReceiverConfig()

    def __post_init__(self) -> None:
        if not 0 <= self.device_id < 2**16:
            raise ConfigurationError("device_id must fit in 16 bits")
        if not self.reply_time > 0:
            raise ConfigurationError("reply_time must be positive")


@dataclass(frozen=True)
class PhyConfig:
    """Packet format and sampling shared by both devices."""

    sample_rate: float = DEFAULT_SAMPLE_RATE
    pulse: PulseShape = PulseShape()
    preamble_seed: int = DEFAULT_PREAMBLE_SEED
    preamble_length: int = DEFAULT_PREAMBLE_LENGTH
    preamble_repetitions: int = DEFAULT_PREAMBLE_REPETITIONS
    sfd: tuple[int, ...] = DEFAULT_SFD
    sts_key: int = 0x2B7E151628AED2A6ABF7158809CF4F3C
    sts_upper96: int = 0x0123456789ABCDEF01234567
    sts_length_bits: int = DEFAULT_STS_BITS
    sts_gap_slots: int = DEFAULT_STS_GAP_SLOTS
    data_bits: int = 32
    report_message: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "sfd", tuple(int(v) for v in self.sfd))
        try:
            slot_samples(self.sample_rate)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        if self.data_bits < 0:
            raise ConfigurationError("data_bits must be >= 0")
        if self.pulse.samples_per_pulse > slot_samples(self.sample_rate):
            raise ConfigurationError("pulse longer than one slot")
        StsConfig(self.sts_key, self.sts_upper96, 0, self.sts_length_bits)

    def packet(self, counter: int | None, data: np.ndarray | None) -> HrpPacketSpec:
        sts = None if counter is None else StsConfig(self.sts_key, self.sts_upper96, counter, self.sts_length_bits)
        return HrpPacketSpec(
            preamble_code=preamble_code(self.preamble_seed, self.preamble_length),
            preamble_repetitions=self.preamble_repetitions,
            sfd=self.sfd,
            sts=sts,
            data_bits=None if data is None or len(data) == 0 else tuple(int(b) for b in data),
            sts_gap_slots=self.sts_gap_slots,
        )


@lru_cache(maxsize=8)
def _engine(pulse: PulseShape, sample_rate: float) -> SlotCorrelator:
    return SlotCorrelator(pulse.samples(sample_rate), slot_samples(sample_rate))


@lru_cache(maxsize=32)
def _bias(pulse: PulseShape, sample_rate: float, cfg: ReceiverConfig) -> int:
    return leading_edge_bias(_engine(pulse, sample_rate), cfg)


def toa_bias_samples(phy: PhyConfig, cfg: ReceiverConfig) -> int:
    """Calibrated lead of the back-search on a clean path, removed from every timestamp."""
    return _bias(phy.pulse, float(phy.sample_rate), cfg)


# -- exchange --------------------------------------------------------------------


@dataclass(frozen=True)
class PacketRecord:
    """One legitimate packet as seen by the simulation (global times, ps)."""

    index: int  # 1..3 ranging packets, 4 for the optional report
    sender: int
    receiver: int
    tx_time: float  # STS start leaving the sender
    duration: float
    rx_status: str
    toa: ToaEstimate | None
    rx_local: float | None  # receiver timestamp, local clock, quantized
    advance: int = 0  # samples accepted ahead of the clean-path position
    rx_time: float | None = None  # receiver's STS-start estimate, global ps
    spec: HrpPacketSpec | None = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class AttackRecord:
    target: Target
    tx_time: float  # STS start leaving the attacker
    arrival_offset: float  # attacker STS arrival minus legitimate STS arrival at the victim, ps
    duration: float
    gains: tuple[float, float, float, float]
    packet: HrpPacketSpec | None = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class RangingExchange:
    mode: Mode
    status: ExchangeStatus
    true_distance: float
    t_round1: float = math.nan
    t_reply1: float = math.nan
    t_round2: float = math.nan
    t_reply2: float = math.nan
    toas: tuple[ToaEstimate | None, ...] = ()
    distance_full: float = math.nan
    distance_simple: float = math.nan
    distance_peak: float = math.nan  # same exchange timed on the strongest peaks
    packets: tuple[PacketRecord, ...] = ()
    attacks: tuple[AttackRecord, ...] = ()
    failed_packet: int | None = None
    triggers: tuple[tuple[Target, float | None], ...] = ()  # attacker's packet 1 detection per target, global ps

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def distance(self) -> float:
        """Reported distance."""
        return self.distance_full

    @property
    def advances(self) -> tuple[int, ...]:
        return tuple(p.advance for p in self.packets if p.index <= 3)

    @property
    def attack_reduction(self) -> float:
        """Reduction attributable to accepted early lags (m)."""
        return self.distance_peak - self.distance_full


def _status_of(rx: Reception) -> ExchangeStatus:
    return "packet-lost" if rx.lost else "no-detection"


@dataclass
class _Medium:
    """Signals arriving at one receiver during one packet window."""

    trains: list[PulseTrain] = field(default_factory=list)

    def add(self, spec: HrpPacketSpec, pre_start: float, channel: ChannelModel, ts: float, phase: complex) -> None:
        per_slot = int(round(SLOT_PS / ts))
        for delay, gain in channel.taps:
            # Arrivals snap to the receiver's sample grid; the random exchange start dithers the error.
            self.trains += packet_trains(spec, int(round((pre_start + delay) / ts)), gain * phase, per_slot)


def run_exchange(
    initiator: DeviceConfig,
    responder: DeviceConfig,
    channel: ChannelModel,
    attack: AttackConfig | None = None,
    seed: int = 0,
    phy: PhyConfig = PhyConfig(),
    mode: Mode = "ds-twr",
) -> RangingExchange:
    """Simulate one exchange over ``channel`` (reciprocal, initiator <-> responder).

    ``channel.noise_sigma`` is the receiver noise at every device. A random
    carrier phase and a random start offset are drawn per exchange.
    """
    rng = np.random.default_rng(seed)
    fs = float(phy.sample_rate)
    ts = sample_period_ps(fs)
    engine = _engine(phy.pulse, fs)
    L = engine.L
    sigma = channel.noise_sigma
    los = channel.los_delay_ps
    true_distance = los * C_M_PER_PS
    phase = cmath.exp(2j * math.pi * rng.random())
    counter0 = int(rng.integers(0, 2**31))
    t_start = 10e6 + rng.random() * 1e6  # ps
    grid = {1: rng.random() * ts, 2: rng.random() * ts}  # each receiver's sampling phase (ps)

    n_packets = 2 if mode == "ss-twr" else 3
    specs = [phy.packet(counter0 + k, rng.integers(0, 2, phy.data_bits)) for k in range(n_packets)]
    sts_lead = specs[0].layout.sts[0] * SLOT_PS  # preamble start to STS start
    duration = specs[0].layout.total_slots * SLOT_PS

    attack_on = attack is not None and attack.active
    emissions: list[Emission] = []
    attack_records: list[AttackRecord] = []
    triggers: tuple[tuple[Target, float | None], ...] = ()
    if attack_on:
        nonce = int(rng.integers(0, 2**62))

    devices = {1: initiator, 2: responder}
    packets: list[PacketRecord] = []
    rx_local: dict[int, float] = {}
    tx_local: dict[int, float] = {}
    peak_adv: dict[int, int] = {}

    def sender_of(k: int) -> int:
        return 1 if k % 2 == 1 else 2

    def transmit_local(k: int) -> float:
        dev = devices[sender_of(k)]
        if k == 1:
            return dev.clock.quantize(dev.clock.local(t_start))
        return dev.clock.quantize(rx_local[k - 1] + dev.reply_time)

    for k in range(1, n_packets + 1):
        src, dst = sender_of(k), 3 - sender_of(k)
        tx_dev, rx_dev = devices[src], devices[dst]
        tx_local[k] = transmit_local(k)
        tx_global = tx_dev.clock.to_global(tx_local[k])
        spec = specs[k - 1]
        medium = _Medium()
        medium.add(spec, tx_global - sts_lead - grid[dst], channel, ts, phase)

        if k == 1 and attack_on:
            triggers, emissions = _attacker_trigger(attack, spec, tx_global - sts_lead, channel, phy, engine, sigma,
                                          rx_dev.receiver, rng, nonce, sts_lead, ts)
        target = {2: "packet2", 3: "packet3"}.get(k)
        for em in emissions:
            if em.target != target:
                continue
            att_ch = attack.channel_to_victim(em.target) or free_space_channel(attack.attacker_distance_m)
            legit_arrival = tx_global + los
            arrival = em.emit_time + att_ch.los_delay_ps
            scale = abs(channel.los_gain) / abs(att_ch.los_gain)
            att_phase = cmath.exp(2j * math.pi * rng.random())
            scaled = ChannelModel(tuple((d, g * scale) for d, g in att_ch.taps))
            medium.add(em.packet, em.emit_time - sts_lead - grid[dst], scaled, ts, att_phase)
            g = em.packet.gains
            attack_records.append(AttackRecord(em.target, em.emit_time, arrival - legit_arrival, duration,
                                               (g.preamble, g.sfd, g.sts, g.data), em.packet))

        expected = ExpectedPacket.from_spec(spec, rx_dev.receiver.acquisition_symbols)
        rx = receive(engine, expected, medium.trains, sigma, rx_dev.receiver, rng, fs)
        bias = toa_bias_samples(phy, rx_dev.receiver)
        if not rx.ok:
            packets.append(PacketRecord(k, tx_dev.device_id, rx_dev.device_id, tx_global, duration,
                                        rx.status, rx.toa, None, spec=spec))
            return RangingExchange(mode, _status_of(rx), true_distance, toas=tuple(p.toa for p in packets),
                                   packets=tuple(packets), attacks=tuple(attack_records), failed_packet=k,
                                   triggers=triggers)
        toa = rx.toa
        toa_global = (toa.accepted_index + bias) * ts + grid[dst]
        rx_local[k] = rx_dev.clock.quantize(rx_dev.clock.local(toa_global))
        peak_adv[k] = toa.advance_samples - bias
        packets.append(PacketRecord(k, tx_dev.device_id, rx_dev.device_id, tx_global, duration, rx.status,
                                    toa, rx_local[k], peak_adv[k], toa_global, spec))

    if phy.report_message and mode == "ds-twr":
        # Responder returns its timestamps in a data-only frame; it is not a ranging packet.
        tx_local[4] = responder.clock.quantize(rx_local[3] + responder.reply_time)
        tx_global = responder.clock.to_global(tx_local[4])
        report = phy.packet(None, rng.integers(0, 2, max(phy.data_bits, 1)))
        lead = report.layout.sts[0] * SLOT_PS
        medium = _Medium()
        medium.add(report, tx_global - lead - grid[1], channel, ts, phase)
        rx = receive(engine, ExpectedPacket.from_spec(report, initiator.receiver.acquisition_symbols),
                     medium.trains, sigma, initiator.receiver, rng, fs)
        rx_time = None if rx.toa is None else rx.toa.accepted_index * ts + grid[1] + lead
        packets.append(PacketRecord(4, responder.device_id, initiator.device_id, tx_global,
                                    report.layout.total_slots * SLOT_PS, rx.status, rx.toa, None,
                                    rx_time=rx_time, spec=report))
        if not rx.ok:
            return RangingExchange(mode, "packet-lost", true_distance,
                                   toas=tuple(p.toa for p in packets if p.index <= 3), packets=tuple(packets),
                                   attacks=tuple(attack_records), failed_packet=4, triggers=triggers)

    toas = tuple(p.toa for p in packets if p.index <= 3)
    round1 = rx_local[2] - tx_local[1]
    reply1 = tx_local[2] - rx_local[1]
    adv = [peak_adv[k] * ts for k in range(1, n_packets + 1)]
    if mode == "ss-twr":
        d = ss_twr_distance(round1, reply1) if round1 >= reply1 else C_M_PER_PS * (round1 - reply1) / 2
        d_peak = C_M_PER_PS * (round1 + adv[0] + adv[1] - reply1) / 2
        return RangingExchange(mode, "ok", true_distance, round1, reply1, toas=toas, distance_full=d,
                               distance_simple=d, distance_peak=d_peak, packets=tuple(packets),
                               attacks=tuple(attack_records), triggers=triggers)
    round2 = rx_local[3] - tx_local[2]
    reply2 = tx_local[3] - rx_local[2]
    full = ds_twr_distance_full(round1, reply1, round2, reply2)
    simple = ds_twr_distance_simple(round1, reply1, round2, reply2)
    peak = ds_twr_distance_full(round1 + adv[0] + adv[1], reply1, round2 + adv[1] + adv[2], reply2)
    return RangingExchange(mode, "ok", true_distance, round1, reply1, round2, reply2, toas, full, simple, peak,
                           tuple(packets), tuple(attack_records), triggers=triggers)


def _attacker_trigger(
    attack: AttackConfig,
    spec: HrpPacketSpec,
    pre_start: float,
    channel: ChannelModel,
    phy: PhyConfig,
    engine: SlotCorrelator,
    sigma: float,
    cfg: ReceiverConfig,
    rng: np.random.Generator,
    nonce: int,
    sts_lead: float,
    ts: float,
) -> tuple[tuple[tuple[Target, float | None], ...], list[Emission]]:
    """The attacker hears packet 1 on its own preamble detector and schedules its emissions.

    One attacker device per target: the packet 2 attacker sits next to the
    initiator, the packet 3 attacker next to the responder.
    """
    distance = channel.los_delay_ps * C_M_PER_PS
    emissions: list[Emission] = []
    triggers = []
    for target in attack.targets:
        d_trigger = attack.attacker_distance_m if target == "packet2" else max(distance - attack.attacker_distance_m, 0.05)
        link = free_space_channel(d_trigger, phase=2 * math.pi * rng.random())
        medium = _Medium()
        medium.add(spec, pre_start, link, ts, 1.0)
        trains = [tr for tr in medium.trains if tr.field == "preamble"]  # nothing later reaches the window
        template = _acquisition_template(spec.preamble_code, min(cfg.acquisition_symbols, spec.preamble_repetitions))
        acq = acquire(engine, template, trains, sigma, cfg, rng)
        trigger = None if acq is None else (acq[0] * ts + sts_lead)
        triggers.append((target, trigger))
        single = replace(attack, targets=(target,))
        emissions += reactive_schedule(trigger, single, spec, rng, nonce=nonce * 2 + TARGETS.index(target))
    return tuple(triggers), emissions
