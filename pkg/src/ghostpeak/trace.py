"""GPKTRACE binary traces of on-air packets and ToA decisions.

Layout (all little endian)::

    file    := "GPKTRACE" u16 version record*
    record  := u8 type, u64 timestamp_ps, u16 device_id, u32 payload_len, payload

Each record type has a fixed payload schema; ``payload_len`` must match it, so
a damaged length prefix is caught where it sits. Timestamps are global
simulation time snapped to the clock tick, in whole picoseconds, and never
decrease through a file.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Literal

from .attack import TARGETS, targets_mask
from .constants import DEFAULT_TICK_PS, SPEED_OF_LIGHT
from .phy import spec_digest

MAGIC = b"GPKTRACE"
VERSION = 1
HEADER = struct.Struct("<8sH")
RECORD_HEADER = struct.Struct("<BQHI")

RecordType = Literal["tx", "rx", "toa-decision", "exchange-summary"]
RECORD_TYPES: tuple[RecordType, ...] = ("tx", "rx", "toa-decision", "exchange-summary")

SCHEMAS: dict[str, tuple[tuple[str, str], ...]] = {
    "tx": (
        ("exchange", "I"),
        ("packet", "B"),
        ("role", "B"),  # 0 legitimate, 1 attack
        ("target", "B"),  # 0 none, 1 packet2, 2 packet3
        ("digest", "Q"),
        ("gain_preamble", "d"),
        ("gain_sfd", "d"),
        ("gain_sts", "d"),
        ("gain_data", "d"),
        ("duration_ps", "Q"),
        ("arrival_offset_ps", "d"),  # attack STS arrival minus legitimate STS arrival at the victim
    ),
    "rx": (
        ("exchange", "I"),
        ("packet", "B"),
        ("source", "H"),
        ("status", "B"),
        ("local_ps", "d"),
    ),
    "toa-decision": (
        ("exchange", "I"),
        ("packet", "B"),
        ("toa_ps", "d"),
        ("peak_index", "q"),
        ("accepted_index", "q"),
        ("peak_magnitude", "d"),
        ("noise_floor", "d"),
        ("leading_edge_used", "B"),
        ("sts_quality", "d"),
        ("advance", "h"),
    ),
    "exchange-summary": (
        ("exchange", "I"),
        ("mode", "B"),
        ("status", "B"),
        ("targets", "B"),
        ("failed_packet", "B"),
        ("true_distance_m", "d"),
        ("distance_full_m", "d"),
        ("distance_simple_m", "d"),
        ("distance_peak_m", "d"),
        ("t_round1_ps", "d"),
        ("t_reply1_ps", "d"),
        ("t_round2_ps", "d"),
        ("t_reply2_ps", "d"),
    ),
}
_STRUCTS = {name: struct.Struct("<" + "".join(code for _, code in schema)) for name, schema in SCHEMAS.items()}

RX_STATUSES = ("ok", "no-preamble", "sfd-error", "no-detection", "sts-mismatch", "sts-rejected", "data-error")
EXCHANGE_STATUSES = ("ok", "packet-lost", "no-detection")
MODES = ("ss-twr", "ds-twr")
ATTACKER_DEVICE_BASE = 0xFF00  # attacker for TARGETS[i] is ATTACKER_DEVICE_BASE + i
EXCHANGE_PERIOD_PS = 10**10  # spacing of consecutive exchanges in a campaign trace


class TraceError(ValueError):
    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


@dataclass(frozen=True, eq=False)
class TraceRecord:
    record_type: RecordType
    timestamp_ps: int
    device_id: int
    fields: dict[str, int | float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.record_type not in SCHEMAS:
            raise ValueError(f"unknown record type {self.record_type!r}")
        if not 0 <= self.timestamp_ps < 2**64:
            raise ValueError("timestamp must fit in 64 bits")
        if not 0 <= self.device_id < 2**16:
            raise ValueError("device_id must fit in 16 bits")
        names = [n for n, _ in SCHEMAS[self.record_type]]
        if sorted(self.fields) != sorted(names):
            raise ValueError(f"{self.record_type} record needs fields {names}")

    def payload(self) -> bytes:
        values = [self.fields[n] for n, _ in SCHEMAS[self.record_type]]
        try:
            return _STRUCTS[self.record_type].pack(*values)
        except struct.error as exc:
            raise ValueError(f"{self.record_type} field out of range: {exc}") from None

    def encode(self) -> bytes:
        body = self.payload()
        code = RECORD_TYPES.index(self.record_type) + 1
        return RECORD_HEADER.pack(code, self.timestamp_ps, self.device_id, len(body)) + body

    def __eq__(self, other: object) -> bool:
        # Byte equality, so NaN distances compare equal to themselves.
        return isinstance(other, TraceRecord) and self.encode() == other.encode()

    def __hash__(self) -> int:
        return hash(self.encode())


# -- file I/O ------------------------------------------------------------------


class TraceWriter:
    """Append-only writer; enforces non-decreasing timestamps."""

    def __init__(self, fh: BinaryIO) -> None:
        self._fh = fh
        self._last = 0
        fh.write(HEADER.pack(MAGIC, VERSION))

    def write(self, record: TraceRecord) -> None:
        if record.timestamp_ps < self._last:
            raise ValueError("trace records must be in timestamp order")
        self._last = record.timestamp_ps
        self._fh.write(record.encode())

    def write_all(self, records: Iterable[TraceRecord]) -> None:
        for r in records:
            self.write(r)


def write_trace(records: Iterable[TraceRecord], path: str | Path) -> None:
    with open(path, "wb") as fh:
        TraceWriter(fh).write_all(records)


def parse_trace(data: bytes) -> Iterator[TraceRecord]:
    if len(data) < HEADER.size:
        raise TraceError("truncated header", 0)
    magic, version = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise TraceError("bad magic", 0)
    if version != VERSION:
        raise TraceError(f"unsupported version {version}", len(MAGIC))
    pos = HEADER.size
    last = 0
    while pos < len(data):
        if pos + RECORD_HEADER.size > len(data):
            raise TraceError("truncated record header", pos)
        code, ts, device, length = RECORD_HEADER.unpack_from(data, pos)
        if not 1 <= code <= len(RECORD_TYPES):
            raise TraceError(f"unknown record type {code}", pos)
        kind = RECORD_TYPES[code - 1]
        body = _STRUCTS[kind]
        if length != body.size:
            raise TraceError(f"bad payload length {length} for {kind} record", pos + 11)
        start = pos + RECORD_HEADER.size
        if start + length > len(data):
            raise TraceError("truncated payload", start)
        if ts < last:
            raise TraceError("timestamp goes backwards", pos + 1)
        last = ts
        values = body.unpack_from(data, start)
        yield TraceRecord(kind, ts, device, dict(zip((n for n, _ in SCHEMAS[kind]), values)))
        pos = start + length


def read_trace(path: str | Path) -> list[TraceRecord]:
    return list(parse_trace(Path(path).read_bytes()))


# -- exchange -> records ---------------------------------------------------------


def _snap(t: float, epoch: int, tick: float) -> int:
    return epoch + int(round(round(t / tick) * tick))


def _nan(x: float | None) -> float:
    return math.nan if x is None else float(x)


def exchange_records(ex, exchange: int = 0, epoch_ps: int | None = None, tick: float = DEFAULT_TICK_PS) -> list[TraceRecord]:
    """All records of one :class:`~ghostpeak.ranging.RangingExchange`, in time order.

    ``epoch_ps`` places the exchange on the trace timeline (default
    ``exchange * EXCHANGE_PERIOD_PS``).
    """
    epoch = exchange * EXCHANGE_PERIOD_PS if epoch_ps is None else epoch_ps
    tof = ex.true_distance / SPEED_OF_LIGHT * 1e12
    out: list[TraceRecord] = []
    for p in ex.packets:
        g = p.spec.gains if p.spec is not None else None
        out.append(TraceRecord("tx", _snap(p.tx_time, epoch, tick), p.sender, {
            "exchange": exchange, "packet": p.index, "role": 0, "target": 0,
            "digest": spec_digest(p.spec) if p.spec is not None else 0,
            "gain_preamble": g.preamble if g else 1.0, "gain_sfd": g.sfd if g else 1.0,
            "gain_sts": g.sts if g else 1.0, "gain_data": g.data if g else 1.0,
            "duration_ps": int(round(p.duration)), "arrival_offset_ps": math.nan,
        }))
        if p.rx_status == "no-preamble":
            continue
        t_rx = _snap(p.rx_time if p.rx_time is not None else p.tx_time + tof, epoch, tick)
        out.append(TraceRecord("rx", t_rx, p.receiver, {
            "exchange": exchange, "packet": p.index, "source": p.sender,
            "status": RX_STATUSES.index(p.rx_status), "local_ps": _nan(p.rx_local),
        }))
        if p.toa is not None:
            t = p.toa
            out.append(TraceRecord("toa-decision", t_rx, p.receiver, {
                "exchange": exchange, "packet": p.index, "toa_ps": float(t.toa),
                "peak_index": int(t.peak_index), "accepted_index": int(t.accepted_index),
                "peak_magnitude": float(t.peak_magnitude), "noise_floor": float(t.noise_floor),
                "leading_edge_used": int(t.leading_edge_used), "sts_quality": float(t.sts_quality),
                "advance": int(p.advance),
            }))
    initiator = ex.packets[0].sender if ex.packets else 0
    for target, trigger in ex.triggers:
        if trigger is not None:
            out.append(TraceRecord("rx", _snap(trigger, epoch, tick), ATTACKER_DEVICE_BASE + TARGETS.index(target), {
                "exchange": exchange, "packet": 1, "source": initiator, "status": 0, "local_ps": float(trigger),
            }))
    for a in ex.attacks:
        i = TARGETS.index(a.target)
        out.append(TraceRecord("tx", _snap(a.tx_time, epoch, tick), ATTACKER_DEVICE_BASE + i, {
            "exchange": exchange, "packet": i + 2, "role": 1, "target": i + 1,
            "digest": spec_digest(a.packet) if a.packet is not None else 0,
            "gain_preamble": a.gains[0], "gain_sfd": a.gains[1], "gain_sts": a.gains[2], "gain_data": a.gains[3],
            "duration_ps": int(round(a.duration)), "arrival_offset_ps": float(a.arrival_offset),
        }))
    out.sort(key=lambda r: r.timestamp_ps)
    end = out[-1].timestamp_ps if out else epoch
    out.append(TraceRecord("exchange-summary", end, initiator, {
        "exchange": exchange, "mode": MODES.index(ex.mode), "status": EXCHANGE_STATUSES.index(ex.status),
        "targets": targets_mask([a.target for a in ex.attacks]),
        "failed_packet": ex.failed_packet or 0,
        "true_distance_m": float(ex.true_distance), "distance_full_m": float(ex.distance_full),
        "distance_simple_m": float(ex.distance_simple), "distance_peak_m": float(ex.distance_peak),
        "t_round1_ps": float(ex.t_round1), "t_reply1_ps": float(ex.t_reply1),
        "t_round2_ps": float(ex.t_round2), "t_reply2_ps": float(ex.t_reply2),
    }))
    return out


def encode_records(records: Iterable[TraceRecord]) -> bytes:
    return b"".join(r.encode() for r in records)
