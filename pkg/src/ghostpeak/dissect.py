"""Human-readable rendering of GPKTRACE files."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable

from .attack import TARGETS, mask_targets
from .trace import (
    ATTACKER_DEVICE_BASE,
    EXCHANGE_STATUSES,
    MODES,
    RX_STATUSES,
    TraceRecord,
    read_trace,
)

OVERLAP_FLAG = "[OVERLAP]"
GHOST_PEAK_FLAG = "[GHOST-PEAK]"


def _device(dev: int) -> str:
    if ATTACKER_DEVICE_BASE <= dev < ATTACKER_DEVICE_BASE + len(TARGETS):
        return f"atk-{TARGETS[dev - ATTACKER_DEVICE_BASE]}"
    return f"dev-{dev:04x}"


def _num(x: float, unit: str, fmt: str = ".3f") -> str:
    return "n/a" if math.isnan(x) else f"{x:{fmt}} {unit}"


def _line(r: TraceRecord) -> str:
    f = r.fields
    head = f"  {r.timestamp_ps:>16d} ps  {_device(r.device_id):<14}"
    if r.record_type == "tx":
        gains = f"gains pre={f['gain_preamble']:.2f} sfd={f['gain_sfd']:.2f} sts={f['gain_sts']:.2f} data={f['gain_data']:.2f}"
        if f["role"] == 1:
            off = f["arrival_offset_ps"]
            flag = f"  {OVERLAP_FLAG}" if abs(off) < f["duration_ps"] else ""
            return (f"{head}TX    pkt{f['packet']} ATTACK target={TARGETS[f['target'] - 1]} {gains} "
                    f"offset={off / 1e3:+.3f} ns digest={f['digest']:016x}{flag}")
        kind = "ranging" if f["packet"] <= 3 else "report"
        return f"{head}TX    pkt{f['packet']} {kind} {gains} digest={f['digest']:016x}"
    if r.record_type == "rx":
        local = "n/a" if math.isnan(f["local_ps"]) else f"{f['local_ps']:.2f} ps"
        return (f"{head}RX    pkt{f['packet']} from {_device(f['source'])} status={RX_STATUSES[f['status']]} "
                f"local={local}")
    if r.record_type == "toa-decision":
        return (f"{head}TOA   pkt{f['packet']} peak={f['peak_index']} accepted={f['accepted_index']} "
                f"advance={f['advance']} leading_edge={'yes' if f['leading_edge_used'] else 'no'} "
                f"quality={f['sts_quality']:.3f} snr={_snr(f)}")
    return ""


def _snr(f: dict) -> str:
    if f["noise_floor"] <= 0:
        return "inf"
    return f"{20 * math.log10(f['peak_magnitude'] / f['noise_floor']):.1f} dB"


def _summary(r: TraceRecord, ghost: bool) -> str:
    f = r.fields
    targets = ",".join(mask_targets(f["targets"])) or "none"
    reduction = f["true_distance_m"] - f["distance_full_m"]
    failed = f" failed=pkt{f['failed_packet']}" if f["failed_packet"] else ""
    flag = f"  {GHOST_PEAK_FLAG}" if ghost else ""
    return (f"  {r.timestamp_ps:>16d} ps  {_device(r.device_id):<14}SUMMARY {MODES[f['mode']]} "
            f"{EXCHANGE_STATUSES[f['status']]}{failed} attack={targets} true={_num(f['true_distance_m'], 'm')} "
            f"full={_num(f['distance_full_m'], 'm')} simple={_num(f['distance_simple_m'], 'm')} "
            f"reduction={_num(reduction, 'm')}{flag}")


def render(records: Iterable[TraceRecord]) -> list[str]:
    """One line per record, grouped by exchange.

    A summary gets the ghost-peak annotation when the exchange completed, some
    ToA decision in it accepted an early lag (leading edge used, positive
    advance) and the accepted lags shortened the distance.
    """
    lines = ["GPKTRACE v1"]
    current = None
    ghost = False
    for r in records:
        ex = r.fields["exchange"]
        if ex != current:
            current, ghost = ex, False
            lines.append(f"exchange {ex}")
        if r.record_type == "toa-decision" and r.fields["leading_edge_used"] and r.fields["advance"] > 0:
            ghost = True
        if r.record_type == "exchange-summary":
            f = r.fields
            reduced = f["status"] == 0 and f["distance_peak_m"] - f["distance_full_m"] > 0
            lines.append(_summary(r, ghost and reduced))
        else:
            lines.append(_line(r))
    return lines


def dissect(path: str | Path) -> str:
    return "\n".join(render(read_trace(path))) + "\n"
