"""Scenario configuration files.

INI-style text with sections ``[scenario]``, ``[channel]``, ``[devices]``,
``[receiver]``, ``[attack]`` and ``[phy]``. Every key is optional and defaults
to the value in :class:`~ghostpeak.campaign.ScenarioConfig`; unknown sections
or keys are rejected.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable

from .campaign import ScenarioConfig
from .phy import ConfigurationError


@dataclass(frozen=True)
class Knob:
    section: str
    key: str
    paths: tuple[tuple[str | int, ...], ...]  # attribute path(s) inside ScenarioConfig
    parse: Callable[[str], Any]
    fmt: Callable[[Any], str]
    doc: str = ""


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int(s: str) -> int:
    return int(s.strip(), 0)


def _opt_int(s: str) -> int | None:
    return None if s.strip().lower() in ("", "none") else _int(s)


def _fmt_opt(v: int | None) -> str:
    return "none" if v is None else str(v)


def _ints(s: str) -> tuple[int, ...]:
    return tuple(_int(x) for x in s.split(",") if x.strip())


def _targets(s: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _taps(s: str) -> tuple[tuple[float, complex], ...]:
    out = []
    for item in s.split(","):
        if not item.strip():
            continue
        parts = item.split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"tap must be delay_ps:gain_re[:gain_im], got {item!r}")
        im = float(parts[2]) if len(parts) == 3 else 0.0
        out.append((float(parts[0]), complex(float(parts[1]), im)))
    return tuple(out)


def _fmt_taps(taps) -> str:
    return ", ".join(f"{d!r}:{g.real!r}:{g.imag!r}" for d, g in taps)


_f, _r = float, repr
_KNOBS: tuple[Knob, ...] = (
    Knob("scenario", "true_distance", (("true_distance",),), _f, _r, "metres"),
    Knob("scenario", "n_trials", (("n_trials",),), _int, str),
    Knob("scenario", "master_seed", (("master_seed",),), _int, str, "64-bit"),
    Knob("scenario", "baseline_trials", (("baseline_trials",),), _int, str),
    Knob("scenario", "workers", (("workers",),), _int, str, "worker processes"),
    Knob("scenario", "mode", (("mode",),), str.strip, str, "ss-twr or ds-twr"),
    Knob("channel", "noise_sigma", (("noise_sigma",),), _f, _r, "per-sample complex noise std at 1 m"),
    Knob("channel", "extra_taps", (("extra_taps",),), _taps, _fmt_taps, "delay_ps:gain_re[:gain_im], ..."),
    Knob("devices", "initiator_id", (("initiator", "device_id"),), _int, str),
    Knob("devices", "responder_id", (("responder", "device_id"),), _int, str),
    Knob("devices", "initiator_ppm", (("initiator", "clock", "ppm"),), _f, _r),
    Knob("devices", "responder_ppm", (("responder", "clock", "ppm"),), _f, _r),
    Knob("devices", "initiator_offset_ps", (("initiator", "clock", "offset"),), _f, _r),
    Knob("devices", "responder_offset_ps", (("responder", "clock", "offset"),), _f, _r),
    Knob("devices", "tick_ps", (("initiator", "clock", "tick"), ("responder", "clock", "tick")), _f, _r),
    Knob("devices", "initiator_reply_ps", (("initiator", "reply_time"),), _f, _r),
    Knob("devices", "responder_reply_ps", (("responder", "reply_time"),), _f, _r),
    Knob("receiver", "backsearch_window", (("receiver", "backsearch_window"),), _int, str, "W, samples"),
    Knob("receiver", "detect_threshold_db", (("receiver", "detect_threshold_db"),), _f, _r),
    Knob("receiver", "leading_edge_threshold_db", (("receiver", "leading_edge_threshold_db"),), _f, _r),
    Knob("receiver", "leading_edge_rel_max_db", (("receiver", "leading_edge_rel_max_db"),), _f, _r),
    Knob("receiver", "noise_estimator", (("receiver", "noise_estimator"),), str.strip, str),
    Knob("receiver", "sts_max_bit_errors", (("receiver", "sts_max_bit_errors"),), _opt_int, _fmt_opt),
    Knob("receiver", "sts_search_halfwidth", (("receiver", "sts_search_halfwidth"),), _int, str),
    Knob("receiver", "sts_peak_tolerance", (("receiver", "sts_peak_tolerance"),), _opt_int, _fmt_opt),
    Knob("receiver", "acquisition_symbols", (("receiver", "acquisition_symbols"),), _int, str),
    Knob("receiver", "acquisition_threshold_db", (("receiver", "acquisition_threshold_db"),), _f, _r),
    Knob("receiver", "max_sfd_errors", (("receiver", "max_sfd_errors"),), _int, str),
    Knob("receiver", "max_data_bit_errors", (("receiver", "max_data_bit_errors"),), _int, str),
    Knob("attack", "enabled", (("attack", "enabled"),), _bool, lambda v: "true" if v else "false"),
    Knob("attack", "targets", (("attack", "targets"),), _targets, ", ".join, "packet2, packet3"),
    Knob("attack", "delay_packet2_ps", (("attack", "delay_after_rx", 0),), _f, _r),
    Knob("attack", "delay_packet3_ps", (("attack", "delay_after_rx", 1),), _f, _r),
    Knob("attack", "timing_jitter_sigma_ps", (("attack", "timing_jitter_sigma"),), _f, _r),
    Knob("attack", "preamble_gain", (("attack", "preamble_gain"),), _f, _r),
    Knob("attack", "sfd_gain", (("attack", "sfd_gain"),), _f, _r),
    Knob("attack", "sts_gain", (("attack", "sts_gain"),), _f, _r),
    Knob("attack", "sts_seed", (("attack", "sts_seed"),), _int, hex),
    Knob("attack", "attacker_distance_m", (("attack", "attacker_distance_m"),), _f, _r),
    Knob("phy", "sample_rate", (("phy", "sample_rate"),), _f, _r, "Hz, multiple of 64 MHz"),
    Knob("phy", "pulse_kind", (("phy", "pulse", "kind"),), str.strip, str),
    Knob("phy", "pulse_duration_s", (("phy", "pulse", "duration"),), _f, _r),
    Knob("phy", "pulse_samples", (("phy", "pulse", "samples_per_pulse"),), _int, str),
    Knob("phy", "pulse_rolloff", (("phy", "pulse", "rolloff"),), _f, _r),
    Knob("phy", "preamble_seed", (("phy", "preamble_seed"),), _int, hex),
    Knob("phy", "preamble_length", (("phy", "preamble_length"),), _int, str),
    Knob("phy", "preamble_repetitions", (("phy", "preamble_repetitions"),), _int, str),
    Knob("phy", "sfd", (("phy", "sfd"),), _ints, lambda v: ", ".join(map(str, v))),
    Knob("phy", "sts_key", (("phy", "sts_key"),), _int, hex),
    Knob("phy", "sts_upper96", (("phy", "sts_upper96"),), _int, hex),
    Knob("phy", "sts_length_bits", (("phy", "sts_length_bits"),), _int, str),
    Knob("phy", "sts_gap_slots", (("phy", "sts_gap_slots"),), _int, str),
    Knob("phy", "data_bits", (("phy", "data_bits"),), _int, str),
    Knob("phy", "report_message", (("phy", "report_message"),), _bool, lambda v: "true" if v else "false"),
)
SECTIONS = tuple(dict.fromkeys(k.section for k in _KNOBS))
_BY_KEY = {(k.section, k.key): k for k in _KNOBS}


def _get(obj: Any, path: tuple[str | int, ...]) -> Any:
    for p in path:
        obj = obj[p] if isinstance(p, int) else getattr(obj, p)
    return obj


def _set(obj: Any, path: tuple[str | int, ...], value: Any) -> Any:
    head, rest = path[0], path[1:]
    if isinstance(head, int):
        items = list(obj)
        items[head] = _set(items[head], rest, value) if rest else value
        return tuple(items)
    return replace(obj, **{head: _set(getattr(obj, head), rest, value) if rest else value})


def parse_config_text(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    cfg = base or ScenarioConfig()
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigurationError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            knob = _BY_KEY.get((section, key))
            if knob is None:
                raise ConfigurationError(f"unknown key {key!r} in [{section}]")
            try:
                value = knob.parse(raw)
            except ValueError as exc:
                raise ConfigurationError(f"[{section}] {key}: {exc}") from None
            for path in knob.paths:
                try:
                    cfg = _set(cfg, path, value)
                except (TypeError, ValueError) as exc:
                    raise ConfigurationError(f"[{section}] {key}: {exc}") from None
    return cfg


def parse_config(path: str | Path) -> ScenarioConfig:
    """Read a scenario file; raises FileNotFoundError or ConfigurationError."""
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def serialize_config(cfg: ScenarioConfig) -> str:
    lines = []
    for section in SECTIONS:
        if lines:
            lines.append("")
        lines.append(f"[{section}]")
        for k in _KNOBS:
            if k.section == section:
                lines.append(f"{k.key} = {k.fmt(_get(cfg, k.paths[0]))}")
    return "\n".join(lines) + "\n"


def knobs() -> tuple[Knob, ...]:
    return _KNOBS
