"""Reactive selective-overshadowing attacker.

The attacker listens for the first packet of an exchange with a stock
preamble detector, waits a fixed delay per targeted packet and transmits a
standard-looking packet: weak preamble and SFD, strong STS of random bits, no
data. It never sees the session key; only on-air timing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .channel import ChannelModel
from .phy import ConfigurationError, FieldGains, HrpPacketSpec

Target = Literal["packet2", "packet3"]
TARGETS: tuple[Target, ...] = ("packet2", "packet3")

DEFAULT_REPLY_PS = 1e9  # 1 ms


@dataclass(frozen=True)
class AttackConfig:
    """Attack knobs. Field gains are amplitudes relative to the legitimate
    signal as received by the victim, so one setting behaves alike at any
    victim distance.

    ``delay_after_rx`` holds the trigger-to-emission delay for packet 2 and
    packet 3 (ps). ``attacker_channels`` optionally fixes the channel from the
    attacker to each victim (initiator for packet 2, responder for packet 3);
    by default the attacker sits ``attacker_distance_m`` from its victim in
    free space.
    """

    enabled: bool = True
    targets: tuple[Target, ...] = ("packet2",)
    delay_after_rx: tuple[float, float] = (DEFAULT_REPLY_PS, 2 * DEFAULT_REPLY_PS)
    timing_jitter_sigma: float = 50e3  # ps
    preamble_gain: float = 0.25
    sfd_gain: float = 0.25
    sts_gain: float = 4.0
    sts_seed: int = 0x6A05_7BEA_C0DE_0001
    attacker_distance_m: float = 0.3
    attacker_channels: tuple[ChannelModel, ChannelModel] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "targets", tuple(self.targets))
        for t in self.targets:
            if t not in TARGETS:
                raise ConfigurationError(f"unknown attack target {t!r}")
        if len(set(self.targets)) != len(self.targets):
            raise ConfigurationError("duplicate attack target")
        for name in ("preamble_gain", "sfd_gain", "sts_gain", "timing_jitter_sigma"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ConfigurationError(f"{name} must be finite and >= 0")
        if len(self.delay_after_rx) != 2 or min(self.delay_after_rx) < 0:
            raise ConfigurationError("delay_after_rx needs two non-negative delays")
        if not 0 <= self.sts_seed < 2**64:
            raise ConfigurationError("sts_seed must be a 64-bit value")
        if self.attacker_distance_m <= 0:
            raise ConfigurationError("attacker_distance_m must be positive")
        if self.attacker_channels is not None and len(self.attacker_channels) != 2:
            raise ConfigurationError("attacker_channels needs one channel per victim")

    @property
    def active(self) -> bool:
        return self.enabled and bool(self.targets)

    def delay(self, target: Target) -> float:
        return self.delay_after_rx[TARGETS.index(target)]

    def channel_to_victim(self, target: Target) -> ChannelModel | None:
        if self.attacker_channels is None:
            return None
        return self.attacker_channels[TARGETS.index(target)]


def attacker_sts_bits(cfg: AttackConfig, n_bits: int, nonce: int = 0) -> np.ndarray:
    """Fresh random STS bits; depends on ``sts_seed`` and a per-emission nonce only."""
    rng = np.random.default_rng([cfg.sts_seed, nonce])
    return rng.integers(0, 2, n_bits, dtype=np.uint8)


def craft_attack_packet(cfg: AttackConfig, victim_spec: HrpPacketSpec, nonce: int = 0) -> HrpPacketSpec:
    """Victim's public preamble and SFD at low gain, a random STS at high gain, no data."""
    if victim_spec.sts is None:
        raise ConfigurationError("victim packet has no STS to overshadow")
    n = victim_spec.layout.sts[1]
    bits = attacker_sts_bits(cfg, n, nonce)
    return HrpPacketSpec(
        preamble_code=victim_spec.preamble_code,
        preamble_repetitions=victim_spec.preamble_repetitions,
        sfd=victim_spec.sfd,
        sts=bits.tobytes(),
        data_bits=None,
        gains=FieldGains(cfg.preamble_gain, cfg.sfd_gain, cfg.sts_gain, 0.0),
        sts_gap_slots=victim_spec.sts_gap_slots,
    )


@dataclass(frozen=True)
class Emission:
    target: Target
    emit_time: float  # ps, when the attack packet's STS starts leaving the antenna
    packet: HrpPacketSpec


def reactive_schedule(
    trigger_toa: float | None,
    cfg: AttackConfig,
    victim_spec: HrpPacketSpec,
    rng: np.random.Generator,
    nonce: int = 0,
) -> list[Emission]:
    """One emission per target at trigger + delay + Gaussian jitter.

    ``trigger_toa`` is the attacker's own estimate of when the first packet's
    STS began; ``None`` means the trigger was missed and nothing is sent.
    """
    if trigger_toa is None or not cfg.active:
        return []
    out = []
    for i, target in enumerate(cfg.targets):
        jitter = rng.normal(0.0, cfg.timing_jitter_sigma) if cfg.timing_jitter_sigma > 0 else 0.0
        packet = craft_attack_packet(cfg, victim_spec, nonce=nonce * 2 + i)
        out.append(Emission(target, trigger_toa + cfg.delay(target) + jitter, packet))
    return out


def targets_mask(targets: Sequence[str]) -> int:
    return sum(1 << TARGETS.index(t) for t in targets)


def mask_targets(mask: int) -> tuple[Target, ...]:
    return tuple(t for i, t in enumerate(TARGETS) if mask >> i & 1)
