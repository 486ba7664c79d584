"""HRP packet synthesis: pulse shapes, STS generation and field-by-field modulation.

Packets are described on the 64 MHz slot grid first (one real amplitude per slot)
and only expanded to baseband samples on demand. The slot description is what the
fast correlator in :mod:`ghostpeak.correlator` consumes; :func:`modulate_packet`
expands it to a :class:`BasebandSignal` for the sample-level path.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Literal, Sequence

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .constants import DEFAULT_SAMPLE_RATE, MIN_SAMPLE_RATE, PRF_HZ, slot_samples


class ConfigurationError(ValueError):
    """Raised for invalid packet, pulse or STS parameters."""


PulseKind = Literal["root-raised-cosine", "gaussian-monopulse", "rectangular"]
Field = Literal["preamble", "sfd", "sts", "data"]

# 8-symbol SFD of 802.15.4z, used here at pulse level.
DEFAULT_SFD: tuple[int, ...] = (-1, -1, -1, 1, -1, -1, 1, -1)
DEFAULT_PREAMBLE_SEED = 0x15A4
DEFAULT_PREAMBLE_LENGTH = 127
DEFAULT_PREAMBLE_REPETITIONS = 64
DEFAULT_STS_GAP_SLOTS = 64  # ~1 us of silence either side of the STS
DEFAULT_STS_BITS = 4096

_MASK32 = (1 << 32) - 1
_MASK96 = (1 << 96) - 1
_MASK128 = (1 << 128) - 1


@dataclass(frozen=True)
class PulseShape:
    kind: PulseKind = "root-raised-cosine"
    duration: float = 2e-9
    samples_per_pulse: int = 16
    rolloff: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("root-raised-cosine", "gaussian-monopulse", "rectangular"):
            raise ConfigurationError(f"unknown pulse kind {self.kind!r}")
        if not self.duration > 0:
            raise ConfigurationError("pulse duration must be positive")
        if self.samples_per_pulse < 2:
            raise ConfigurationError("samples_per_pulse must be >= 2")
        if not 0 <= self.rolloff <= 1:
            raise ConfigurationError("rolloff must be in [0, 1]")

    def samples(self, sample_rate: float = DEFAULT_SAMPLE_RATE) -> np.ndarray:
        """Real pulse samples with sum(p**2) / sample_rate == 1."""
        return _pulse_samples(self, float(sample_rate)).copy()


@lru_cache(maxsize=32)
def _pulse_samples(shape: PulseShape, sample_rate: float) -> np.ndarray:
    n = shape.samples_per_pulse
    t = (np.arange(n) - (n - 1) / 2) / sample_rate
    if shape.kind == "rectangular":
        p = np.ones(n)
    elif shape.kind == "gaussian-monopulse":
        tau = shape.duration / 4
        p = -(t / tau) * np.exp(-0.5 * (t / tau) ** 2)
    else:
        p = _rrc(t, shape.duration, shape.rolloff)
    energy = np.sum(p**2) / sample_rate
    if energy <= 0:
        raise ConfigurationError("pulse has zero energy at this sample rate")
    p = p / math.sqrt(energy)
    p.setflags(write=False)
    return p


def _rrc(t: np.ndarray, period: float, beta: float) -> np.ndarray:
    x = t / period
    out = np.empty_like(x)
    for i, xi in enumerate(x):
        if abs(xi) < 1e-12:
            out[i] = 1 - beta + 4 * beta / math.pi
        elif beta > 0 and abs(abs(xi) - 1 / (4 * beta)) < 1e-9:
            out[i] = beta / math.sqrt(2) * (
                (1 + 2 / math.pi) * math.sin(math.pi / (4 * beta))
                + (1 - 2 / math.pi) * math.cos(math.pi / (4 * beta))
            )
        else:
            num = math.sin(math.pi * xi * (1 - beta)) + 4 * beta * xi * math.cos(
                math.pi * xi * (1 + beta)
            )
            out[i] = num / (math.pi * xi * (1 - (4 * beta * xi) ** 2))
    return out


@dataclass(frozen=True)
class StsConfig:
    key: int
    upper96: int = 0
    counter: int = 0
    length_bits: int = DEFAULT_STS_BITS

    def __post_init__(self) -> None:
        if not 0 <= self.key <= _MASK128:
            raise ConfigurationError("STS key must be a 128-bit value")
        if not 0 <= self.upper96 <= _MASK96:
            raise ConfigurationError("upper96 must be a 96-bit value")
        if not 0 <= self.counter <= _MASK32:
            raise ConfigurationError("STS V counter must be a 32-bit value")
        if self.length_bits <= 0 or self.length_bits % 128:
            raise ConfigurationError("STS length must be a positive multiple of 128 bits")

    def next_packet(self, step: int = 1) -> "StsConfig":
        return StsConfig(self.key, self.upper96, (self.counter + step) & _MASK32, self.length_bits)


def generate_sts_bits(cfg: StsConfig) -> np.ndarray:
    """STS bits from AES-128 in counter mode.

    Block ``i`` of plaintext is ``upper96 || (counter + i) mod 2**32`` (big endian);
    the keystream bytes are unpacked MSB first.
    """
    if cfg.length_bits <= 0 or cfg.length_bits % 128:
        raise ConfigurationError("STS length must be a positive multiple of 128 bits")
    return _sts_bits_cached(cfg).copy()


@lru_cache(maxsize=8)
def _ecb_encryptor(key: int):
    # ECB keeps no state between blocks, so one context serves every packet under a key.
    return Cipher(algorithms.AES(key.to_bytes(16, "big")), modes.ECB()).encryptor()


@lru_cache(maxsize=256)
def _sts_bits_cached(cfg: StsConfig) -> np.ndarray:
    n_blocks = cfg.length_bits // 128
    blocks = np.empty((n_blocks, 4), dtype=">u4")
    blocks[:, :3] = [(cfg.upper96 >> s) & _MASK32 for s in (64, 32, 0)]
    blocks[:, 3] = (cfg.counter + np.arange(n_blocks, dtype=np.uint64)) & _MASK32
    plaintext = blocks.tobytes()
    stream = _ecb_encryptor(cfg.key).update(plaintext)
    bits = np.unpackbits(np.frombuffer(stream, dtype=np.uint8))
    bits.setflags(write=False)
    return bits


@lru_cache(maxsize=16)
def preamble_code(seed: int = DEFAULT_PREAMBLE_SEED, length: int = DEFAULT_PREAMBLE_LENGTH) -> tuple[int, ...]:
    """Stand-in ternary preamble code; deployed codes are not modeled."""
    if length < 1:
        raise ConfigurationError("preamble code length must be >= 1")
    rng = np.random.default_rng(seed)
    code = rng.choice(np.array([-1, 0, 1]), size=length, p=[0.35, 0.3, 0.35])
    if not np.any(code):
        code[0] = 1
    return tuple(int(c) for c in code)


@dataclass(frozen=True)
class FieldGains:
    preamble: float = 1.0
    sfd: float = 1.0
    sts: float = 1.0
    data: float = 1.0

    def __post_init__(self) -> None:
        for name in ("preamble", "sfd", "sts", "data"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ConfigurationError(f"{name} gain must be finite and >= 0")

    def scaled(self, factor: float) -> "FieldGains":
        return FieldGains(self.preamble * factor, self.sfd * factor, self.sts * factor, self.data * factor)


@dataclass(frozen=True)
class HrpPacketSpec:
    """One HRP packet: preamble, SFD, STS and data in on-air order.

    ``sts`` is either an :class:`StsConfig` (bits derived from the session key)
    or an explicit bit sequence (stored as ``bytes`` of 0/1 values), which is
    how the attacker's random STS and short test sequences are expressed.
    """

    preamble_code: tuple[int, ...] = field(default_factory=preamble_code)
    preamble_repetitions: int = DEFAULT_PREAMBLE_REPETITIONS
    sfd: tuple[int, ...] = DEFAULT_SFD
    sts: StsConfig | bytes | None = None
    data_bits: tuple[int, ...] | None = None
    gains: FieldGains = FieldGains()
    sts_gap_slots: int = DEFAULT_STS_GAP_SLOTS
    prf: float = PRF_HZ

    def __post_init__(self) -> None:
        if self.prf != PRF_HZ:
            raise ConfigurationError("HRP PRF is fixed at 64 MHz")
        for name, seq in (("preamble code", self.preamble_code), ("SFD", self.sfd)):
            if not set(seq) <= {-1, 0, 1}:
                raise ConfigurationError(f"{name} must be ternary")
        if self.preamble_repetitions < 0 or self.sts_gap_slots < 0:
            raise ConfigurationError("repetitions and gap length must be >= 0")
        if isinstance(self.sts, (tuple, list)):
            object.__setattr__(self, "sts", bytes(self.sts) if all(b in (0, 1) for b in self.sts) else None)
            if self.sts is None:
                raise ConfigurationError("explicit STS must be a bit sequence")
        elif isinstance(self.sts, bytes) and self.sts.translate(None, b"\x00\x01"):
            raise ConfigurationError("explicit STS must be a bit sequence")
        if self.data_bits is not None and not set(self.data_bits) <= {0, 1}:
            raise ConfigurationError("data must be a bit sequence")

    def sts_bits(self) -> np.ndarray | None:
        if self.sts is None:
            return None
        if isinstance(self.sts, StsConfig):
            return _sts_bits_cached(self.sts)
        return np.frombuffer(self.sts, dtype=np.uint8)

    @cached_property
    def layout(self) -> "PacketLayout":
        return packet_layout(self)

    @cached_property
    def _symbols(self) -> dict[str, np.ndarray]:
        return {}

    def symbols(self, name: Field) -> np.ndarray:
        """Read-only unit-gain slot amplitudes of one field, computed once per packet."""
        out = self._symbols.get(name)
        if out is None:
            out = field_slots(self, name) if name != "preamble" else _preamble_slots(
                self.preamble_code, self.preamble_repetitions
            )
            out.setflags(write=False)
            self._symbols[name] = out
        return out


def spec_digest(spec: HrpPacketSpec) -> int:
    """64-bit fingerprint of everything that shapes a packet on air."""
    h = hashlib.blake2b(digest_size=8)
    h.update(np.asarray(spec.preamble_code, dtype=np.int8).tobytes())
    h.update(struct.pack("<II", spec.preamble_repetitions, spec.sts_gap_slots))
    h.update(np.asarray(spec.sfd, dtype=np.int8).tobytes())
    if isinstance(spec.sts, StsConfig):
        c = spec.sts
        h.update(b"K" + c.key.to_bytes(16, "little") + c.upper96.to_bytes(12, "little"))
        h.update(struct.pack("<II", c.counter, c.length_bits))
    elif spec.sts is not None:
        h.update(b"B" + spec.sts)
    h.update(b"D" + bytes(spec.data_bits or ()))
    g = spec.gains
    h.update(struct.pack("<4d", g.preamble, g.sfd, g.sts, g.data))
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class PacketLayout:
    """Start slot and length of every field; absent fields have length 0."""

    preamble: tuple[int, int]
    sfd: tuple[int, int]
    sts: tuple[int, int]
    data: tuple[int, int]
    total_slots: int

    def span(self, name: Field) -> tuple[int, int]:
        return getattr(self, name)


def packet_layout(spec: HrpPacketSpec) -> PacketLayout:
    n_pre = spec.preamble_repetitions * len(spec.preamble_code)
    n_sfd = len(spec.sfd)
    if spec.sts is None:
        n_sts = 0
    elif isinstance(spec.sts, StsConfig):
        n_sts = spec.sts.length_bits
    else:
        n_sts = len(spec.sts)
    n_data = len(spec.data_bits) if spec.data_bits is not None else 0
    pos = 0
    pre = (pos, n_pre)
    pos += n_pre
    sfd = (pos, n_sfd)
    pos += n_sfd
    if n_sts and pos:
        pos += spec.sts_gap_slots
    sts = (pos, n_sts)
    pos += n_sts
    if n_sts and n_data:
        pos += spec.sts_gap_slots
    data = (pos, n_data)
    pos += n_data
    return PacketLayout(pre, sfd, sts, data, pos)


def bpsk(bits: Sequence[int] | np.ndarray) -> np.ndarray:
    """0 -> +1, 1 -> -1."""
    return 1.0 - 2.0 * np.asarray(bits, dtype=np.float64)


def field_slots(spec: HrpPacketSpec, name: Field) -> np.ndarray:
    """Unit-gain slot amplitudes of a single field."""
    if name == "preamble":
        return _preamble_slots(spec.preamble_code, spec.preamble_repetitions).copy()
    if name == "sfd":
        return np.asarray(spec.sfd, dtype=np.float64)
    if name == "sts":
        bits = spec.sts_bits()
        if bits is None:
            raise ConfigurationError("packet has no STS")
        return bpsk(bits)
    if name == "data":
        return bpsk(spec.data_bits or ())
    raise ConfigurationError(f"unknown field {name!r}")


@lru_cache(maxsize=16)
def _preamble_slots(code: tuple[int, ...], reps: int) -> np.ndarray:
    out = np.tile(np.asarray(code, dtype=np.float64), reps)
    out.setflags(write=False)
    return out


def slot_values(spec: HrpPacketSpec) -> np.ndarray:
    """Per-slot pulse amplitudes of the whole packet, gains applied."""
    lay = spec.layout
    out = np.zeros(lay.total_slots)
    for name in ("preamble", "sfd", "sts", "data"):
        start, n = lay.span(name)
        if n:
            out[start : start + n] = getattr(spec.gains, name) * field_slots(spec, name)
    return out


@dataclass
class BasebandSignal:
    samples: np.ndarray
    sample_rate: float = DEFAULT_SAMPLE_RATE
    t0: float = 0.0  # ps

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.sample_rate < MIN_SAMPLE_RATE:
            raise ConfigurationError(
                f"sample rate {self.sample_rate:g} Hz below {MIN_SAMPLE_RATE:g} Hz"
            )

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_ps(self) -> float:
        return len(self.samples) * 1e12 / self.sample_rate


def expand_slots(values: np.ndarray, pulse: np.ndarray, per_slot: int) -> np.ndarray:
    """Place one pulse per slot, scaled by the slot amplitude."""
    if len(pulse) > per_slot:
        raise ConfigurationError("pulse longer than a slot")
    grid = np.zeros((len(values), per_slot), dtype=np.complex128)
    grid[:, : len(pulse)] = np.outer(values, pulse)
    return grid.reshape(-1)


def modulate_packet(
    spec: HrpPacketSpec,
    shape: PulseShape = PulseShape(),
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    t0: float = 0.0,
) -> BasebandSignal:
    per_slot = slot_samples(sample_rate)
    samples = expand_slots(slot_values(spec), _pulse_samples(shape, float(sample_rate)), per_slot)
    return BasebandSignal(samples, sample_rate, t0)


def local_template(
    spec: HrpPacketSpec,
    name: Field,
    shape: PulseShape = PulseShape(),
    sample_rate: float = DEFAULT_SAMPLE_RATE,
) -> BasebandSignal:
    """Unit-gain expected waveform of one field (the correlator's reference)."""
    if name not in ("preamble", "sts"):
        raise ConfigurationError("templates exist for the preamble and STS only")
    per_slot = slot_samples(sample_rate)
    values = field_slots(spec, name)
    return BasebandSignal(
        expand_slots(values, _pulse_samples(shape, float(sample_rate)), per_slot), sample_rate, 0.0
    )
