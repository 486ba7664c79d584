"""Slot-domain correlator.

Every signal in the simulator is a pulse train: one real amplitude per 64 MHz
slot, a start sample and a complex path gain. The correlation of such a train
with a slot-grid template only involves the pulse autocorrelation ``Rpp`` and
the slot-level cross-correlation ``C(j) = sum_k t[k] s[k - j]``::

    CIR[l] = gain * sum_j Rpp(l - start + j*L) * C(j)

which is exactly what :func:`ghostpeak.receiver.compute_cir` returns on the
expanded waveforms, evaluated only over the lags a receiver inspects.

Thermal noise enters the CIR linearly, so its contribution over a lag window is
drawn from its exact joint Gaussian law instead of being synthesized per
sample: ``raw[x] = sum_k t[k] n[x + k*L]`` has covariance
``sigma^2 * A(s)`` between positions ``s`` slots apart in the same residue
class (``A`` the template's aperiodic autocorrelation) and is independent
across residues; the CIR noise is ``raw`` filtered by the pulse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

_SQRT_HALF = math.sqrt(0.5)


@dataclass(frozen=True)
class PulseTrain:
    slots: np.ndarray  # real amplitude per slot
    start: int  # global sample index of the first slot's pulse
    gain: complex = 1.0
    field: str = ""  # packet field the train carries, when known


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    z = rng.standard_normal(shape + (2,)).view(np.complex128)[..., 0]
    z *= _SQRT_HALF
    return z


def xcorr_at(template: np.ndarray, slots: np.ndarray, j: int) -> float:
    """sum_k template[k] * slots[k - j]."""
    k0 = max(0, j)
    k1 = min(len(template), len(slots) + j)
    if k1 <= k0:
        return 0.0
    return float(np.dot(template[k0:k1], slots[k0 - j : k1 - j]))


def shifted_xcorr(template: np.ndarray, slots: np.ndarray, jmin: int, jmax: int) -> np.ndarray:
    """``xcorr_at(template, slots, j)`` for j = jmin..jmax in one pass."""
    k = len(template)
    lo = -jmax  # slot index paired with template[0] at the largest shift
    n = k + jmax - jmin
    if lo >= 0 and lo + n <= len(slots):
        seg = slots[lo : lo + n]
    else:
        seg = np.zeros(n)
        a, b = max(lo, 0), min(lo + n, len(slots))
        if b > a:
            seg[a - lo : b - lo] = slots[a:b]
    return np.correlate(seg, template, mode="valid")[::-1]


class SlotCorrelator:
    def __init__(self, pulse: np.ndarray, per_slot: int) -> None:
        self.pulse = np.asarray(pulse, dtype=np.float64)
        self.P = len(self.pulse)
        self.L = int(per_slot)
        if 2 * self.P - 1 > self.L:
            raise ValueError("pulse autocorrelation must fit inside one slot")
        self._rpp = np.correlate(self.pulse, self.pulse, mode="full")
        self._rpp_slot = np.concatenate([self._rpp, np.zeros(self.L - len(self._rpp))])
        self.energy = float(np.dot(self.pulse, self.pulse))
        self._chol_cache: dict[tuple[int, bytes], np.ndarray] = {}
        self._filters: dict[str, SlotFilter] = {}

    def rpp(self, d: np.ndarray) -> np.ndarray:
        idx = np.asarray(d) + (self.P - 1)
        ok = (idx >= 0) & (idx < len(self._rpp))
        out = np.zeros(idx.shape)
        out[ok] = self._rpp[idx[ok]]
        return out

    # -- correlation -----------------------------------------------------
    def cir(
        self,
        template: np.ndarray,
        trains: Iterable[PulseTrain],
        lag0: int,
        n: int,
        noise_sigma: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        """CIR of the slot template against the superposed trains at lags ``lag0 .. lag0+n-1``."""
        L, P, K = self.L, self.P, len(template)
        out = np.zeros(n, dtype=np.complex128)
        for tr in trains:
            ns = len(tr.slots)
            a = tr.start
            jmin = max(-((-(a - (lag0 + n - 1) - P + 1)) // L), 1 - ns)
            jmax = min((a - lag0 + P - 1) // L, K - 1)
            if jmin > jmax:
                continue
            c = shifted_xcorr(template, tr.slots, jmin, jmax)
            if not c.any():
                continue
            # Rpp spans fewer than L samples, so shift j owns the L lags starting at
            # a - j*L - (P-1) and the blocks laid end to end never overlap.
            blocks = np.multiply.outer(c[::-1], self._rpp_slot).ravel()
            first = a - jmax * L - (P - 1) - lag0
            lo, hi = max(first, 0), min(first + len(blocks), n)
            if hi > lo:
                vals = np.zeros(n)
                vals[lo:hi] = blocks[lo - first : hi - first]
                out += tr.gain * vals
        if noise_sigma > 0:
            out += self.cir_noise(template, n, noise_sigma, rng)
        return out

    def cir_noise(
        self, template: np.ndarray, n: int, sigma: float, rng: np.random.Generator | None
    ) -> np.ndarray:
        if rng is None:
            raise ValueError("a random generator is required when noise_sigma > 0")
        L, P = self.L, self.P
        length = n + P - 1
        s = -(-length // L)
        chol = self._noise_factor(template, s)
        raw = sigma * (chol @ complex_normal(rng, (s, L)))
        return np.correlate(raw.reshape(-1)[:length], self.pulse, mode="valid")

    def _noise_factor(self, template: np.ndarray, s: int) -> np.ndarray:
        # Only short templates (the preamble) recur often enough to be worth caching.
        key = (s, template.tobytes()) if len(template) <= 2048 else None
        chol = self._chol_cache.get(key) if key is not None else None
        if chol is None:
            k = len(template)
            acf = np.array([np.dot(template[: k - i], template[i:]) if i < k else 0.0 for i in range(s)])
            cov = acf[np.abs(np.subtract.outer(np.arange(s), np.arange(s)))]
            try:
                chol = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                w, v = np.linalg.eigh(cov)
                chol = v * np.sqrt(np.clip(w, 0, None))
            if key is not None:
                if len(self._chol_cache) >= 32:
                    self._chol_cache.pop(next(iter(self._chol_cache)))
                self._chol_cache[key] = chol
        return chol

    # -- per-slot detectors ------------------------------------------------
    def slot_filter(self, kind: str) -> "SlotFilter":
        """``matched`` (the pulse) or ``integrate`` (integrate-and-dump over one slot)."""
        f = self._filters.get(kind)
        if f is None:
            if kind == "matched":
                f = SlotFilter(self.pulse, 0, self.pulse)
            elif kind == "integrate":
                f = SlotFilter(np.ones(self.L), -((self.L - self.P) // 2), self.pulse)
            else:
                raise ValueError(f"unknown slot filter {kind!r}")
            self._filters[kind] = f
        return f

    def slot_outputs(
        self,
        trains: Sequence[PulseTrain],
        base: int,
        n_slots: int,
        noise_sigma: float = 0.0,
        rng: np.random.Generator | None = None,
        kind: str = "matched",
    ) -> np.ndarray:
        """Detector outputs for slots starting at samples ``base + k*L``, k < n_slots.

        ``v[k] = sum_u w[u] * r[base + k*L + offset + u]`` for the chosen filter.
        """
        L = self.L
        filt = self.slot_filter(kind)
        out = np.zeros(n_slots, dtype=np.complex128)
        for tr in trains:
            d0 = base + filt.offset - tr.start
            jmin = -((filt.d_min - d0) // -L)
            jmax = (filt.d_max - d0) // L
            ns = len(tr.slots)
            for j in range(jmin, jmax + 1):
                w = filt.response(d0 + j * L)
                if w == 0.0:
                    continue
                lo = max(0, j)
                hi = min(n_slots, ns + j)
                if hi <= lo:
                    continue
                out[lo:hi] += tr.gain * w * tr.slots[lo - j : hi - j]
        if noise_sigma > 0:
            if rng is None:
                raise ValueError("a random generator is required when noise_sigma > 0")
            out += noise_sigma * filt.noise_gain * complex_normal(rng, n_slots)
        return out


class SlotFilter:
    """Per-slot linear detector and its response to a pulse ``d`` samples into its window."""

    def __init__(self, weights: np.ndarray, offset: int, pulse: np.ndarray) -> None:
        self.weights = np.asarray(weights, dtype=np.float64)
        self.offset = int(offset)
        self._table = np.correlate(pulse, self.weights, mode="full")
        self.d_min = -(len(self.weights) - 1)
        self.d_max = len(pulse) - 1
        self.noise_gain = math.sqrt(float(np.dot(self.weights, self.weights)))

    def response(self, d: int) -> float:
        """sum_u weights[u] * pulse[u + d]."""
        if d < self.d_min or d > self.d_max:
            return 0.0
        return float(self._table[d - self.d_min])

    @property
    def peak(self) -> float:
        """Response to a pulse aligned with its slot."""
        return self.response(self.offset)
