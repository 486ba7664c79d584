"""Monte Carlo campaigns: baseline, success criterion, histograms and CSV output."""

from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .attack import AttackConfig
from .channel import free_space_channel
from .constants import DEFAULT_NOISE_SIGMA
from .phy import ConfigurationError
from .ranging import DeviceConfig, PhyConfig, RangingExchange, run_exchange
from .receiver import ReceiverConfig
from .trace import encode_records, exchange_records, HEADER, MAGIC, VERSION

HISTOGRAM_BIN_M = 0.25
ROLLING_WINDOW = 300
CSV_COLUMNS = ("trial", "status", "distance_m", "reduction_m", "is_reduction", "targets", "seed")
_BASELINE_STREAM = 0xBA5E
CALIBRATION_SIGMAS = tuple(100 * 2 ** (k / 4) for k in range(16))


class ConfigurationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    true_distance: float = 15.0
    n_trials: int = 1000
    initiator: DeviceConfig = DeviceConfig(1)
    responder: DeviceConfig = DeviceConfig(2)
    receiver: ReceiverConfig = ReceiverConfig()  # used by both devices
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    extra_taps: tuple[tuple[float, complex], ...] = ()  # (excess delay ps, gain relative to LoS)
    attack: AttackConfig = AttackConfig(enabled=False)
    phy: PhyConfig = PhyConfig()
    mode: str = "ds-twr"
    master_seed: int = 0
    baseline_trials: int = 100
    workers: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "extra_taps", tuple((float(d), complex(g)) for d, g in self.extra_taps))
        if self.n_trials < 1:
            raise ConfigurationError("n_trials must be >= 1")
        if self.baseline_trials < 10:
            raise ConfigurationError("baseline_trials must be >= 10")
        if not self.true_distance > 0:
            raise ConfigurationError("true_distance must be positive")
        if not self.noise_sigma >= 0:
            raise ConfigurationError("noise_sigma must be >= 0")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigurationError("master_seed must be a 64-bit value")
        if self.mode not in ("ss-twr", "ds-twr"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if any(d < 0 for d, _ in self.extra_taps):
            raise ConfigurationError("extra tap delays must be >= 0")

    def devices(self) -> tuple[DeviceConfig, DeviceConfig]:
        return replace(self.initiator, receiver=self.receiver), replace(self.responder, receiver=self.receiver)

    def channel(self):
        return free_space_channel(self.true_distance, noise_sigma=self.noise_sigma, extra_taps=self.extra_taps)


@dataclass(frozen=True)
class TrialResult:
    trial: int
    seed: int
    status: str
    distance: float  # m, NaN when the exchange failed
    attack_reduction: float  # m, shortening caused by accepted early lags
    advances: tuple[int, ...]  # per ranging packet, samples
    targets: tuple[str, ...]  # packets the attacker actually transmitted on

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class Histogram:
    bin_width: float
    counts: tuple[int, ...]  # bin i covers [i*w, (i+1)*w)

    @property
    def edges(self) -> np.ndarray:
        return np.arange(len(self.counts) + 1) * self.bin_width


@dataclass(frozen=True)
class CampaignResult:
    config: ScenarioConfig
    measurements: tuple[TrialResult, ...]
    baseline_max_neg_dev: float
    success: tuple[bool, ...]
    success_rate: float
    reduction_histogram: Histogram
    rolling_rate: np.ndarray = field(repr=False)
    max_reduction: float
    jamming_rate: float  # trials that ended packet-lost
    failure_rate: float  # trials that ended in any failure

    def reduction(self, m: TrialResult) -> float:
        return self.config.true_distance - m.distance

    @property
    def reductions(self) -> np.ndarray:
        """true - measured for every successful trial (m)."""
        return np.array([self.reduction(m) for m, s in zip(self.measurements, self.success) if s])

    @property
    def attack_reductions(self) -> np.ndarray:
        """Reductions relative to the same trial timed on its strongest peaks (m), successful trials only."""
        return np.array([m.attack_reduction for m, s in zip(self.measurements, self.success) if s])

    @property
    def completed(self) -> int:
        return sum(m.ok for m in self.measurements)


def trial_seed(master_seed: int, trial: int, stream: int | None = None) -> int:
    key = [master_seed, trial] if stream is None else [master_seed, stream, trial]
    hi, lo = np.random.SeedSequence(key).generate_state(2, dtype=np.uint32)
    return int(hi) << 32 | int(lo)


def is_reduction(measured: float, true_distance: float, baseline_max_neg_dev: float) -> bool:
    return measured < true_distance - 2 * baseline_max_neg_dev


def _run_one(cfg: ScenarioConfig, trial: int, seed: int, attack: AttackConfig | None) -> RangingExchange:
    ini, resp = cfg.devices()
    return run_exchange(ini, resp, cfg.channel(), attack=attack, seed=seed, phy=cfg.phy, mode=cfg.mode)


def _summarize(trial: int, seed: int, ex: RangingExchange) -> TrialResult:
    return TrialResult(
        trial=trial,
        seed=seed,
        status=ex.status,
        distance=ex.distance_full if ex.ok else math.nan,
        attack_reduction=ex.attack_reduction if ex.ok else math.nan,
        advances=ex.advances,
        targets=tuple(a.target for a in ex.attacks),
    )


def run_baseline(cfg: ScenarioConfig) -> float:
    """Largest benign shortfall (true - measured), clamped at 0."""
    worst = 0.0
    failed = 0
    for i in range(cfg.baseline_trials):
        ex = _run_one(cfg, i, trial_seed(cfg.master_seed, i, _BASELINE_STREAM), None)
        if not ex.ok:
            failed += 1
            continue
        worst = max(worst, cfg.true_distance - ex.distance_full)
    if failed:
        warnings.warn(f"{failed} of {cfg.baseline_trials} baseline trials failed detection", ConfigurationWarning)
    return worst


def _chunk(args: tuple[ScenarioConfig, Sequence[int], bool]) -> list[tuple[TrialResult, bytes]]:
    cfg, trials, trace = args
    attack = cfg.attack if cfg.attack.active else None
    out = []
    for i in trials:
        seed = trial_seed(cfg.master_seed, i)
        ex = _run_one(cfg, i, seed, attack)
        blob = encode_records(exchange_records(ex, i)) if trace else b""
        out.append((_summarize(i, seed, ex), blob))
    return out


def _run_trials(cfg: ScenarioConfig, trace: bool, chunk_size: int = 250) -> list[tuple[TrialResult, bytes]]:
    chunks = [range(s, min(s + chunk_size, cfg.n_trials)) for s in range(0, cfg.n_trials, chunk_size)]
    jobs = [(cfg, c, trace) for c in chunks]
    if cfg.workers == 1 or len(chunks) == 1:
        parts = map(_chunk, jobs)
        return [r for part in parts for r in part]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        # map() yields in submission order, so results stay ordered by trial index.
        return [r for part in pool.map(_chunk, jobs) for r in part]


def rolling_rate(success: Sequence[bool], window: int = ROLLING_WINDOW) -> np.ndarray:
    x = np.asarray(success, dtype=np.float64)
    if len(x) == 0:
        return np.zeros(0)
    if len(x) < window:
        return np.array([x.mean()])
    c = np.concatenate(([0.0], np.cumsum(x)))
    return (c[window:] - c[:-window]) / window


def histogram(values: Sequence[float], bin_width: float = HISTOGRAM_BIN_M) -> Histogram:
    v = np.asarray(values, dtype=np.float64)
    if len(v) == 0:
        return Histogram(bin_width, ())
    idx = np.floor(np.clip(v, 0, None) / bin_width).astype(int)
    return Histogram(bin_width, tuple(int(c) for c in np.bincount(idx)))


def run_campaign(
    cfg: ScenarioConfig,
    trace_path: str | Path | None = None,
    baseline: float | None = None,
) -> CampaignResult:
    """Baseline, then ``n_trials`` exchanges; deterministic in ``master_seed`` for any worker count."""
    if baseline is None:
        baseline = run_baseline(cfg)
    results = _run_trials(cfg, trace_path is not None)
    if trace_path is not None:
        with open(trace_path, "wb") as fh:
            fh.write(HEADER.pack(MAGIC, VERSION))
            for _, blob in results:
                fh.write(blob)
    measurements = tuple(r for r, _ in results)
    success = tuple(m.ok and is_reduction(m.distance, cfg.true_distance, baseline) for m in measurements)
    completed = [s for m, s in zip(measurements, success) if m.ok]
    reductions = [cfg.true_distance - m.distance for m, s in zip(measurements, success) if s]
    n = len(measurements)
    return CampaignResult(
        config=cfg,
        measurements=measurements,
        baseline_max_neg_dev=baseline,
        success=success,
        success_rate=sum(completed) / len(completed) if completed else 0.0,
        reduction_histogram=histogram(reductions),
        rolling_rate=rolling_rate(completed),
        max_reduction=max(reductions, default=0.0),
        jamming_rate=sum(m.status == "packet-lost" for m in measurements) / n,
        failure_rate=sum(not m.ok for m in measurements) / n,
    )


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(round(float(x), 9))


def csv_text(result: CampaignResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for m, s in zip(result.measurements, result.success):
        w.writerow([
            m.trial,
            m.status,
            _fmt(m.distance),
            _fmt(result.reduction(m)),
            int(s),
            "+".join(m.targets),
            m.seed,
        ])
    return buf.getvalue()


def write_csv(result: CampaignResult, path: str | Path) -> None:
    Path(path).write_text(csv_text(result), encoding="ascii")


@dataclass(frozen=True)
class CalibrationPoint:
    noise_sigma: float
    distance: float
    completion: float
    p99_abs_error: float


def calibrate_noise(
    cfg: ScenarioConfig,
    sigmas: Sequence[float] = CALIBRATION_SIGMAS,
    distances: Sequence[float] = (5.0, 15.0),
    trials: int = 300,
    envelope_m: float = 0.20,
    min_completion: float = 0.99,
    margin_db: float = 3.0,
) -> tuple[float, list[CalibrationPoint]]:
    """Noise level for the benign envelope.

    Runs benign trials at every ``sigma`` and distance, finds the largest
    sigma whose p99 |error| stays within ``envelope_m`` with at least
    ``min_completion`` of exchanges completing at every distance, and backs
    off by ``margin_db``. Returns that value and the measured points.
    """
    points = []
    best = None
    for sigma in sorted(sigmas):
        good = True
        for d in distances:
            c = replace(cfg, true_distance=d, noise_sigma=sigma, attack=AttackConfig(enabled=False))
            errs, done = [], 0
            for i in range(trials):
                ex = _run_one(c, i, trial_seed(cfg.master_seed, i, _BASELINE_STREAM), None)
                if ex.ok:
                    done += 1
                    errs.append(ex.distance_full - d)
            completion = done / trials
            p99 = float(np.percentile(np.abs(errs), 99)) if errs else math.inf
            points.append(CalibrationPoint(sigma, d, completion, p99))
            good &= completion >= min_completion and p99 <= envelope_m
        if not good:
            break
        best = sigma
    if best is None:
        raise ConfigurationError("no noise level meets the benign envelope")
    return best * 10 ** (-margin_db / 20), points
