"""Physical and protocol constants shared across the simulator."""

SPEED_OF_LIGHT = 299_792_458.0  # m/s

PRF_HZ = 64e6
SLOT_PS = 1e12 / PRF_HZ  # 15625 ps between pulse slots

CHANNEL_BANDWIDTH_HZ = 499.2e6
MIN_SAMPLE_RATE = 2 * CHANNEL_BANDWIDTH_HZ

# 32 samples per pulse slot; the sample period (488.28125 ps) is exact in binary floating point.
DEFAULT_SAMPLE_RATE = 2.048e9

DEFAULT_TICK_PS = 15.65

# Documentation only, never enforced.
PSD_LIMIT_DBM_PER_MHZ = -41.3


def sample_period_ps(sample_rate: float) -> float:
    return 1e12 / sample_rate


def slot_samples(sample_rate: float) -> int:
    """Number of samples per pulse slot; the sample rate must be a multiple of the PRF."""
    ratio = sample_rate / PRF_HZ
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9:
        raise ValueError(
            f"sample rate {sample_rate:g} Hz is not an integer multiple of the {PRF_HZ:g} Hz PRF"
        )
    return n
# Per-sample complex noise std for a unit-amplitude path 1 m away. Output of
# campaign.calibrate_noise with its default arguments, rounded; frozen.
DEFAULT_NOISE_SIGMA = 238.0
