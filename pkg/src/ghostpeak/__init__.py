"""Baseband simulator of HRP UWB two-way ranging under selective-overshadowing attacks."""

from .attack import AttackConfig, craft_attack_packet, reactive_schedule
from .campaign import CampaignResult, ScenarioConfig, is_reduction, run_baseline, run_campaign
from .channel import ChannelModel, MediumEvent, apply_channel, free_space_channel, mix
from .config import parse_config, serialize_config
from .phy import ConfigurationError, HrpPacketSpec, PulseShape, StsConfig, generate_sts_bits, modulate_packet
from .ranging import (
    DeviceClock,
    DeviceConfig,
    PhyConfig,
    RangingExchange,
    ds_twr_distance_full,
    ds_twr_distance_simple,
    predicted_reduction,
    run_exchange,
    ss_twr_distance,
)
from .receiver import Cir, ReceiverConfig, ToaEstimate, compute_cir, detect_toa, estimate_noise_floor, sts_quality
from .trace import TraceRecord, read_trace, write_trace

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "CampaignResult",
    "ChannelModel",
    "Cir",
    "ConfigurationError",
    "DeviceClock",
    "DeviceConfig",
    "HrpPacketSpec",
    "MediumEvent",
    "PhyConfig",
    "PulseShape",
    "RangingExchange",
    "ReceiverConfig",
    "ScenarioConfig",
    "StsConfig",
    "ToaEstimate",
    "TraceRecord",
    "apply_channel",
    "compute_cir",
    "craft_attack_packet",
    "detect_toa",
    "ds_twr_distance_full",
    "ds_twr_distance_simple",
    "estimate_noise_floor",
    "free_space_channel",
    "generate_sts_bits",
    "is_reduction",
    "mix",
    "modulate_packet",
    "parse_config",
    "predicted_reduction",
    "reactive_schedule",
    "read_trace",
    "run_baseline",
    "run_campaign",
    "run_exchange",
    "serialize_config",
    "ss_twr_distance",
    "sts_quality",
    "write_trace",
]
