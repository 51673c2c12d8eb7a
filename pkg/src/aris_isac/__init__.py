"""Joint beamformer / active-RIS / receive-filter design for RIS-assisted ISAC."""

from .bcd import BcdOptions, Mode, initialize, mode_config, optimize, run_baseline
from .channels import Geometry, synth_channels
from .model import (ChannelSet, DesignSolution, InfeasibleError, SystemConfig, check_feasibility,
                    dbm_to_watt, radar_snr, ris_reflect_power, user_sinrs, validate_solution)

__all__ = [
    "BcdOptions", "ChannelSet", "DesignSolution", "Geometry", "InfeasibleError", "Mode",
    "SystemConfig", "check_feasibility", "dbm_to_watt", "initialize", "mode_config", "optimize",
    "radar_snr", "ris_reflect_power", "run_baseline", "synth_channels", "user_sinrs",
    "validate_solution",
]
