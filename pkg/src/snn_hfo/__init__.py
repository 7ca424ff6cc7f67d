"""Spiking-network detector for fast-ripple HFOs in ECoG, with outcome prediction."""

from .adm import AdmConfig, Polarity, SpikeTrain, decode, encode, segment_cycles
from .detector import ChannelRateReport, HfoEvent, compute_rates, extract_events
from .dsp import FilterSpec, design_bandpass, estimate_baseline, filter_signal, oversample
from .network import Calibration, Network, NetworkConfig, Population, SpikeRaster, build_network
from .outcome import (CohortMetrics, OutcomePrediction, PatientOutcome, binomial_ci, classify,
                      cohort_metrics, predict)
from .recording import ChannelSignal, MontageMap, Recording, apply_bipolar_montage, load_recording

__version__ = "0.1.0"

__all__ = [
    "AdmConfig", "Polarity", "SpikeTrain", "decode", "encode", "segment_cycles",
    "ChannelRateReport", "HfoEvent", "compute_rates", "extract_events",
    "FilterSpec", "design_bandpass", "estimate_baseline", "filter_signal", "oversample",
    "Calibration", "Network", "NetworkConfig", "Population", "SpikeRaster", "build_network",
    "CohortMetrics", "OutcomePrediction", "PatientOutcome", "binomial_ci", "classify",
    "cohort_metrics", "predict",
    "ChannelSignal", "MontageMap", "Recording", "apply_bipolar_montage", "load_recording",
]
