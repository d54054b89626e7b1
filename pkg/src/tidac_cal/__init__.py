"""Twofold time-interleaved DAC simulator and interleave-image calibrator.

The package models a twofold interleaved RZ DAC with duty-cycle, gain and
skew impairments (``spectral``), a six-register digital control surface
(``plant``), an FFT-bin spur meter closing the loop (``meter``), a
simulated-annealing calibrator with a grid-search baseline (``calibrate``),
and batch experiment commands (``experiment``, ``cli``).
"""
from .calibrate import (AnnealParams, AnnealResult, anneal, cooling_schedule,
                        default_grid_strides, grid_search, neighbor,
                        uphill_accept_probability)
from .meter import (CaptureConfig, MeasurementSession, SpurMeasurement,
                    coherent_bin_amplitude, measure_cost, snap_coherent)
from .plant import (PlantModel, RegisterFile, RegisterSpec, default_plant,
                    default_register_map, impairments_from_registers)
from .spectral import (ContourGrid, DacConfig, ImpairmentState, SpectrumSample,
                       ToneSpec, analytic_spur_dbc, image_frequency, level_curve,
                       output_spectrum, spectrum_sub_a, spectrum_sub_b,
                       synthesize_waveform)

__version__ = "0.1.0"

__all__ = [
    "AnnealParams", "AnnealResult", "anneal", "cooling_schedule",
    "default_grid_strides", "grid_search", "neighbor", "uphill_accept_probability",
    "CaptureConfig", "MeasurementSession", "SpurMeasurement",
    "coherent_bin_amplitude", "measure_cost", "snap_coherent",
    "PlantModel", "RegisterFile", "RegisterSpec", "default_plant",
    "default_register_map", "impairments_from_registers",
    "ContourGrid", "DacConfig", "ImpairmentState", "SpectrumSample", "ToneSpec",
    "analytic_spur_dbc", "image_frequency", "level_curve", "output_spectrum",
    "spectrum_sub_a", "spectrum_sub_b", "synthesize_waveform",
    "__version__",
]
