"""Structured Hong-Ou-Mandel interference of modulated CW laser fields.

homsim simulates two mutually phase-randomized laser fields whose
polarization is switched by a fast square-wave modulator, interferes
them on a symmetric beam splitter, produces single-photon time-tag
streams, and analyzes those streams back into the closed-form
correlation patterns (HOM dips, square-wave and triangle-wave
interference structures) they must reproduce.

Units: times in nanoseconds, angular frequencies in rad/ns, time tags in
integer ticks of the configured clock resolution.
"""

from .analytic import (
    G2Curve,
    VisibilityValue,
    coincidence_rate,
    expected_phase_profile,
    g2_cw,
    g2_pol_general,
    g2_pol_ideal,
    g2_triangle,
    read_curve,
    visibility,
    write_curve,
)
from .config import RunSetup, default_setup, load_config
from .errors import AnalysisError, ConfigurationError, DataError, HomsimError
from .mcsim import (
    Channel,
    PhaseTrace,
    TagRecord,
    TagStream,
    apply_detector_imperfections,
    generate_tags,
    output_intensities,
    simulate_phase,
)
from .model import (
    CoherenceSpec,
    EnvelopeSet,
    ExperimentConfig,
    PolarizationAxis,
    SquareWaveSpec,
    envelope,
    eval_square_wave,
    eval_triangle_wave,
    g1,
)
from .tagio import read_tags, write_tags
from .tagproc import (
    CoincidenceList,
    FitResult,
    PhaseHistogram,
    dip_curve,
    find_coincidences,
    fit_tent_dip,
    fit_triangle,
    fit_voigt_dip,
    phase_histogram,
    visibility_scan,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisError",
    "Channel",
    "CoherenceSpec",
    "CoincidenceList",
    "ConfigurationError",
    "DataError",
    "EnvelopeSet",
    "ExperimentConfig",
    "FitResult",
    "G2Curve",
    "HomsimError",
    "PhaseHistogram",
    "PhaseTrace",
    "PolarizationAxis",
    "RunSetup",
    "SquareWaveSpec",
    "TagRecord",
    "TagStream",
    "VisibilityValue",
    "apply_detector_imperfections",
    "coincidence_rate",
    "default_setup",
    "dip_curve",
    "envelope",
    "eval_square_wave",
    "eval_triangle_wave",
    "expected_phase_profile",
    "find_coincidences",
    "fit_tent_dip",
    "fit_triangle",
    "fit_voigt_dip",
    "g1",
    "g2_cw",
    "g2_pol_general",
    "g2_pol_ideal",
    "g2_triangle",
    "generate_tags",
    "load_config",
    "output_intensities",
    "phase_histogram",
    "read_curve",
    "read_tags",
    "simulate_phase",
    "visibility",
    "visibility_scan",
    "write_curve",
    "write_tags",
]
