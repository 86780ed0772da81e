"""Longitudinal brain-volume synthesis with a learned, spatially distributed time-lag map."""

from .data import Sample, StudyRecord, build_sample_pairs, load_manifest
from .estimator import LongitudinalSynthesizer, VolumePreprocessor
from .volume import Volume

__all__ = [
    "LongitudinalSynthesizer",
    "Sample",
    "StudyRecord",
    "Volume",
    "VolumePreprocessor",
    "build_sample_pairs",
    "load_manifest",
]

__version__ = "0.1.0"
