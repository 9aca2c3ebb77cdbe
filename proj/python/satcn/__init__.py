# Copyright 2026 The satcn Authors
# License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
"""Multi-stage self-attentive TCN speech enhancement."""

from ._core import (
    DegenerateCoverage,
    FormatError,
    Model,
    ModelConfig,
    TrainConfig,
    TrainingDiverged,
    WavError,
    evaluate,
    frame_count,
    hann_window,
    istft,
    mix_at_snr,
    read_wav,
    receptive_field,
    si_sdr,
    snr_db,
    stft,
    synth_toy_dataset,
    write_wav,
)

__all__ = [
    "DegenerateCoverage",
    "FormatError",
    "Model",
    "ModelConfig",
    "TrainConfig",
    "TrainingDiverged",
    "WavError",
    "evaluate",
    "frame_count",
    "hann_window",
    "istft",
    "mix_at_snr",
    "read_wav",
    "receptive_field",
    "si_sdr",
    "snr_db",
    "stft",
    "synth_toy_dataset",
    "write_wav",
]
