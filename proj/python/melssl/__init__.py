"""Mel-domain self-supervised audio pre-training toolkit."""

from melssl._core import (  # noqa: F401
    ConfigError,
    DataError,
    Encoder,
    EncoderConfig,
    MelParams,
    MemoryBank,
    NumericalError,
    accuracy,
    config_hash,
    cosine_value,
    generate_corpus,
    global_stats,
    mean_average_precision,
    mel_spectrogram,
    mixup_augment,
    normalize,
    normalized_mse,
    param_count,
    read_wav,
    resample,
    rrc_augment,
    sample_segment_pair,
)

__all__ = [
    "ConfigError", "DataError", "Encoder", "EncoderConfig", "MelParams",
    "MemoryBank", "NumericalError", "accuracy", "config_hash", "cosine_value",
    "generate_corpus", "global_stats", "mean_average_precision",
    "mel_spectrogram", "mixup_augment", "normalize", "normalized_mse",
    "param_count", "read_wav", "resample", "rrc_augment",
    "sample_segment_pair",
]

__version__ = "0.1.0"
