"""Dual-spectrogram audio anti-spoofing toolkit (Python bindings)."""

from ._s2pec import (
    ConfigError,
    ContractError,
    InputError,
    Model,
    TrainingAbort,
    apply_attention,
    combine_attention,
    compute_eer,
    compute_min_tdcf,
    default_class_weights,
    lfcc,
    load_waveform,
    parse_protocol,
    partition_stats,
    per_attack_breakdown,
    recon_loss,
    run_cli,
    sinc_frontend,
    synth_toy_dataset,
    total_loss,
    tsf_pool,
    wbce,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "InputError",
    "Model",
    "TrainingAbort",
    "apply_attention",
    "combine_attention",
    "compute_eer",
    "compute_min_tdcf",
    "default_class_weights",
    "lfcc",
    "load_waveform",
    "parse_protocol",
    "partition_stats",
    "per_attack_breakdown",
    "recon_loss",
    "run_cli",
    "sinc_frontend",
    "synth_toy_dataset",
    "total_loss",
    "tsf_pool",
    "wbce",
]
