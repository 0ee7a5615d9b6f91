"""Iterative similarity distillation lab."""

from ._isdlab import (
    AnchorBank,
    CheckpointError,
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    EmptyBankError,
    FormatError,
    IsdError,
    LengthError,
    NumericDomainError,
    anchor_distribution,
    byol_loss,
    embed_checkpoint,
    gaussian_mixture,
    isd_kl_loss,
    isd_loss,
    knn_eval,
    load_idx,
    mean_entropy,
    moco_loss,
    parse_config,
    recall_at_k,
    run_cli,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
