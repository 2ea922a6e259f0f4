"""Coupled detector-corrector laboratory for spoof-robust face classification.

The package splits into a small dependency chain:

    autodiff  reverse-mode scalar/tensor engine (float64 graphs)
    coupled   the two-head loss algebra: case table, E labels, L_cs
    theory    grid-enumeration certificates for the separation guarantees
    model     two-head MLP, checkpoints, gradients
    attacks   PGD, patch and composed adaptive objectives
    data      synthetic grating corpus, AFDS container, batch assembly
    metrics   accuracy / AUC / threshold selection with exact oracles
    training  the three training modes, evaluation, adaptive sweep
    expconfig / report / cli   experiment plumbing around all of the above
"""

from .attacks import (
    EPS_8_255,
    EPS_16_255,
    AdaptiveConfig,
    AttackObjective,
    AttackResult,
    PatchConfig,
    PgdConfig,
    adaptive_attack,
    adaptive_attack_batch,
    patch_attack,
    patch_attack_batch,
    pgd_attack,
    pgd_attack_batch,
    within_linf_budget,
)
from .coupled import (
    BCE_EPS,
    CoupledScores,
    DetectionCase,
    ELabel,
    Label,
    LossTerms,
    bce,
    classify_case,
    combined_loss,
    corrector_loss,
    corrector_loss_batch,
    decide,
    e_label,
    expected_score,
    masked_mean,
    spoof_loss,
)
from .data import (
    Dataset,
    Example,
    SyntheticConfig,
    TrainBatch,
    assemble_batch,
    generate_synthetic,
    load_dataset,
    save_dataset,
    write_manifest,
)
from .errors import (
    AdvfasError,
    BadMagicError,
    CheckpointError,
    ConfigError,
    DataFormatError,
    DomainError,
    GraphError,
    NumericError,
    ShapeError,
    TruncatedFileError,
    UnreachableOptimumError,
    UnsupportedVersionError,
)
from .expconfig import ExperimentConfig, config_digest, load_experiment_config, resolve_seed
from .metrics import accuracy, auc_score, select_threshold_scores, threshold_candidates
from .model import (
    BackboneConfig,
    TwoHeadModel,
    forward,
    forward_batch,
    init_model,
    input_grad,
    load_checkpoint,
    parameter_count,
    save_checkpoint,
    score_batch,
)
from .theory import (
    DeltaErrorSpec,
    ViolationReport,
    check_delta_error,
    optimal_corrector,
    verify_delta_separation,
    verify_ideal_separation,
    verify_salvage_gradient,
)
from .training import (
    Adam,
    DecisionMode,
    EvalReport,
    SweepRow,
    TrainConfig,
    TrainHistory,
    TrainMode,
    adaptive_sweep,
    baseline_train,
    evaluate,
    history_to_csv,
    select_threshold,
    sweep_to_csv,
    train,
)

__version__ = "0.1.0"
