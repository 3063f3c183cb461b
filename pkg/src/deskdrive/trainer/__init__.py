"""Three-stage training, evaluation drivers, configuration, and ablations."""

from .ablate import (
    AXES,
    HISTORY_SWEEP,
    Variant,
    apply_variant,
    axis_variants,
    run_ablation,
    run_matrix,
    run_variant,
    summarize_axis,
    variant_stages,
)
from .checkpoint import (
    FORMAT_VERSION,
    config_from_dict,
    config_to_dict,
    load_checkpoint,
    save_checkpoint,
)
from .config import (
    ConfigError,
    DataSettings,
    EvalSettings,
    PROFILES,
    RunConfig,
    TrainSettings,
    default_parser,
    load_config,
    parse_run_config,
    write_default_config,
)
from .data import CLIP_SEED_STRIDE, TrainingData, build_dataset, gen_clips
from .evaluate import (
    ClosedLoopReport,
    EpisodeRow,
    OpenLoopReport,
    eval_closed_loop,
    eval_open_loop,
    frame_collides,
    write_episode_csv,
    write_summary_json,
)
from .loop import StageReport, TrainAbort, TrainReport, frame_losses, run_stage, train
from .plots import (
    metrics_table,
    plot_abilities,
    plot_trajectories,
    plot_training_curves,
    write_metrics_table,
)
from .stages import (
    COMPONENTS,
    PLANNER_LOSSES,
    QT_LOSSES,
    STAGE_NAMES,
    StageConfig,
    apply_freeze,
    component_parameters,
    default_stages,
    drop_losses,
    stage_preset,
    total_loss,
)

__all__ = [
    "AXES", "CLIP_SEED_STRIDE", "COMPONENTS", "ClosedLoopReport", "ConfigError",
    "DataSettings", "EpisodeRow", "EvalSettings", "FORMAT_VERSION",
    "HISTORY_SWEEP", "OpenLoopReport", "PLANNER_LOSSES", "PROFILES", "QT_LOSSES",
    "RunConfig", "STAGE_NAMES", "StageConfig", "StageReport", "TrainAbort",
    "TrainReport", "TrainSettings", "TrainingData", "Variant", "apply_freeze",
    "apply_variant", "axis_variants", "build_dataset", "component_parameters",
    "config_from_dict", "config_to_dict", "default_parser", "default_stages",
    "drop_losses", "eval_closed_loop", "eval_open_loop", "frame_collides",
    "frame_losses", "gen_clips", "load_checkpoint", "load_config",
    "metrics_table", "parse_run_config", "plot_abilities", "plot_trajectories",
    "plot_training_curves", "run_ablation", "run_matrix", "run_stage",
    "run_variant", "save_checkpoint", "stage_preset", "summarize_axis",
    "total_loss", "train", "variant_stages", "write_default_config",
    "write_episode_csv", "write_metrics_table", "write_summary_json",
]
