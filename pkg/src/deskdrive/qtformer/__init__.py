"""Query-based temporal perception module with FIFO long-term memory."""

from .encoder import (
    GRID_NX,
    GRID_NY,
    GRID_RES,
    GRID_X_MIN,
    GRID_Y_MIN,
    N_CHANNELS,
    N_TOKENS,
    PATCH,
    FeatureTokens,
    GridEncoder,
    encode_observation,
    rasterize,
)
from .memory import MemoryBank, TimestampEmbedding
from .heads import BOX_DIM, NONE_CLASS, OBJECT_CLASSES, PerceptionHeads, PerceptionOutput
from .model import (
    CrossAttentionBlock,
    QTFormer,
    QTFormerConfig,
    QTOutput,
    SelfAttentionBlock,
    reset_memory,
)
from .supervision import (
    PerceptionTarget,
    match_and_supervise,
    match_queries,
    perception_target_from_frame,
)

__all__ = [
    "GRID_NX",
    "GRID_NY",
    "GRID_RES",
    "GRID_X_MIN",
    "GRID_Y_MIN",
    "N_CHANNELS",
    "N_TOKENS",
    "PATCH",
    "FeatureTokens",
    "GridEncoder",
    "encode_observation",
    "rasterize",
    "MemoryBank",
    "TimestampEmbedding",
    "BOX_DIM",
    "NONE_CLASS",
    "OBJECT_CLASSES",
    "PerceptionHeads",
    "PerceptionOutput",
    "CrossAttentionBlock",
    "QTFormer",
    "QTFormerConfig",
    "QTOutput",
    "SelfAttentionBlock",
    "reset_memory",
    "PerceptionTarget",
    "match_and_supervise",
    "match_queries",
    "perception_target_from_frame",
]
