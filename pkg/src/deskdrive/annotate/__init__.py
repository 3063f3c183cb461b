from .critical import (
    CriticalObject,
    EGO_RADIUS,
    HALF_LANE,
    LANE_SPACING,
    REASONS,
    TTC_HORIZON,
    VRU_RADIUS,
    min_clearance,
    select_critical,
)
from .describe import (
    DescribeError,
    Describer,
    Description,
    MockDescriber,
    MOCK_PHRASES,
    RemoteDescriber,
    describe,
    parse_description,
    quantize,
)
from .prompts import (
    FORMAT_EXAMPLE,
    FORMAT_NO_CRITICALS,
    PROMPT_CRITICAL,
    PROMPT_DECISION,
    PROMPT_SCENE,
    build_prompts,
)
from .templates import (
    ACTION_TEMPLATES,
    ALL_TEMPLATES,
    CRITICAL_TEMPLATES,
    HISTORY_TEMPLATES,
    QUESTION_TEMPLATES,
    SCENE_TEMPLATES,
    VQA_TYPES,
)
from .vqa import (
    AnnotationResult,
    FrameSummary,
    HISTORY_DEPTH,
    HistoryQueue,
    VQAPair,
    annotate_clips,
    emit_vqa,
    frame_meta,
    history_answer,
    load_vqa_jsonl,
    pick_template,
    summarize,
    update_history,
    vqa_jsonl_lines,
    write_vqa_jsonl,
)

__all__ = [
    "CriticalObject", "EGO_RADIUS", "HALF_LANE", "LANE_SPACING", "REASONS",
    "TTC_HORIZON", "VRU_RADIUS", "min_clearance", "select_critical",
    "DescribeError", "Describer", "Description", "MockDescriber", "MOCK_PHRASES",
    "RemoteDescriber", "describe", "parse_description", "quantize",
    "FORMAT_EXAMPLE", "FORMAT_NO_CRITICALS", "PROMPT_CRITICAL", "PROMPT_DECISION",
    "PROMPT_SCENE", "build_prompts",
    "ACTION_TEMPLATES", "ALL_TEMPLATES", "CRITICAL_TEMPLATES", "HISTORY_TEMPLATES",
    "QUESTION_TEMPLATES", "SCENE_TEMPLATES", "VQA_TYPES",
    "AnnotationResult", "FrameSummary", "HISTORY_DEPTH", "HistoryQueue", "VQAPair",
    "annotate_clips", "emit_vqa", "frame_meta", "history_answer", "load_vqa_jsonl",
    "pick_template", "summarize", "update_history", "vqa_jsonl_lines", "write_vqa_jsonl",
]
