from .vocab import (
    BOS,
    COMMAND_WORDS,
    EOS,
    NUMBER_TOKENS,
    PAD,
    PLAN,
    PLANNING_QUESTION,
    SEP,
    SPEED_WORDS,
    STRUCTURAL,
    UNK,
    Vocabulary,
    build_vocabulary,
    tokenize,
)
from .model import (
    CausalBlock,
    GenerateResult,
    LowRankAdapter,
    PlanningToken,
    Reasoner,
    ReasonerConfig,
    ReasonerInput,
    ReasonerOutput,
    SeqLayout,
    answer_targets,
    ce_loss,
)

__all__ = [
    "BOS", "COMMAND_WORDS", "EOS", "NUMBER_TOKENS", "PAD", "PLAN",
    "PLANNING_QUESTION", "SEP", "SPEED_WORDS", "STRUCTURAL", "UNK",
    "Vocabulary", "build_vocabulary", "tokenize",
    "CausalBlock", "GenerateResult", "LowRankAdapter", "PlanningToken",
    "Reasoner", "ReasonerConfig", "ReasonerInput", "ReasonerOutput",
    "SeqLayout", "answer_targets", "ce_loss",
]
