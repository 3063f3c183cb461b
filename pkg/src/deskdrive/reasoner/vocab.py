"""Word-level vocabulary for the toy reasoner.

Tokens are harvested from the shipped question templates and the mock
describer's phrase material, plus discretized numbers and structural symbols,
so every string the annotation pipeline emits tokenizes without UNK.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Iterable, Sequence

from ..core import ContractViolation
from ..annotate import ALL_TEMPLATES, MOCK_PHRASES

PAD, BOS, EOS, SEP, PLAN, UNK = "<pad>", "<bos>", "<eos>", "<sep>", "<plan>", "<unk>"
STRUCTURAL = (PAD, BOS, EOS, SEP, PLAN, UNK)

NUMBER_TOKENS = tuple(f"{k / 2:.1f}" for k in range(101))  # 0.0 .. 50.0 step 0.5

COMMAND_WORDS = ("left", "right", "straight", "lane", "follow", "change")
SPEED_WORDS = ("keep", "accelerate", "decelerate")
SCENARIO_NOUNS = (
    "vehicle", "pedestrian", "light", "static", "wall",
    "red", "green", "yellow", "none", "ego", "lead",
)

PLANNING_QUESTION = "What should the ego vehicle do next?"

_TOKEN_RE = re.compile(r"\d+\.\d+|\d+|[a-z]+|[^\sa-z0-9]")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    def __init__(self, tokens: Sequence[str]):
        self.tokens = tuple(tokens)
        if len(self.tokens) >= 1024:
            raise ContractViolation(f"vocabulary too large: {len(self.tokens)} >= 1024")
        if len(set(self.tokens)) != len(self.tokens):
            raise ContractViolation("duplicate vocabulary tokens")
        if self.tokens.count(PLAN) != 1:
            raise ContractViolation("PLAN must be a single reserved token")
        self._ids = {t: i for i, t in enumerate(self.tokens)}
        for tok in STRUCTURAL:
            if tok not in self._ids:
                raise ContractViolation(f"missing structural token {tok}")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return self._ids[PAD]

    @property
    def bos_id(self) -> int:
        return self._ids[BOS]

    @property
    def eos_id(self) -> int:
        return self._ids[EOS]

    @property
    def sep_id(self) -> int:
        return self._ids[SEP]

    @property
    def plan_id(self) -> int:
        return self._ids[PLAN]

    @property
    def unk_id(self) -> int:
        return self._ids[UNK]

    @property
    def structural_ids(self) -> tuple[int, ...]:
        return tuple(self._ids[t] for t in STRUCTURAL)

    def id_of(self, token: str) -> int:
        return self._ids.get(token, self._ids[UNK])

    def encode(self, text: str) -> list[int]:
        return [self.id_of(t) for t in tokenize(text)]

    def decode(self, ids: Iterable[int], *, keep_structural: bool = False) -> str:
        structural = set(self.structural_ids)
        words = [
            self.tokens[i]
            for i in ids
            if keep_structural or i not in structural
        ]
        return " ".join(words)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text().splitlines()
        return cls([ln for ln in lines if ln != ""])


def build_vocabulary() -> Vocabulary:
    """Assemble the fixed vocabulary; deterministic and order-significant."""
    sources = list(ALL_TEMPLATES) + list(MOCK_PHRASES) + [PLANNING_QUESTION]
    sources += [" ".join(COMMAND_WORDS), " ".join(SPEED_WORDS), " ".join(SCENARIO_NOUNS)]
    words = set()
    for text in sources:
        words.update(tokenize(text))
    words -= set(NUMBER_TOKENS)
    return Vocabulary(STRUCTURAL + NUMBER_TOKENS + tuple(sorted(words)))
