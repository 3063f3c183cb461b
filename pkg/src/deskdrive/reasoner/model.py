"""Toy causal reasoner: continuous scene/history prefix, word-level QA,
and a planning-token readout.

Sequence layout is [x_s; x_h; BOS; x_q; SEP; x_a; PLAN] for planning QA and
the same without the trailing PLAN for pure VQA. Question and answer blocks
are fixed-width per batch with PAD filler; PAD positions are excluded from
attention and from the loss mask.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..core import ContractViolation
from .vocab import Vocabulary


@dataclass
class ReasonerConfig:
    n_layers: int = 4
    d_model: int = 64
    n_heads: int = 4
    context: int = 512
    ffn_mult: int = 4
    adapter_rank: int = 4
    max_answer_tokens: int = 64


@dataclass(frozen=True)
class PlanningToken:
    """Final hidden state at the PLAN position; conditions the planner."""

    embedding: torch.Tensor  # (B, C)

    def __post_init__(self):
        if not torch.isfinite(self.embedding).all():
            raise ContractViolation("planning token must be finite")


@dataclass
class ReasonerInput:
    scene_tokens: torch.Tensor  # (B, N_s, C) continuous
    history_tokens: torch.Tensor  # (B, N_h, C) continuous
    question_ids: torch.Tensor  # (B, Lq) long, PAD-padded
    answer_ids: Optional[torch.Tensor] = None  # (B, La) long, PAD-padded
    include_plan: bool = False


@dataclass(frozen=True)
class SeqLayout:
    prefix: int  # N_s + N_h
    bos_pos: int
    question_start: int
    sep_pos: int
    answer_start: int
    answer_width: int
    plan_pos: Optional[int]
    total: int


@dataclass
class ReasonerOutput:
    logits: torch.Tensor  # (B, L, |V|)
    planning_token: Optional[PlanningToken]
    layout: SeqLayout


@dataclass
class GenerateResult:
    answer_ids: list[list[int]]
    planning_token: Optional[PlanningToken]
    truncated: list[bool]


class LowRankAdapter(nn.Module):
    """Rank-r additive delta; up-projection starts at zero so the adapted
    block initially equals the base block."""

    def __init__(self, dim: int, rank: int):
        super().__init__()
        self.down = nn.Linear(dim, rank, bias=False)
        self.up = nn.Linear(rank, dim, bias=False)
        nn.init.normal_(self.down.weight, std=0.02)
        nn.init.zeros_(self.up.weight)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.up(self.down(x))


class CausalBlock(nn.Module):
    def __init__(self, cfg: ReasonerConfig):
        super().__init__()
        d = cfg.d_model
        self.norm1 = nn.LayerNorm(d)
        self.attn = nn.MultiheadAttention(d, cfg.n_heads, batch_first=True)
        self.adapter_attn = LowRankAdapter(d, cfg.adapter_rank)
        self.norm2 = nn.LayerNorm(d)
        self.ffn = nn.Sequential(
            nn.Linear(d, cfg.ffn_mult * d), nn.GELU(), nn.Linear(cfg.ffn_mult * d, d)
        )
        self.adapter_ffn = LowRankAdapter(d, cfg.adapter_rank)

    def forward(
        self, x: torch.Tensor, attn_mask: torch.Tensor, key_padding_mask: Optional[torch.Tensor]
    ) -> torch.Tensor:
        h = self.norm1(x)
        a, _ = self.attn(
            h, h, h, attn_mask=attn_mask, key_padding_mask=key_padding_mask, need_weights=False
        )
        x = x + a + self.adapter_attn(h)
        h2 = self.norm2(x)
        return x + self.ffn(h2) + self.adapter_ffn(h2)


class Reasoner(nn.Module):
    def __init__(self, vocab: Vocabulary, cfg: Optional[ReasonerConfig] = None):
        super().__init__()
        self.cfg = cfg if cfg is not None else ReasonerConfig()
        self.vocab = vocab
        d = self.cfg.d_model
        self.token_embed = nn.Embedding(len(vocab), d)
        self.pos_embed = nn.Embedding(self.cfg.context, d)
        self.input_proj = nn.Linear(d, d)  # continuous scene/history tokens
        self.blocks = nn.ModuleList(CausalBlock(self.cfg) for _ in range(self.cfg.n_layers))
        self.norm_out = nn.LayerNorm(d)
        self.lm_head = nn.Linear(d, len(vocab))

    def adapter_parameters(self):
        for name, p in self.named_parameters():
            if ".adapter_" in name:
                yield p

    def base_parameters(self):
        for name, p in self.named_parameters():
            if ".adapter_" not in name:
                yield p

    def _layout(self, inp: ReasonerInput) -> SeqLayout:
        b, n_s, _ = inp.scene_tokens.shape
        n_h = inp.history_tokens.shape[1]
        lq = inp.question_ids.shape[1]
        la = 0 if inp.answer_ids is None else inp.answer_ids.shape[1]
        prefix = n_s + n_h
        sep_pos = prefix + 1 + lq
        plan_pos = sep_pos + 1 + la if inp.include_plan else None
        total = sep_pos + 1 + la + (1 if inp.include_plan else 0)
        if total > self.cfg.context:
            raise ContractViolation(
                f"sequence length {total} exceeds context window {self.cfg.context}"
            )
        return SeqLayout(
            prefix=prefix,
            bos_pos=prefix,
            question_start=prefix + 1,
            sep_pos=sep_pos,
            answer_start=sep_pos + 1,
            answer_width=la,
            plan_pos=plan_pos,
            total=total,
        )

    def _assemble(
        self, inp: ReasonerInput, layout: SeqLayout
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Embedded sequence (B, L, C) and key padding mask (B, L)."""
        b = inp.scene_tokens.shape[0]
        dev = inp.scene_tokens.device
        dtype = inp.scene_tokens.dtype
        pad_id = self.vocab.pad_id

        parts = [self.input_proj(inp.scene_tokens), self.input_proj(inp.history_tokens)]
        pad_mask = [torch.zeros(b, layout.prefix, dtype=torch.bool, device=dev)]

        def token_block(ids: torch.Tensor):
            parts.append(self.token_embed(ids).to(dtype))
            pad_mask.append(ids == pad_id)

        bos = torch.full((b, 1), self.vocab.bos_id, dtype=torch.long, device=dev)
        token_block(bos)
        token_block(inp.question_ids)
        sep = torch.full((b, 1), self.vocab.sep_id, dtype=torch.long, device=dev)
        token_block(sep)
        if inp.answer_ids is not None:
            token_block(inp.answer_ids)
        if inp.include_plan:
            plan = torch.full((b, 1), self.vocab.plan_id, dtype=torch.long, device=dev)
            token_block(plan)

        x = torch.cat(parts, dim=1)
        key_padding = torch.cat(pad_mask, dim=1)
        pos = torch.arange(layout.total, device=dev)
        x = x + self.pos_embed(pos).to(dtype)[None]
        return x, key_padding

    def forward(self, inp: ReasonerInput) -> ReasonerOutput:
        layout = self._layout(inp)
        x, key_padding = self._assemble(inp, layout)
        causal = torch.triu(
            torch.ones(layout.total, layout.total, dtype=torch.bool, device=x.device), 1
        )
        for block in self.blocks:
            x = block(x, causal, key_padding)
        h = self.norm_out(x)
        logits = self.lm_head(h)
        token = None
        if layout.plan_pos is not None:
            token = PlanningToken(h[:, layout.plan_pos, :])
        return ReasonerOutput(logits, token, layout)

    @torch.no_grad()
    def generate(self, inp: ReasonerInput) -> GenerateResult:
        """Greedy decode up to EOS (cap max_answer_tokens), then a PLAN step."""
        if inp.answer_ids is not None:
            raise ContractViolation("generate expects an input without answers")
        b = inp.scene_tokens.shape[0]
        dev = inp.scene_tokens.device
        banned = [i for i in self.vocab.structural_ids if i != self.vocab.eos_id]

        answers: list[list[int]] = [[] for _ in range(b)]
        done = [False] * b
        for _ in range(self.cfg.max_answer_tokens):
            la = max(len(a) for a in answers)
            if la > 0:
                ans = torch.full((b, la), self.vocab.pad_id, dtype=torch.long, device=dev)
                for i, a in enumerate(answers):
                    if a:
                        ans[i, : len(a)] = torch.tensor(a, dtype=torch.long, device=dev)
            else:
                ans = None
            probe = ReasonerInput(
                inp.scene_tokens, inp.history_tokens, inp.question_ids, ans, include_plan=False
            )
            out = self.forward(probe)
            logits = out.logits.clone()
            logits[:, :, banned] = float("-inf")
            for i in range(b):
                if done[i]:
                    continue
                pos = out.layout.sep_pos if not answers[i] else out.layout.answer_start + len(answers[i]) - 1
                nxt = int(logits[i, pos].argmax())
                if nxt == self.vocab.eos_id:
                    done[i] = True
                else:
                    answers[i].append(nxt)
            if all(done):
                break
        truncated = [not d for d in done]

        planning_token = None
        if inp.include_plan:
            la = max((len(a) for a in answers), default=0)
            if la > 0:
                ans = torch.full((b, la), self.vocab.pad_id, dtype=torch.long, device=dev)
                for i, a in enumerate(answers):
                    if a:
                        ans[i, : len(a)] = torch.tensor(a, dtype=torch.long, device=dev)
            else:
                ans = None
            final = ReasonerInput(
                inp.scene_tokens, inp.history_tokens, inp.question_ids, ans, include_plan=True
            )
            planning_token = self.forward(final).planning_token
        return GenerateResult(answers, planning_token, truncated)


def ce_loss(
    answer_logits: torch.Tensor, target_ids: torch.Tensor, loss_mask: torch.Tensor
) -> torch.Tensor:
    """Mean next-token NLL over masked positions; empty mask is 0 with warning."""
    mask = loss_mask.to(answer_logits.dtype)
    n = mask.sum()
    if float(n) == 0.0:
        warnings.warn("ce_loss called with an empty mask", RuntimeWarning, stacklevel=2)
        return answer_logits.new_zeros(())
    logp = F.log_softmax(answer_logits, dim=-1)
    nll = -logp.gather(-1, target_ids.unsqueeze(-1)).squeeze(-1)
    return (nll * mask).sum() / n


def answer_targets(
    inp: ReasonerInput, layout: SeqLayout, vocab: Vocabulary
) -> tuple[torch.Tensor, torch.Tensor]:
    """Next-token targets and mask over the supervised answer span.

    Position SEP predicts the first answer token, each answer token predicts
    its successor, and the last real answer token predicts EOS (EOS never
    appears as an input token in the assembled sequence).
    """
    if inp.answer_ids is None:
        raise ContractViolation("answer supervision requires answer_ids")
    b, la = inp.answer_ids.shape
    dev = inp.answer_ids.device
    targets = torch.full((b, layout.total), vocab.pad_id, dtype=torch.long, device=dev)
    mask = torch.zeros(b, layout.total, dtype=torch.bool, device=dev)
    lengths = (inp.answer_ids != vocab.pad_id).sum(dim=1)
    for i in range(b):
        n = int(lengths[i])
        chain = inp.answer_ids[i, :n].tolist() + [vocab.eos_id]
        positions = [layout.sep_pos] + [layout.answer_start + j for j in range(n)]
        for pos, tgt in zip(positions, chain):
            targets[i, pos] = tgt
            mask[i, pos] = True
    return targets, mask
