"""Central finite-difference gradient verification.

Used by the test suite to confirm that autograd gradients of every loss and
every learned block match numerical derivatives in 64-bit arithmetic.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping

import torch


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(1.0, abs(a), abs(n))


def central_diff(fn: Callable[[], torch.Tensor], tensor: torch.Tensor, idx: tuple, h: float) -> float:
    flat = tensor.data
    old = flat[idx].item()
    with torch.no_grad():
        flat[idx] = old + h
        f_plus = float(fn())
        flat[idx] = old - h
        f_minus = float(fn())
        flat[idx] = old
    return (f_plus - f_minus) / (2.0 * h)


def check_gradients(
    fn: Callable[[], torch.Tensor],
    params: Mapping[str, torch.Tensor],
    coords_per_tensor: int = 4,
    h: float = 1e-5,
    seed: int = 0,
) -> dict[str, float]:
    """Compare autograd gradients of the scalar `fn()` against central
    differences at a few randomly sampled coordinates per tensor.

    Returns the max relative error per parameter name. Tensors must be
    float64 leaves with requires_grad set.
    """
    for name, p in params.items():
        if p.dtype != torch.float64:
            raise ValueError(f"{name}: gradcheck requires float64, got {p.dtype}")
        if p.grad is not None:
            p.grad = None
    loss = fn()
    grads = torch.autograd.grad(loss, list(params.values()), allow_unused=True)
    rng = torch.Generator().manual_seed(seed)
    errors: dict[str, float] = {}
    for (name, p), g in zip(params.items(), grads):
        worst = 0.0
        n = p.numel()
        k = min(coords_per_tensor, n)
        choice = torch.randperm(n, generator=rng)[:k]
        for flat_idx in choice.tolist():
            idx = tuple(int(v) for v in torch.unravel_index(torch.tensor(flat_idx), p.shape))
            analytic = 0.0 if g is None else float(g[idx])
            numeric = central_diff(fn, p, idx, h)
            worst = max(worst, _rel_err(analytic, numeric))
        errors[name] = worst
    return errors


def max_gradcheck_error(
    fn: Callable[[], torch.Tensor],
    params: Mapping[str, torch.Tensor],
    **kwargs,
) -> float:
    errs = check_gradients(fn, params, **kwargs)
    return max(errs.values()) if errs else 0.0
