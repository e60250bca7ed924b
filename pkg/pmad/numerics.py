"""Dense tensor primitives shared by the encoder, the memory module and the tests.

All functions operate on ``torch`` tensors. Double precision is expected
whenever results are compared against finite differences.
"""
from dataclasses import dataclass
from typing import Callable, Dict, List, NamedTuple, Tuple, Union
import torch
import torch.nn.functional as F
from torch import nn
from .exceptions import GradientCheckError, InvalidArgumentError


class Normalized(NamedTuple):
    rows: torch.Tensor
    degenerate: int


def softmax(v: torch.Tensor, tau: float = 1.0) -> torch.Tensor:
    if v.numel() == 0:
        raise InvalidArgumentError("softmax of an empty vector")
    if not tau > 0:
        raise InvalidArgumentError(f"temperature must be positive, got {tau}")
    # torch.softmax subtracts the running max internally
    return torch.softmax(v / tau, dim=-1)


def row_softmax(a: torch.Tensor, tau: float = 1.0) -> torch.Tensor:
    if a.dim() < 2 or a.shape[-1] == 0 or a.shape[-2] == 0:
        raise InvalidArgumentError(f"row_softmax needs a non-empty matrix, got shape {tuple(a.shape)}")
    return softmax(a, tau)


def sigmoid(a: torch.Tensor) -> torch.Tensor:
    return torch.sigmoid(a)


def l2_normalize_rows(a: torch.Tensor, eps: float = 1e-12) -> Normalized:
    """Divide every row by max(norm, eps); all-zero rows stay zero and are counted."""
    if a.numel() == 0:
        raise InvalidArgumentError("l2_normalize_rows of an empty matrix")
    norms = torch.linalg.vector_norm(a, dim=-1)
    degenerate = int((norms < eps).sum().item())
    return Normalized(F.normalize(a, p=2.0, dim=-1, eps=eps), degenerate)


def matmul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape[-1] != b.shape[-2]:
        raise InvalidArgumentError(
            f"dimension mismatch: {tuple(a.shape)} x {tuple(b.shape)}"
        )
    return torch.matmul(a, b)


@dataclass(frozen=True)
class ParamSlot:
    name: str
    shape: Tuple[int, ...]
    offset: int

    @property
    def size(self) -> int:
        n = 1
        for dim in self.shape:
            n *= dim
        return n


@dataclass
class ParamVector:
    values: torch.Tensor
    layout: List[ParamSlot]

    @classmethod
    def from_module(cls, module: nn.Module) -> "ParamVector":
        layout, chunks, offset = [], [], 0
        for name, param in module.named_parameters():
            if not param.requires_grad:
                continue
            slot = ParamSlot(name, tuple(param.shape), offset)
            layout.append(slot)
            chunks.append(param.detach().reshape(-1))
            offset += slot.size
        values = torch.cat(chunks) if chunks else torch.zeros(0)
        return cls(values.clone(), layout)

    def unflatten(self, values: Union[torch.Tensor, None] = None) -> Dict[str, torch.Tensor]:
        values = self.values if values is None else values
        return {
            slot.name: values[slot.offset:slot.offset + slot.size].view(slot.shape)
            for slot in self.layout
        }

    def check_layout(self) -> None:
        offset = 0
        for slot in self.layout:
            if slot.offset != offset:
                raise InvalidArgumentError(f"layout gap or overlap at {slot.name}")
            offset += slot.size
        if offset != self.values.numel():
            raise InvalidArgumentError("layout does not cover the full vector")


def module_objective(
    module: nn.Module,
    loss: Callable[[object], torch.Tensor],
    *args,
    **kwargs,
) -> Tuple[Callable[[torch.Tensor], torch.Tensor], ParamVector]:
    """Wrap ``loss(module(*args, **kwargs))`` as a function of the flat parameter vector."""
    vector = ParamVector.from_module(module)
    buffers = dict(module.named_buffers())

    def objective(values: torch.Tensor) -> torch.Tensor:
        state = {**buffers, **vector.unflatten(values)}
        return loss(torch.func.functional_call(module, state, args, kwargs))

    return objective, vector


def grad_check(
    f: Callable[[torch.Tensor], torch.Tensor],
    x: Union[ParamVector, torch.Tensor],
    h: float = 1e-5,
) -> float:
    """Max relative error between autograd and central differences.

    The error of coordinate i is |g_i - c_i| / max(1, |c_i|).
    """
    base = x.values if isinstance(x, ParamVector) else x
    point = base.detach().clone().to(torch.float64).requires_grad_(True)

    out = f(point)
    if not torch.isfinite(out).all():
        raise GradientCheckError(-1, float(out))
    if out.requires_grad:
        (analytic,) = torch.autograd.grad(out, point, allow_unused=True)
        if analytic is None:
            analytic = torch.zeros_like(point)
    else:
        analytic = torch.zeros_like(point)

    worst = 0.0
    shifted = point.detach().clone()
    with torch.no_grad():
        for i in range(shifted.numel()):
            original = shifted[i].item()
            shifted[i] = original + h
            plus = f(shifted)
            shifted[i] = original - h
            minus = f(shifted)
            shifted[i] = original
            for value in (plus, minus):
                if not torch.isfinite(value).all():
                    raise GradientCheckError(i, float(value))
            central = (plus - minus).item() / (2 * h)
            error = abs(analytic[i].item() - central) / max(1.0, abs(central))
            worst = max(worst, error)
    return worst
