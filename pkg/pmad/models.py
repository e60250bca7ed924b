from dataclasses import dataclass
from typing import List, Optional, Sequence
import torch
from torch import nn
import torch.nn.functional as F
from .exceptions import InvalidArgumentError
from .memory import MemorySelection, MemoryUpdates, PatchMemory
from .schemas import MemoryMode, MemoryStrategy, ModelConfig

MASK_FILL = -1e9


def reset_parameters(module: nn.Module) -> None:
    """Glorot-uniform weights, zero biases, unit layer-norm scales."""
    for sub in module.modules():
        if isinstance(sub, nn.LayerNorm):
            nn.init.ones_(sub.weight)
            nn.init.zeros_(sub.bias)
        elif isinstance(sub, nn.Linear):
            nn.init.xavier_uniform_(sub.weight)
            if sub.bias is not None:
                nn.init.zeros_(sub.bias)
        elif isinstance(sub, nn.MultiheadAttention):
            # query/key/value are stacked; each block gets its own fan
            for block in sub.in_proj_weight.data.chunk(3, dim=0):
                nn.init.xavier_uniform_(block)
            nn.init.zeros_(sub.in_proj_bias)


class PatchEmbedding(nn.Module):
    def __init__(self, patch_len: int, n_patches: int, d_model: int):
        super().__init__()
        self.patch_len = patch_len
        self.n_patches = n_patches
        self.proj = nn.Linear(patch_len, d_model)
        self.position = nn.Parameter(torch.empty(n_patches, d_model))
        nn.init.xavier_uniform_(self.position)

    def forward(self, patches: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        if patches.shape[-2:] != (self.n_patches, self.patch_len):
            raise InvalidArgumentError(
                f"expected patches of shape (*, {self.n_patches}, {self.patch_len}), got {tuple(patches.shape)}"
            )
        tokens = self.proj(patches) + self.position
        return tokens * mask.unsqueeze(-1).to(tokens.dtype)


class PatchEncoder(nn.Module):
    """Pre-norm transformer over patch tokens; padded keys are excluded from attention."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int, n_layers: int):
        super().__init__()
        self.layers = nn.ModuleList(
            nn.TransformerEncoderLayer(
                d_model, n_heads, dim_feedforward=d_ff, dropout=0.0,
                activation="gelu", batch_first=True, norm_first=True,
            )
            for _ in range(n_layers)
        )
        self.norm = nn.LayerNorm(d_model) if n_layers else nn.Identity()

    def forward(self, tokens: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        observed = mask.to(tokens.dtype)
        key_padding = (1.0 - observed) * MASK_FILL
        x = tokens
        for layer in self.layers:
            x = layer(x, src_key_padding_mask=key_padding)
        return self.norm(x) * observed.unsqueeze(-1)


class ReconstructionDecoder(nn.Module):
    def __init__(self, d_model: int, d_hidden: int, patch_len: int):
        super().__init__()
        self.in_features = 2 * d_model
        self.hidden = nn.Linear(2 * d_model, d_hidden)
        self.out = nn.Linear(d_hidden, patch_len)

    def forward(self, q_cat: torch.Tensor) -> torch.Tensor:
        if q_cat.shape[-1] != self.in_features:
            raise InvalidArgumentError(
                f"decoder expects width {self.in_features}, got {q_cat.shape[-1]}"
            )
        return self.out(F.gelu(self.hidden(q_cat)))


@dataclass
class ModelOutput:
    reconstruction: torch.Tensor
    selections: List[Optional[MemorySelection]]
    updates: Optional[MemoryUpdates] = None


class PatchMemoryAutoencoder(nn.Module):
    """Encoder, optional patch memory and the shared decoder fed with [q; q~]."""

    def __init__(self, config: ModelConfig, strategy: MemoryStrategy = MemoryStrategy.DATA_DRIVEN,
                 n_items: int = 1, k: int = 1, tau_select: float = 0.3, tau_attn: float = 1.0,
                 renormalize_topk: bool = False):
        super().__init__()
        self.config = config
        self.strategy = MemoryStrategy(strategy)
        self.embedding = PatchEmbedding(config.patch_len, config.n_patches, config.d_model)
        self.encoder = PatchEncoder(config.d_model, config.n_heads, config.d_ff, config.n_layers)
        self.decoder = ReconstructionDecoder(config.d_model, config.d_hidden, config.patch_len)
        self.memory: Optional[PatchMemory] = None
        if self.strategy != MemoryStrategy.NONE:
            self.memory = PatchMemory(n_items, config.n_patches, config.d_model, k=k,
                                      tau_select=tau_select, tau_attn=tau_attn,
                                      renormalize_topk=renormalize_topk)
        reset_parameters(self)

    def encode(self, patches: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        return self.encoder(self.embedding(patches, mask), mask)

    def forward(self, patches: torch.Tensor, mask: torch.Tensor,
                domains: Optional[Sequence[Optional[int]]] = None,
                mode: MemoryMode = MemoryMode.INFER) -> ModelOutput:
        q = self.encode(patches, mask)
        if self.memory is None:
            q_tilde, selections, updates = q, [None] * q.shape[0], None
        else:
            forced = self._forced_items(domains, q.shape[0])
            q_tilde, selections, updates = self.memory(
                q, mask, mode=mode, forced_items=forced,
                restrict_updates=self.strategy == MemoryStrategy.OWN_DOMAIN,
                frozen=self.strategy == MemoryStrategy.FROZEN,
            )
        reconstruction = self.decoder(torch.cat([q, q_tilde], dim=-1))
        return ModelOutput(reconstruction, selections, updates)

    def _forced_items(self, domains, batch: int) -> List[Optional[int]]:
        if self.strategy not in (MemoryStrategy.FROZEN, MemoryStrategy.OWN_DOMAIN) or domains is None:
            return [None] * batch
        return [self.memory.own_item(d) if d is not None else None for d in domains]


def masked_mse(reconstruction: torch.Tensor, patches: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean squared error over observed patches only."""
    weight = mask.to(reconstruction.dtype).unsqueeze(-1)
    denom = weight.sum() * reconstruction.shape[-1]
    return (((reconstruction - patches) ** 2) * weight).sum() / denom.clamp_min(1.0)


def build_model(config, n_items: int = 1) -> PatchMemoryAutoencoder:
    """Model for a TrainConfig-like object; K defaults to min(3, M)."""
    k = config.k if config.k is not None else min(3, n_items)
    return PatchMemoryAutoencoder(
        config.model_part(), strategy=config.memory_strategy, n_items=n_items, k=k,
        tau_select=config.tau_select, tau_attn=config.tau_attn,
        renormalize_topk=config.renormalize_topk,
    )
