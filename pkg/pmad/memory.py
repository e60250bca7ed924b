"""Patch-level memory: prototype items, top-K selection, gated updates and query refinement.

Every function works on one window at a time with P observed patches:
``q`` and aligned items are P x d_model matrices. ``PatchMemory.forward``
loops over a batch and averages the write-backs of all elements.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple
import numpy as np
import structlog
import torch
from torch import nn
import torch.nn.functional as F
from .exceptions import ConfigurationError, InvalidArgumentError
from .numerics import l2_normalize_rows, matmul, row_softmax, sigmoid, softmax
from .schemas import MemoryMode

logger = structlog.get_logger()


@dataclass
class MemorySelection:
    indices: List[int]
    lambdas: torch.Tensor
    full_lambda: torch.Tensor


@dataclass
class MemoryUpdates:
    sums: torch.Tensor
    counts: torch.Tensor

    @classmethod
    def empty(cls, n_items: int, n_patches: int, d_model: int, dtype=torch.float32) -> "MemoryUpdates":
        return cls(torch.zeros(n_items, n_patches, d_model, dtype=dtype),
                   torch.zeros(n_items, n_patches, dtype=dtype))

    def add(self, item: int, m_tilde: torch.Tensor) -> None:
        rows = m_tilde.shape[0]
        self.sums[item, :rows] += m_tilde.detach().to(self.sums.dtype)
        self.counts[item, :rows] += 1

    @property
    def touched_items(self) -> List[int]:
        return [int(i) for i in torch.nonzero(self.counts.sum(dim=1) > 0).flatten()]


def align(items: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Slice every item to the observed patch rows (observed patches are a prefix)."""
    n_observed = int(mask.sum().item())
    return items[..., :n_observed, :]


def select_topk(q_hat: torch.Tensor, aligned: torch.Tensor, k: int, tau: float = 0.3) -> MemorySelection:
    n_items = aligned.shape[0]
    if k > n_items:
        raise ConfigurationError(f"K={k} exceeds the number of memory items M={n_items}")
    logits = matmul(aligned.reshape(n_items, -1), q_hat.reshape(-1, 1)).squeeze(-1)
    full_lambda = softmax(logits, tau)
    # stable sort keeps the lower index first among ties
    order = torch.sort(full_lambda.detach(), descending=True, stable=True).indices[:k]
    indices = [int(i) for i in order]
    return MemorySelection(indices, full_lambda[order], full_lambda)


def update_item(m: torch.Tensor, q: torch.Tensor, u_psi: torch.Tensor, w_psi: torch.Tensor,
                tau: float = 1.0) -> torch.Tensor:
    v = row_softmax(matmul(m, q.transpose(-1, -2)), tau)
    vq = matmul(v, q)
    psi = sigmoid(matmul(m, u_psi) + matmul(vq, w_psi))
    return (1.0 - psi) * m + psi * vq


def refine_query(q: torch.Tensor, m_tilde: torch.Tensor, tau: float = 1.0) -> torch.Tensor:
    w = row_softmax(matmul(q, m_tilde.transpose(-1, -2)), tau)
    return matmul(w, m_tilde)


def forced_selection(item: int, n_items: int, dtype=torch.float32) -> MemorySelection:
    full_lambda = torch.zeros(n_items, dtype=dtype)
    full_lambda[item] = 1.0
    return MemorySelection([item], full_lambda[[item]], full_lambda)


class PatchMemory(nn.Module):
    def __init__(self, n_items: int, n_patches: int, d_model: int, k: int = 3,
                 tau_select: float = 0.3, tau_attn: float = 1.0, renormalize_topk: bool = False):
        super().__init__()
        if not 1 <= k <= n_items:
            raise ConfigurationError(f"K={k} must lie in [1, M={n_items}]")
        if not (tau_select > 0 and tau_attn > 0):
            raise ConfigurationError("memory temperatures must be positive")
        self.n_items = n_items
        self.n_patches = n_patches
        self.d_model = d_model
        self.k = k
        self.tau_select = tau_select
        self.tau_attn = tau_attn
        self.renormalize_topk = renormalize_topk
        self.register_buffer("items", torch.zeros(n_items, n_patches, d_model))
        self.register_buffer("init_domain", torch.arange(n_items, dtype=torch.long))
        self.u_psi = nn.Parameter(torch.empty(d_model, d_model))
        self.w_psi = nn.Parameter(torch.empty(d_model, d_model))
        self.reset_projections()

    def reset_projections(self) -> None:
        nn.init.xavier_uniform_(self.u_psi)
        nn.init.xavier_uniform_(self.w_psi)

    def own_item(self, domain: int) -> int:
        return int(domain) % self.n_items

    @torch.no_grad()
    def initialize(self, reps_by_domain: Dict[int, Sequence[Tuple[torch.Tensor, torch.Tensor]]],
                   samples: int = 8, seed: int = 0) -> None:
        """Seed each item with the row-wise mean of sampled encoder outputs of its domain(s)."""
        domains = sorted(reps_by_domain)
        for d in domains:
            if not reps_by_domain[d]:
                raise InvalidArgumentError(f"domain {d} has no representations to seed memory")
        if not domains:
            raise InvalidArgumentError("cannot initialize memory without domains")
        # items are seeded by position, so positions must equal domain ids
        missing = sorted(set(range(domains[-1] + 1)) - set(domains))
        if missing or domains[0] != 0:
            raise ConfigurationError(f"domain ids {missing} have no representations to seed memory",
                                     missing=missing)

        rng = np.random.default_rng(seed)
        n_domains = len(domains)
        for item in range(self.n_items):
            if self.n_items <= n_domains:
                sources = [d for pos, d in enumerate(domains) if pos % self.n_items == item]
            else:
                sources = [domains[item % n_domains]]
            pool = [rep for d in sources for rep in reps_by_domain[d]]
            take = min(samples, len(pool))
            chosen = np.sort(rng.choice(len(pool), size=take, replace=False))

            total = torch.zeros(self.n_patches, self.d_model, dtype=torch.float64)
            count = torch.zeros(self.n_patches, dtype=torch.float64)
            for idx in chosen:
                rep, mask = pool[int(idx)]
                observed = mask.to(torch.float64)
                total += rep.detach().to(torch.float64) * observed.unsqueeze(-1)
                count += observed
            mean = total / count.clamp_min(1.0).unsqueeze(-1)
            self.items[item] = l2_normalize_rows(mean).rows.to(self.items.dtype)
            self.init_domain[item] = sources[0]
        logger.info("Memory initialized", n_items=self.n_items, n_domains=n_domains, samples=samples)

    def forward_window(self, q: torch.Tensor, items: torch.Tensor,
                       forced_item: Optional[int] = None,
                       updates: Optional[MemoryUpdates] = None,
                       update_filter: Optional[int] = None) -> Tuple[torch.Tensor, MemorySelection]:
        """Refine one window's queries; ``items`` is the bank snapshot to read from."""
        n_observed = q.shape[0]
        q_hat = l2_normalize_rows(q).rows
        aligned = items[:, :n_observed, :]
        if forced_item is not None:
            selection = forced_selection(forced_item, self.n_items, dtype=q.dtype)
        else:
            selection = select_topk(q_hat, aligned, self.k, self.tau_select)

        lambdas = selection.lambdas
        if self.renormalize_topk:
            lambdas = lambdas / lambdas.sum()

        q_tilde = torch.zeros_like(q_hat)
        for weight, item in zip(lambdas, selection.indices):
            m_tilde = update_item(aligned[item], q_hat, self.u_psi, self.w_psi, self.tau_attn)
            q_tilde = q_tilde + weight * refine_query(q_hat, m_tilde, self.tau_attn)
            if updates is not None and (update_filter is None or item == update_filter):
                updates.add(item, m_tilde)
        return q_tilde, selection

    def forward(self, q: torch.Tensor, mask: torch.Tensor, mode: MemoryMode = MemoryMode.INFER,
                forced_items: Optional[Sequence[Optional[int]]] = None,
                restrict_updates: bool = False, frozen: bool = False):
        """Batched memory pass over B x N x d queries; returns padded q~, selections and updates."""
        batch, n_patches, _ = q.shape
        forced_items = forced_items if forced_items is not None else [None] * batch
        writes = MemoryMode(mode) == MemoryMode.TRAIN and not frozen
        updates = MemoryUpdates.empty(self.n_items, self.n_patches, self.d_model,
                                      dtype=self.items.dtype) if writes else None
        # snapshot so the write-back cannot alias tensors saved for backward
        items = self.items.detach().clone().to(q.dtype)

        refined, selections = [], []
        for b in range(batch):
            n_observed = int(mask[b].sum().item())
            forced = forced_items[b]
            update_filter = forced if restrict_updates else None
            if restrict_updates and forced is None:
                window_updates = None
            else:
                window_updates = updates
            q_tilde, selection = self.forward_window(q[b, :n_observed], items, forced,
                                                     window_updates, update_filter)
            refined.append(F.pad(q_tilde, (0, 0, 0, n_patches - n_observed)))
            selections.append(selection)

        if updates is not None:
            self.write_back(updates)
        return torch.stack(refined), selections, updates

    @torch.no_grad()
    def write_back(self, updates: MemoryUpdates) -> None:
        touched = updates.counts > 0
        if not touched.any():
            return
        mean = updates.sums / updates.counts.clamp_min(1.0).unsqueeze(-1)
        normalized = l2_normalize_rows(mean).rows.to(self.items.dtype)
        self.items[touched] = normalized[touched]
        logger.debug("Memory write-back", items=updates.touched_items)


def memory_forward(q: torch.Tensor, bank: PatchMemory, mask: torch.Tensor,
                   mode: MemoryMode = MemoryMode.INFER,
                   forced_item: Optional[int] = None) -> Tuple[torch.Tensor, MemorySelection]:
    """Single-window pass; ``q`` holds the P observed encoder rows."""
    n_observed = int(mask.sum().item())
    if q.shape[0] != n_observed:
        raise InvalidArgumentError(f"query has {q.shape[0]} rows but mask observes {n_observed}")
    updates = None
    if MemoryMode(mode) == MemoryMode.TRAIN:
        updates = MemoryUpdates.empty(bank.n_items, bank.n_patches, bank.d_model, dtype=bank.items.dtype)
    items = bank.items.detach().clone().to(q.dtype)
    q_tilde, selection = bank.forward_window(q, items, forced_item, updates)
    if updates is not None:
        bank.write_back(updates)
    return q_tilde, selection


def init_memory(reps_by_domain: Dict[int, Sequence[Tuple[torch.Tensor, torch.Tensor]]],
                samples: int, seed: int, n_items: Optional[int] = None, k: int = 3,
                tau_select: float = 0.3, tau_attn: float = 1.0) -> PatchMemory:
    if not reps_by_domain:
        raise InvalidArgumentError("cannot initialize memory without domains")
    for domain, reps in sorted(reps_by_domain.items()):
        if not reps:
            raise InvalidArgumentError(f"domain {domain} has no representations to seed memory")
    n_patches, d_model = next(iter(reps_by_domain.values()))[0][0].shape
    n_items = n_items or len(reps_by_domain)
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        bank = PatchMemory(n_items, n_patches, d_model, k=min(k, n_items),
                           tau_select=tau_select, tau_attn=tau_attn)
    bank.initialize(reps_by_domain, samples=samples, seed=seed)
    return bank


def accumulate_utilization(acc: np.ndarray, true_domain: int, selection: MemorySelection) -> np.ndarray:
    acc[true_domain] += selection.full_lambda.detach().to(torch.float64).cpu().numpy()
    return acc


def export_utilization(acc: np.ndarray) -> Tuple[np.ndarray, List[int]]:
    """Row-normalize; rows with no observations stay zero and are returned as flagged."""
    sums = acc.sum(axis=1, keepdims=True)
    flagged = [int(i) for i in np.flatnonzero(sums[:, 0] <= 0)]
    normalized = np.divide(acc, sums, out=np.zeros_like(acc, dtype=np.float64), where=sums > 0)
    return normalized, flagged
