from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import math
import random
import time
import numpy as np
import pandas as pd
import structlog
import torch
from .checkpoint import load_encoder_weights
from .evaluation import EvaluationResult, evaluate
from .exceptions import ConfigurationError, DivergenceError, InvalidArgumentError
from .ingest import (
    DomainIndex, PatchedWindow, SeriesRecord, build_domain_index, group_by_domain,
    prepare_windows, truncate_training,
)
from .models import PatchMemoryAutoencoder, build_model, masked_mse
from .schemas import MemoryMode, MemoryStrategy, MetricConfig, TrainConfig, TrainMode

logger = structlog.get_logger()

LOG_COLUMNS = ["step", "epoch", "loss", "wall_ms"]


@dataclass
class TrainingRun:
    model: PatchMemoryAutoencoder
    domain_index: DomainIndex
    config: TrainConfig
    log: pd.DataFrame
    train_sizes: Dict[str, int] = field(default_factory=dict)
    series_id: Optional[str] = None


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def few_shot_subsample(corpus: Sequence[SeriesRecord], ratio: float) -> List[SeriesRecord]:
    """Prefix-truncate every training region to ceil(ratio * train_len) points."""
    if not 0.0 < ratio <= 1.0:
        raise InvalidArgumentError(f"train ratio must lie in (0, 1], got {ratio}")
    if ratio == 1.0:
        return list(corpus)
    return [truncate_training(r, max(1, math.ceil(ratio * r.train_len))) for r in corpus]


def training_windows(corpus: Sequence[SeriesRecord], domain_index: DomainIndex,
                     cfg: TrainConfig) -> List[Tuple[PatchedWindow, int]]:
    windows = []
    for record in corpus:
        domain = domain_index.id_of(record.domain)
        for window in prepare_windows(record, cfg.window, cfg.patch_len, cfg.n_patches,
                                      split="train", eps=cfg.std_eps):
            windows.append((window, domain))
    return windows


def stack_windows(windows: Sequence[PatchedWindow], dtype=torch.float32) -> Tuple[torch.Tensor, torch.Tensor]:
    patches = torch.as_tensor(np.stack([w.patches for w in windows]), dtype=dtype)
    mask = torch.as_tensor(np.stack([w.mask for w in windows]))
    return patches, mask


@torch.no_grad()
def initialize_memory(model: PatchMemoryAutoencoder, windows: Sequence[Tuple[PatchedWindow, int]],
                      cfg: TrainConfig) -> None:
    reps: Dict[int, List[Tuple[torch.Tensor, torch.Tensor]]] = {}
    was_training = model.training
    model.eval()
    for start in range(0, len(windows), cfg.batch_size):
        chunk = windows[start:start + cfg.batch_size]
        patches, mask = stack_windows([w for w, _ in chunk])
        q = model.encode(patches, mask)
        for row, (_, domain) in enumerate(chunk):
            reps.setdefault(domain, []).append((q[row], mask[row]))
    model.train(was_training)
    model.memory.initialize(reps, samples=cfg.samples_per_domain, seed=cfg.seed)


def corrupt_patches(patches: torch.Tensor, mask: torch.Tensor, ratio: float,
                    generator: torch.Generator) -> torch.Tensor:
    """Zero the content of a random fraction of observed patches."""
    if ratio <= 0:
        return patches
    drop = (torch.rand(mask.shape, generator=generator) < ratio) & mask
    return patches * (~drop).unsqueeze(-1).to(patches.dtype)


def train(corpus: Sequence[SeriesRecord], cfg: TrainConfig,
          domain_index: Optional[DomainIndex] = None, mask_ratio: float = 0.0) -> TrainingRun:
    if not corpus:
        raise InvalidArgumentError("cannot train on an empty corpus")
    if cfg.mode == TrainMode.PER_DATASET and len(corpus) != 1:
        raise ConfigurationError(f"per_dataset mode trains on exactly one series, got {len(corpus)}")
    corpus = few_shot_subsample(corpus, cfg.train_ratio)
    domain_index = domain_index or build_domain_index(corpus)
    n_items = cfg.n_items or len(domain_index)
    if cfg.uses_memory and cfg.k is not None and cfg.k > n_items:
        raise ConfigurationError(f"K={cfg.k} exceeds the number of memory items M={n_items}")

    seed_everything(cfg.seed)
    model = build_model(cfg, n_items=n_items)
    if cfg.encoder_init != "scratch":
        load_encoder_weights(model, cfg.encoder_init)

    windows = training_windows(corpus, domain_index, cfg)
    if not windows:
        raise InvalidArgumentError("training regions yield no windows")
    train_sizes = {r.series_id: r.train_len for r in corpus}
    logger.info("Training started", n_series=len(corpus), n_windows=len(windows),
                n_domains=len(domain_index), strategy=cfg.memory_strategy.value, mode=cfg.mode.value)

    if model.memory is not None:
        seen = {domain for _, domain in windows}
        empty = ["/".join(label) for i, label in enumerate(domain_index.labels) if i not in seen]
        if empty:
            raise ConfigurationError(f"No training windows to seed memory for domains: {', '.join(empty)}",
                                     domains=empty)
        initialize_memory(model, windows, cfg)

    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=(0.9, 0.999), eps=1e-8,
                                 weight_decay=0.0)
    rng = np.random.default_rng(cfg.seed)
    generator = torch.Generator().manual_seed(cfg.seed)
    rows = []
    step = 0
    model.train()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(windows))
        for start in range(0, len(order), cfg.batch_size):
            tick = time.perf_counter()
            batch = [windows[i] for i in order[start:start + cfg.batch_size]]
            patches, mask = stack_windows([w for w, _ in batch])
            domains = [d for _, d in batch]
            inputs = corrupt_patches(patches, mask, mask_ratio, generator)

            output = model(inputs, mask, domains=domains, mode=MemoryMode.TRAIN)
            loss = masked_mse(output.reconstruction, patches, mask)
            if not torch.isfinite(loss):
                raise DivergenceError(step, float(loss))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

            wall_ms = (time.perf_counter() - tick) * 1000.0
            rows.append((step, epoch, float(loss), wall_ms))
            if step % cfg.log_every == 0:
                logger.info("Training step", step=step, epoch=epoch, loss=float(loss))
            step += 1

    model.eval()
    log = pd.DataFrame(rows, columns=LOG_COLUMNS)
    logger.info("Training finished", steps=step, final_loss=rows[-1][2] if rows else None)
    return TrainingRun(model, domain_index, cfg, log, train_sizes)


def train_per_dataset(corpus: Sequence[SeriesRecord], cfg: TrainConfig) -> List[TrainingRun]:
    """One model per series, each with its own single-domain memory."""
    runs = []
    for record in corpus:
        run = train([record], cfg)
        run.series_id = record.series_id
        runs.append(run)
    return runs


def pretrain_encoder(corpus: Sequence[SeriesRecord], cfg: TrainConfig) -> TrainingRun:
    """Masked patch reconstruction without memory; used as an ``encoder_init`` source."""
    plain = cfg.model_copy(update={"memory_strategy": MemoryStrategy.NONE, "mode": TrainMode.MULTI_DOMAIN})
    return train(corpus, plain, mask_ratio=cfg.pretrain_mask_ratio)


@dataclass
class FoldResult:
    held_out: Tuple[str, str]
    strategy: MemoryStrategy
    result: EvaluationResult


def leave_one_out(corpus: Sequence[SeriesRecord], cfg: TrainConfig,
                  metric_cfg: Optional[MetricConfig] = None,
                  compare_baseline: bool = False) -> List[FoldResult]:
    """Train on all domains but one and evaluate zero-shot on the held-out domain."""
    groups = group_by_domain(corpus)
    if len(groups) < 2:
        raise ConfigurationError("leave-one-out needs at least two domains")
    if cfg.mode == TrainMode.PER_DATASET:
        raise ConfigurationError("leave-one-out trains multi-domain models; per_dataset mode is not supported")
    metric_cfg = metric_cfg or MetricConfig()
    strategies = [cfg.memory_strategy]
    if compare_baseline and cfg.memory_strategy != MemoryStrategy.NONE:
        strategies.append(MemoryStrategy.NONE)

    folds = []
    for held_out, held_records in groups.items():
        train_records = [r for r in corpus if r.domain != held_out]
        for strategy in strategies:
            fold_cfg = cfg.model_copy(update={"memory_strategy": strategy})
            run = train(train_records, fold_cfg)
            result = evaluate(run.model, held_records, run.domain_index, fold_cfg, metric_cfg)
            logger.info("Leave-one-out fold", held_out="/".join(held_out), strategy=strategy.value,
                        auc_pr=result.report.corpus.auc_pr)
            folds.append(FoldResult(held_out, strategy, result))
    return folds


def loo_table(folds: Sequence[FoldResult]) -> pd.DataFrame:
    rows = []
    for fold in folds:
        corpus = fold.result.report.corpus
        rows.append({
            "dataset": fold.held_out[0], "subdomain": fold.held_out[1],
            "strategy": fold.strategy.value,
            "auc_pr": corpus.auc_pr, "auc_roc": corpus.auc_roc,
            "vus_pr": corpus.vus_pr, "vus_roc": corpus.vus_roc,
        })
    table = pd.DataFrame(rows)
    summary = (table.groupby("strategy", sort=False)[["auc_pr", "auc_roc", "vus_pr", "vus_roc"]]
               .mean().round(2).reset_index())
    summary.insert(0, "dataset", "mean")
    summary.insert(1, "subdomain", "*")
    return pd.concat([table, summary], ignore_index=True)
