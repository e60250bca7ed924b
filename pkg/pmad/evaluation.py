"""Score test regions with a trained model and collect report, score and utilization artifacts."""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple
import numpy as np
import pandas as pd
import structlog
import torch
from .exceptions import InvalidArgumentError
from .ingest import DomainIndex, SeriesRecord, build_domain_index, prepare_windows
from .memory import MemorySelection, accumulate_utilization, export_utilization
from .metrics import (
    ScoredSeries, WindowScore, aggregate, anomaly_score, score_distribution_export, series_metrics,
)
from .models import PatchMemoryAutoencoder
from .schemas import EvalReport, MemoryMode, MetricConfig, TrainConfig

logger = structlog.get_logger()


@dataclass
class SeriesScores:
    scored: ScoredSeries
    windows: List[WindowScore]
    selections: List[Optional[MemorySelection]]


@dataclass
class EvaluationResult:
    report: EvalReport
    scores: pd.DataFrame
    utilization: pd.DataFrame
    flagged_domains: List[Tuple[str, str]] = field(default_factory=list)


@torch.no_grad()
def score_series(model: PatchMemoryAutoencoder, record: SeriesRecord, cfg: TrainConfig,
                 domain_id: Optional[int] = None) -> SeriesScores:
    """Per-timestep squared errors over the test region; uncovered tails are excluded."""
    model.eval()
    offset = record.test_start
    length = len(record) - offset
    scores = np.zeros(length, dtype=np.float64)
    excluded = np.ones(length, dtype=bool)
    labels = record.labels[offset:]
    windows = prepare_windows(record, cfg.window, cfg.patch_len, cfg.n_patches,
                              split="test", eps=cfg.std_eps)

    window_scores, selections = [], []
    domain_name = f"{record.dataset}/{record.subdomain}"
    for start in range(0, len(windows), cfg.batch_size):
        chunk = windows[start:start + cfg.batch_size]
        patches = torch.as_tensor(np.stack([w.patches for w in chunk]), dtype=torch.float32)
        mask = torch.as_tensor(np.stack([w.mask for w in chunk]))
        output = model(patches, mask, domains=[domain_id] * len(chunk), mode=MemoryMode.INFER)
        reconstruction = output.reconstruction.double().cpu().numpy()
        for row, window in enumerate(chunk):
            point_scores = anomaly_score(window, reconstruction[row])
            begin = window.origin[1] - offset
            end = begin + len(point_scores)
            scores[begin:end] = point_scores
            excluded[begin:end] = False
            window_scores.append(WindowScore(domain_name, f"{record.series_id}@{window.origin[1]}",
                                             point_scores, labels[begin:end]))
        selections.extend(output.selections)

    scored = ScoredSeries(scores, labels, excluded, series_id=record.series_id,
                          dataset=record.dataset, subdomain=record.subdomain)
    return SeriesScores(scored, window_scores, selections)


def utilization_frame(matrix: np.ndarray, domains: DomainIndex) -> pd.DataFrame:
    frame = pd.DataFrame(matrix, columns=[f"m_{i}" for i in range(matrix.shape[1])])
    frame.insert(0, "dataset", [d for d, _ in domains.labels])
    frame.insert(1, "subdomain", [s for _, s in domains.labels])
    return frame


Assignment = Tuple[PatchMemoryAutoencoder, DomainIndex, Sequence[SeriesRecord], TrainConfig]


def evaluate_models(assignments: Sequence[Assignment],
                    metric_cfg: Optional[MetricConfig] = None) -> EvaluationResult:
    """Score each record group with its own model; all models share one memory width."""
    metric_cfg = metric_cfg or MetricConfig()
    records = [r for _, _, group, _ in assignments for r in group]
    eval_domains = build_domain_index(records)
    widths = {m.memory.n_items for m, _, _, _ in assignments if m.memory is not None}
    if len(widths) > 1:
        raise InvalidArgumentError(f"models disagree on memory size: {sorted(widths)}")
    n_items = widths.pop() if widths else 0
    acc = np.zeros((len(eval_domains), n_items), dtype=np.float64)

    rows, windows = [], []
    for model, domain_index, group, cfg in assignments:
        for record in group:
            # unseen domains fall back to top-K selection
            scored = score_series(model, record, cfg, domain_index.get(record.domain))
            metrics = series_metrics(scored.scored, metric_cfg)
            logger.info("Series evaluated", series_id=record.series_id,
                        auc_pr=metrics.auc_pr, auc_roc=metrics.auc_roc)
            rows.append(metrics)
            windows.extend(scored.windows)
            true_domain = eval_domains.id_of(record.domain)
            for selection in scored.selections:
                if selection is not None:
                    accumulate_utilization(acc, true_domain, selection)

    report = aggregate(rows)
    flagged: List[Tuple[str, str]] = []
    if n_items:
        normalized, flagged_rows = export_utilization(acc)
        flagged = [eval_domains.labels[i] for i in flagged_rows]
        if flagged:
            logger.warning("Domains without memory observations", domains=flagged)
        utilization = utilization_frame(normalized, eval_domains)
    else:
        utilization = utilization_frame(acc, eval_domains)
    return EvaluationResult(report, score_distribution_export(windows), utilization, flagged)


def evaluate(model: PatchMemoryAutoencoder, records: Sequence[SeriesRecord],
             domain_index: DomainIndex, cfg: TrainConfig,
             metric_cfg: Optional[MetricConfig] = None) -> EvaluationResult:
    """Score every series, aggregate metrics and accumulate domain-to-item similarity."""
    return evaluate_models([(model, domain_index, list(records), cfg)], metric_cfg)
