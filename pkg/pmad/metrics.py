"""Threshold-free detection metrics: AUC-ROC, AUC-PR and their buffered-label (VUS) forms."""
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence
import math
import numpy as np
import pandas as pd
import structlog
from sklearn.metrics import average_precision_score, roc_auc_score
from .exceptions import InvalidArgumentError, UndefinedMetricError
from .ingest import PatchedWindow
from .schemas import BufferShape, DomainMetrics, EvalReport, MetricConfig, MetricKind, SeriesMetrics

logger = structlog.get_logger()

METRIC_NAMES = ["auc_pr", "auc_roc", "vus_pr", "vus_roc"]
REPORT_COLUMNS = ["series_id", "dataset", "subdomain"] + METRIC_NAMES
DOMAIN_MEAN = "domain_mean"
CORPUS_MEAN = "corpus_mean"


@dataclass
class ScoredSeries:
    scores: np.ndarray
    labels: np.ndarray
    excluded: Optional[np.ndarray] = None
    series_id: str = ""
    dataset: str = ""
    subdomain: str = ""

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.excluded is None:
            self.excluded = np.zeros(len(self.scores), dtype=bool)
        self.excluded = np.asarray(self.excluded, dtype=bool)
        if not len(self.scores) == len(self.labels) == len(self.excluded):
            raise InvalidArgumentError("scores, labels and exclusion mask differ in length")

    @property
    def active(self) -> np.ndarray:
        return ~self.excluded


@dataclass
class WindowScore:
    domain: str
    window_id: str
    scores: np.ndarray
    labels: np.ndarray


def anomaly_score(window: PatchedWindow, reconstruction: np.ndarray) -> np.ndarray:
    """Squared reconstruction error per observed timestep, in standardized space."""
    reconstruction = np.asarray(reconstruction, dtype=np.float64)
    if reconstruction.shape != window.patches.shape:
        raise InvalidArgumentError(
            f"reconstruction shape {reconstruction.shape} differs from patches {window.patches.shape}"
        )
    n = window.n_observed
    return ((window.patches[:n] - reconstruction[:n]) ** 2).reshape(-1)


def _binary_inputs(s: ScoredSeries):
    scores = s.scores[s.active]
    labels = s.labels[s.active]
    positives = int(labels.sum())
    if positives == 0 or positives == len(labels):
        raise UndefinedMetricError(
            f"series {s.series_id or '?'} needs positive and negative labels",
            series_id=s.series_id,
        )
    return scores, labels


def auc_roc(s: ScoredSeries) -> float:
    scores, labels = _binary_inputs(s)
    return float(roc_auc_score(labels, scores))


def auc_pr(s: ScoredSeries) -> float:
    scores, labels = _binary_inputs(s)
    return float(average_precision_score(labels, scores))


def _ramp(delta: int, ell: int, shape: BufferShape) -> float:
    weight = 1.0 - delta / (ell + 1.0)
    return math.sqrt(weight) if BufferShape(shape) == BufferShape.SQRT else weight


def label_buffer_transform(labels: np.ndarray, ell: int,
                           shape: BufferShape = BufferShape.LINEAR) -> np.ndarray:
    """Soften each anomaly range by ``ell`` positions per side; overlaps keep the larger weight."""
    if ell < 0:
        raise InvalidArgumentError(f"buffer width must be non-negative, got {ell}")
    labels = np.asarray(labels, dtype=np.float64)
    out = labels.copy()
    for delta in range(1, min(ell, len(labels) - 1) + 1):
        weight = _ramp(delta, ell, shape)
        out[delta:] = np.maximum(out[delta:], weight * labels[:-delta])
        out[:-delta] = np.maximum(out[:-delta], weight * labels[delta:])
    return out


def _weighted_curve_inputs(scores: np.ndarray, weights: np.ndarray):
    # every timestep counts as a positive with weight w and a negative with weight 1 - w
    y = np.concatenate([np.ones(len(scores)), np.zeros(len(scores))])
    s = np.concatenate([scores, scores])
    w = np.concatenate([weights, 1.0 - weights])
    keep = w > 0
    return y[keep], s[keep], w[keep]


def weighted_auc(scores: np.ndarray, weights: np.ndarray, kind: MetricKind) -> float:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.sum() <= 0 or (1.0 - weights).sum() <= 0:
        raise UndefinedMetricError("continuous labels need positive and negative mass")
    y, s, w = _weighted_curve_inputs(np.asarray(scores, dtype=np.float64), weights)
    if MetricKind(kind) == MetricKind.ROC:
        return float(roc_auc_score(y, s, sample_weight=w))
    return float(average_precision_score(y, s, sample_weight=w))


def anomaly_ranges(labels: np.ndarray) -> List[tuple]:
    padded = np.concatenate([[0], np.asarray(labels, dtype=np.int64), [0]])
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[0::2], edges[1::2]))


def default_ell_max(labels: np.ndarray, min_ell_max: int = 4) -> int:
    lengths = [end - start for start, end in anomaly_ranges(labels)]
    if not lengths:
        return min_ell_max
    return max(min_ell_max, int(math.ceil(float(np.median(lengths)))))


def vus(s: ScoredSeries, ell_max: Optional[int] = None, kind: MetricKind = MetricKind.PR,
        shape: BufferShape = BufferShape.LINEAR, min_ell_max: int = 4) -> float:
    """Mean buffered-label AUC over buffer widths 0..ell_max."""
    if ell_max is None:
        ell_max = default_ell_max(s.labels, min_ell_max)
    if ell_max < 0:
        raise InvalidArgumentError(f"ell_max must be non-negative, got {ell_max}")
    if s.labels[s.active].sum() == 0:
        raise UndefinedMetricError(f"series {s.series_id or '?'} has no positive labels",
                                   series_id=s.series_id)
    scores = s.scores[s.active]
    slices = []
    for ell in range(ell_max + 1):
        # buffer over the full series so ramps can cross excluded gaps
        weights = label_buffer_transform(s.labels, ell, shape)[s.active]
        slices.append(weighted_auc(scores, weights, kind))
    return float(np.mean(slices))


def series_metrics(s: ScoredSeries, config: Optional[MetricConfig] = None) -> SeriesMetrics:
    """All four metrics as percentages; undefined ones stay NaN."""
    config = config or MetricConfig()
    result = SeriesMetrics(series_id=s.series_id, dataset=s.dataset, subdomain=s.subdomain)
    computations = {
        "auc_pr": lambda: auc_pr(s),
        "auc_roc": lambda: auc_roc(s),
        "vus_pr": lambda: vus(s, config.ell_max, MetricKind.PR, config.buffer_shape, config.min_ell_max),
        "vus_roc": lambda: vus(s, config.ell_max, MetricKind.ROC, config.buffer_shape, config.min_ell_max),
    }
    for name, compute in computations.items():
        try:
            setattr(result, name, round(100.0 * compute(), 2))
        except UndefinedMetricError as e:
            logger.warning("Undefined metric", series_id=s.series_id, metric=name, reason=e.message)
    return result


def _nanmean(values: Sequence[float]) -> float:
    finite = [v for v in values if not math.isnan(v)]
    return round(float(np.mean(finite)), 2) if finite else math.nan


def _summary(dataset: str, subdomain: str, rows: Sequence[SeriesMetrics]) -> DomainMetrics:
    return DomainMetrics(
        dataset=dataset, subdomain=subdomain, n_series=len(rows),
        **{name: _nanmean([getattr(r, name) for r in rows]) for name in METRIC_NAMES},
    )


def aggregate(series: Sequence[SeriesMetrics]) -> EvalReport:
    """Unweighted per-domain and corpus means; NaN entries are skipped."""
    groups: Dict[tuple, List[SeriesMetrics]] = {}
    for row in series:
        groups.setdefault(row.domain, []).append(row)
    domains = [_summary(dataset, subdomain, rows) for (dataset, subdomain), rows in groups.items()]
    n_undefined = sum(1 for r in series if any(math.isnan(getattr(r, n)) for n in METRIC_NAMES))
    if n_undefined:
        logger.warning("Series with undefined metrics", n_undefined=n_undefined)
    return EvalReport(series=list(series), domains=domains,
                      corpus=_summary("*", "*", series), n_undefined=n_undefined)


def report_to_frame(report: EvalReport) -> pd.DataFrame:
    rows = [r.model_dump(include=set(REPORT_COLUMNS)) for r in report.series]
    for d in report.domains:
        rows.append({"series_id": DOMAIN_MEAN, "dataset": d.dataset, "subdomain": d.subdomain,
                     **{n: getattr(d, n) for n in METRIC_NAMES}})
    rows.append({"series_id": CORPUS_MEAN, "dataset": "*", "subdomain": "*",
                 **{n: getattr(report.corpus, n) for n in METRIC_NAMES}})
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def domain_table(reports: Mapping[str, EvalReport], metric: str = "vus_pr") -> pd.DataFrame:
    """Wide table: one row per (dataset, subdomain), one column per configuration."""
    if metric not in METRIC_NAMES:
        raise InvalidArgumentError(f"unknown metric {metric}")
    columns: Dict[str, pd.Series] = {}
    for name, report in reports.items():
        index = pd.MultiIndex.from_tuples([(d.dataset, d.subdomain) for d in report.domains],
                                          names=["dataset", "subdomain"])
        columns[name] = pd.Series([getattr(d, metric) for d in report.domains], index=index)
    table = pd.DataFrame(columns).reset_index()
    means = {"dataset": "mean", "subdomain": "*",
             **{name: round(float(table[name].mean()), 2) for name in reports}}
    return pd.concat([table, pd.DataFrame([means])], ignore_index=True)


def score_distribution_export(windows: Sequence[WindowScore]) -> pd.DataFrame:
    """One row per window: max timestep score and whether any timestep is labeled anomalous."""
    rows = [{
        "domain": w.domain,
        "window_id": w.window_id,
        "is_anomalous": int(np.any(np.asarray(w.labels) > 0)),
        "score": float(np.max(w.scores)) if len(w.scores) else math.nan,
    } for w in windows]
    return pd.DataFrame(rows, columns=["domain", "window_id", "is_anomalous", "score"])
