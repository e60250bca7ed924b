"""Independent train-then-evaluate cells, optionally fanned out over worker processes."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence
import pandas as pd
import structlog
from .ingest import SeriesRecord
from .metrics import METRIC_NAMES
from .schemas import EvalReport, MetricConfig, TrainConfig, TrainMode

logger = structlog.get_logger()


@dataclass
class GridCell:
    name: str
    config: TrainConfig
    labels: Dict[str, Any] = field(default_factory=dict)


@dataclass
class CellResult:
    cell: GridCell
    report: EvalReport


def run_cell(cell: GridCell, corpus: Sequence[SeriesRecord], metric_cfg: MetricConfig) -> CellResult:
    # local import keeps worker start-up light
    from .evaluation import evaluate_models
    from .training import train, train_per_dataset

    logger.info("Grid cell started", cell=cell.name, seed=cell.config.seed, mode=cell.config.mode.value)
    if cell.config.mode == TrainMode.PER_DATASET:
        runs = train_per_dataset(corpus, cell.config)
        assignments = [(run.model, run.domain_index, [record], cell.config) for run, record in zip(runs, corpus)]
    else:
        run = train(corpus, cell.config)
        assignments = [(run.model, run.domain_index, list(corpus), cell.config)]
    result = evaluate_models(assignments, metric_cfg)
    logger.info("Grid cell finished", cell=cell.name, seed=cell.config.seed,
                auc_pr=result.report.corpus.auc_pr, auc_roc=result.report.corpus.auc_roc)
    return CellResult(cell, result.report)


def run_grid(cells: Sequence[GridCell], corpus: Sequence[SeriesRecord],
             metric_cfg: Optional[MetricConfig] = None, threads: int = 1) -> List[CellResult]:
    """Results come back in cell order whatever the worker count."""
    metric_cfg = metric_cfg or MetricConfig()
    if threads <= 1 or len(cells) <= 1:
        return [run_cell(cell, corpus, metric_cfg) for cell in cells]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(run_cell, cell, corpus, metric_cfg) for cell in cells]
        return [f.result() for f in futures]


def results_frame(results: Sequence[CellResult]) -> pd.DataFrame:
    rows = []
    for result in results:
        corpus = result.report.corpus
        rows.append({"configuration": result.cell.name, **result.cell.labels,
                     "seed": result.cell.config.seed,
                     **{name: getattr(corpus, name) for name in METRIC_NAMES}})
    return pd.DataFrame(rows)


def summarize_seeds(frame: pd.DataFrame, keys: Sequence[str]) -> pd.DataFrame:
    """Mean and median of every metric across seeds, one row per key combination."""
    grouped = frame.groupby(list(keys), sort=False, dropna=False)
    means = grouped[METRIC_NAMES].mean().round(2)
    medians = grouped[METRIC_NAMES].median().round(2).add_suffix("_median")
    counts = grouped["seed"].nunique().rename("n_seeds")
    return pd.concat([counts, means, medians], axis=1).reset_index()
