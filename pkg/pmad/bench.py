"""Training, context switching, inference and size accounting for the four PMM x training-mode configurations."""
from pathlib import Path
from typing import List, Optional, Sequence
import tempfile
import time
import pandas as pd
import structlog
from .checkpoint import load_checkpoint, save_checkpoint
from .evaluation import score_series
from .exceptions import InvalidArgumentError
from .ingest import SeriesRecord
from .schemas import MemoryStrategy, TrainConfig, TrainMode
from .training import TrainingRun, train, train_per_dataset

logger = structlog.get_logger()

EFFICIENCY_COLUMNS = [
    "configuration", "pmm", "multi_domain", "n_checkpoints", "training_s",
    "context_switching_s", "total_training_s", "inference_s", "model_size_bytes", "model_size_gb",
]

CONFIGURATIONS = [
    ("PMM + multi-domain", True, True),
    ("w/o PMM", False, True),
    ("w/o multi-domain training", True, False),
    ("w/o PMM & multi-domain training", False, False),
]


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in name.lower()).strip("_")


def _measure(name: str, pmm: bool, multi_domain: bool, corpus: Sequence[SeriesRecord],
             cfg: TrainConfig, workdir: Path) -> dict:
    if not pmm:
        strategy = MemoryStrategy.NONE
    else:
        strategy = cfg.memory_strategy if cfg.uses_memory else MemoryStrategy.DATA_DRIVEN
    mode = TrainMode.MULTI_DOMAIN if multi_domain else TrainMode.PER_DATASET
    run_cfg = cfg.model_copy(update={"memory_strategy": strategy, "mode": mode})

    tick = time.perf_counter()
    runs: List[TrainingRun] = [train(corpus, run_cfg)] if multi_domain else train_per_dataset(corpus, run_cfg)
    training_s = time.perf_counter() - tick

    # each series is scored by the model that owns it
    if multi_domain:
        assignments = [(runs[0], list(corpus))]
    else:
        assignments = [(run, [record]) for run, record in zip(runs, corpus)]

    switching_s = inference_s = 0.0
    size = 0
    for i, (run, records) in enumerate(assignments):
        path = workdir / _slug(name) / f"model_{i:03d}.pmad"
        tick = time.perf_counter()
        save_checkpoint(run.model, run.domain_index, run.config, path)
        loaded = load_checkpoint(path)
        switching_s += time.perf_counter() - tick
        size += path.stat().st_size

        tick = time.perf_counter()
        for record in records:
            score_series(loaded.model, record, run_cfg, loaded.domain_index.get(record.domain))
        inference_s += time.perf_counter() - tick

    row = {
        "configuration": name, "pmm": pmm, "multi_domain": multi_domain,
        "n_checkpoints": len(assignments), "training_s": round(training_s, 3),
        "context_switching_s": round(switching_s, 3),
        "total_training_s": round(training_s + switching_s, 3),
        "inference_s": round(inference_s, 3), "model_size_bytes": size,
        "model_size_gb": size / 1e9,
    }
    logger.info("Efficiency configuration measured", **row)
    return row


def efficiency_report(corpus: Sequence[SeriesRecord], cfg: TrainConfig,
                      workdir: Optional[Path] = None) -> pd.DataFrame:
    if len(corpus) < 2:
        raise InvalidArgumentError("efficiency accounting needs at least two series")
    if workdir is not None:
        return pd.DataFrame([_measure(n, p, m, corpus, cfg, Path(workdir)) for n, p, m in CONFIGURATIONS],
                            columns=EFFICIENCY_COLUMNS)
    with tempfile.TemporaryDirectory(prefix="pmad-bench-") as tmp:
        return pd.DataFrame([_measure(n, p, m, corpus, cfg, Path(tmp)) for n, p, m in CONFIGURATIONS],
                            columns=EFFICIENCY_COLUMNS)
