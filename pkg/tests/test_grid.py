import pytest
import pandas as pd
from pmad import training
from pmad.grid import GridCell, results_frame, run_cell, run_grid, summarize_seeds
from pmad.schemas import MetricConfig, TrainMode


@pytest.fixture
def train_calls(monkeypatch):
    """Record (n_series, n_items) for every training run."""
    calls = []
    real_train = training.train

    def spy(corpus, cfg, *args, **kwargs):
        run = real_train(corpus, cfg, *args, **kwargs)
        calls.append((len(corpus), run.model.memory.n_items))
        return run

    monkeypatch.setattr(training, "train", spy)
    return calls


def test_per_dataset_cell_trains_one_model_per_series(train_calls, small_corpus, tiny_config):
    """Test a per-dataset cell trains a single-item model for each series"""
    corpus = small_corpus[:4]
    cell = GridCell("per series", tiny_config.model_copy(update={"mode": TrainMode.PER_DATASET}))
    result = run_cell(cell, corpus, MetricConfig())
    assert train_calls == [(1, 1)] * 4
    assert [s.series_id for s in result.report.series] == [r.series_id for r in corpus]


def test_multi_domain_cell_trains_one_joint_model(train_calls, small_corpus, tiny_config):
    """Test a multi-domain cell trains one model over every series"""
    result = run_cell(GridCell("joint", tiny_config), small_corpus[:4], MetricConfig())
    assert train_calls == [(4, 2)]
    assert len(result.report.series) == 4


def test_results_keep_cell_order(small_corpus, tiny_config):
    """Test serial grids return one row per cell in order"""
    cells = [GridCell(f"seed {s}", tiny_config.model_copy(update={"seed": s}), {"variant": "a"}) for s in (0, 1)]
    frame = results_frame(run_grid(cells, small_corpus[:4]))
    assert list(frame["configuration"]) == ["seed 0", "seed 1"]
    assert list(frame["seed"]) == [0, 1]


def test_summarize_seeds_mean_and_median():
    """Test seed summaries report count, mean and median per key"""
    frame = pd.DataFrame({
        "configuration": ["a", "a", "a", "b"],
        "seed": [0, 1, 2, 0],
        "auc_pr": [10.0, 20.0, 60.0, 5.0],
        "auc_roc": [50.0, 50.0, 50.0, 50.0],
        "vus_pr": [1.0, 2.0, 3.0, 4.0],
        "vus_roc": [1.0, 1.0, 1.0, 1.0],
    })
    table = summarize_seeds(frame, ["configuration"]).set_index("configuration")
    assert table.loc["a", "n_seeds"] == 3
    assert table.loc["a", "auc_pr"] == 30.0
    assert table.loc["a", "auc_pr_median"] == 20.0
    assert table.loc["b", "n_seeds"] == 1
