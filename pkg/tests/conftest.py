import pytest
import numpy as np
import torch
from pmad.ingest import write_series
from pmad.schemas import TrainConfig
from tests.factories import SeriesRecordFactory


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run trend-level experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: trend-level experiment, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def tiny_config():
    return TrainConfig(
        window=64, patch_len=8, n_patches=8, d_model=16, d_ff=32, n_layers=1,
        n_heads=2, d_hidden=32, epochs=1, batch_size=4, lr=1e-3, seed=0,
        samples_per_domain=2,
    )


@pytest.fixture
def small_corpus():
    """Three domains with two series each."""
    SeriesRecordFactory.reset_sequence()
    records = []
    for subdomain, period in (("Sine", 16), ("Saw", 32), ("Slow", 64)):
        records.extend(SeriesRecordFactory.create_batch(2, subdomain=subdomain, period=period))
    return records


@pytest.fixture
def corpus_dir(tmp_path, small_corpus):
    data = tmp_path / "data"
    for record in small_corpus:
        write_series(record, data / record.source_file)
    return data


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def generator():
    return torch.Generator().manual_seed(1234)
