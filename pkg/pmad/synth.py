"""Seeded multi-domain synthetic corpus with injected, labeled anomalies."""
from pathlib import Path
from typing import List, Sequence
import numpy as np
import structlog
from .exceptions import SpecError
from .ingest import SeriesRecord, format_filename, write_series
from .schemas import AnomalyKind, AnomalyPlan, SynthKind, SynthSpec

logger = structlog.get_logger()

DATASET = "SYN"
SPIKE_SIGMAS = 6.0
LEVEL_SHIFT_SIGMAS = 3.0

# (min, max) lengths per anomaly kind
ANOMALY_LENGTHS = {
    AnomalyKind.SPIKE: (4, 8),
    AnomalyKind.LEVEL_SHIFT: (24, 48),
    AnomalyKind.FREQUENCY_CHANGE: (32, 64),
}


def validate_spec(spec: SynthSpec) -> None:
    if not 0 < spec.train_len < spec.length:
        raise SpecError(f"train_len {spec.train_len} must lie inside (0, {spec.length})")
    previous_end = spec.train_len
    for plan in sorted(spec.anomalies, key=lambda a: a.start):
        if plan.start < spec.train_len:
            raise SpecError(f"anomaly at {plan.start} falls inside the training region")
        if plan.end > spec.length:
            raise SpecError(f"anomaly [{plan.start}, {plan.end}) runs past the series end")
        if plan.start < previous_end:
            raise SpecError(f"anomaly at {plan.start} overlaps the previous one")
        previous_end = plan.end


def _periodic(kind: SynthKind, t: np.ndarray, period: float, amplitude: float) -> np.ndarray:
    if kind == SynthKind.SINE:
        return amplitude * np.sin(2.0 * np.pi * t / period)
    return amplitude * (2.0 * np.mod(t / period, 1.0) - 1.0)


def _ar_process(n: int, phi: float, amplitude: float, rng: np.random.Generator, start: float = 0.0) -> np.ndarray:
    innovations = rng.normal(0.0, amplitude * np.sqrt(1.0 - phi ** 2), n)
    out = np.empty(n)
    prev = start
    for i in range(n):
        prev = phi * prev + innovations[i]
        out[i] = prev
    return out


def generate_values(spec: SynthSpec):
    """Return (values, labels) for one series."""
    validate_spec(spec)
    rng = np.random.default_rng(spec.seed)
    t = np.arange(spec.length, dtype=np.float64)
    if spec.kind == SynthKind.AR_NOISE:
        values = _ar_process(spec.length, spec.ar_phi, spec.amplitude, rng)
    else:
        values = _periodic(spec.kind, t, spec.period, spec.amplitude)
    values = values + rng.normal(0.0, spec.noise_std, spec.length)
    labels = np.zeros(spec.length, dtype=np.int64)
    sigma = float(values[:spec.train_len].std()) or 1.0

    for plan in spec.anomalies:
        span = slice(plan.start, plan.end)
        if plan.kind == AnomalyKind.SPIKE:
            values[span] += SPIKE_SIGMAS * sigma
        elif plan.kind == AnomalyKind.LEVEL_SHIFT:
            values[span] += LEVEL_SHIFT_SIGMAS * sigma
        elif spec.kind == SynthKind.AR_NOISE:
            # flipping the sign of phi turns smooth drift into alternation
            values[span] = _ar_process(plan.length, -spec.ar_phi, spec.amplitude, rng,
                                       start=values[plan.start - 1])
        else:
            values[span] = (_periodic(spec.kind, t[span], spec.period / 2.0, spec.amplitude)
                            + rng.normal(0.0, spec.noise_std, plan.length))
        labels[span] = 1
    return values, labels


def generate_domain(specs: Sequence[SynthSpec], start_index: int = 0, dataset: str = DATASET) -> List[SeriesRecord]:
    """Series of one morphology, named so the ingestion layer reads them back unchanged."""
    if not specs:
        return []
    if len({s.kind for s in specs}) != 1:
        raise SpecError("a domain holds series of a single kind")
    records = []
    for offset, spec in enumerate(specs):
        values, labels = generate_values(spec)
        starts = [a.start for a in spec.anomalies]
        first = min(starts) if starts else spec.length
        name = format_filename(start_index + offset, dataset, offset + 1, spec.subdomain, spec.train_len, first)
        records.append(SeriesRecord(values, labels, dataset, spec.subdomain, spec.train_len, first,
                                    source_file=name))
    return records


def plan_anomalies(rng: np.random.Generator, length: int, train_len: int) -> List[AnomalyPlan]:
    """Two or three anomalies of mixed kinds, one per equal slot of the test region."""
    count = int(rng.integers(2, 4))
    kinds = [AnomalyKind(k) for k in rng.permutation([k.value for k in AnomalyKind])[:count]]
    slot = (length - train_len) // count
    plans = []
    for i, kind in enumerate(kinds):
        low, high = ANOMALY_LENGTHS[kind]
        size = int(rng.integers(low, high + 1))
        margin = 16
        start = train_len + i * slot + int(rng.integers(margin, slot - size - margin))
        plans.append(AnomalyPlan(start=start, length=size, kind=kind))
    return plans


def default_suite(seed: int = 42, n_series: int = 4, length: int = 4096, train_len: int = 2048) -> List[SeriesRecord]:
    """Sine, sawtooth and AR(1) domains with ``n_series`` series each."""
    domains = [
        dict(kind=SynthKind.SINE, period=64, noise_std=0.1),
        dict(kind=SynthKind.SAWTOOTH, period=128, noise_std=0.1),
        dict(kind=SynthKind.AR_NOISE, ar_phi=0.9, noise_std=0.0),
    ]
    records: List[SeriesRecord] = []
    for d, params in enumerate(domains):
        specs = []
        for i in range(n_series):
            rng = np.random.default_rng([seed, d, i])
            specs.append(SynthSpec(length=length, train_len=train_len,
                                   anomalies=plan_anomalies(rng, length, train_len),
                                   seed=int(rng.integers(0, 2 ** 31 - 1)), **params))
        records.extend(generate_domain(specs, start_index=len(records) + 1))
    logger.info("Synthetic suite generated", seed=seed, n_series=len(records))
    return records


def write_corpus(records: Sequence[SeriesRecord], out_dir) -> List[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [write_series(r, out_dir / r.source_file) for r in records]
    logger.info("Corpus written", out_dir=str(out_dir), n_files=len(paths))
    return paths
