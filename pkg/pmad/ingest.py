"""Benchmark-style CSV ingestion, windowing, standardization and patching."""
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple
import re
import numpy as np
import pandas as pd
import structlog
from .exceptions import InvalidArgumentError, LoadError, ParseError

logger = structlog.get_logger()

LABEL_COLUMN = "Label"
VALUE_COLUMN = "Data"

_FILENAME_PATTERN = re.compile(
    r"^(?P<index>\d+)_(?P<dataset>[^_]+)_id_(?P<id>[^_]+)_(?:.*_)?(?P<subdomain>[^_]+)"
    r"_tr_(?P<train_len>[^_]+)_1st_(?P<first>[^_.]+)\.csv$"
)

Domain = Tuple[str, str]


@dataclass
class SeriesRecord:
    values: np.ndarray
    labels: np.ndarray
    dataset: str
    subdomain: str
    train_len: int
    first_anomaly: int
    source_file: str = ""
    test_start: Optional[int] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.values) != len(self.labels):
            raise InvalidArgumentError("values and labels differ in length")
        if self.test_start is None:
            self.test_start = self.train_len
        if not 0 < self.train_len < len(self.values):
            raise InvalidArgumentError(
                f"train_len {self.train_len} outside (0, {len(self.values)})"
            )

    @property
    def domain(self) -> Domain:
        return (self.dataset, self.subdomain)

    @property
    def series_id(self) -> str:
        return Path(self.source_file).stem if self.source_file else f"{self.dataset}_{self.subdomain}"

    @property
    def train_values(self) -> np.ndarray:
        return self.values[:self.train_len]

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class RawWindow:
    start: int
    values: np.ndarray


@dataclass
class PatchedWindow:
    patches: np.ndarray
    mask: np.ndarray
    origin: Tuple[str, int]
    norm_stats: Tuple[float, float]

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())

    @property
    def n_points(self) -> int:
        return self.n_observed * self.patches.shape[1]


@dataclass
class DomainIndex:
    labels: List[Domain] = field(default_factory=list)

    def __post_init__(self):
        self.ids: Dict[Domain, int] = {label: i for i, label in enumerate(self.labels)}
        if len(self.ids) != len(self.labels):
            raise InvalidArgumentError("domain labels must be unique")

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: Domain) -> bool:
        return label in self.ids

    def id_of(self, label: Domain) -> int:
        return self.ids[label]

    def get(self, label: Domain) -> Optional[int]:
        return self.ids.get(label)


def parse_filename(name: str) -> Tuple[str, str, int, int]:
    """Split ``{index}_{Dataset}_id_{id}_{Subdomain}_tr_{n}_1st_{m}.csv``."""
    base = Path(name).name
    match = _FILENAME_PATTERN.match(base)
    if not match:
        raise ParseError("Filename does not follow the benchmark convention", base)
    try:
        train_len = int(match.group("train_len"))
        first = int(match.group("first"))
    except ValueError:
        raise ParseError("Non-numeric train length or first-anomaly index", base)
    return match.group("dataset"), match.group("subdomain"), train_len, first


def format_filename(index: int, dataset: str, series_id: int, subdomain: str,
                    train_len: int, first_anomaly: int) -> str:
    return f"{index:03d}_{dataset}_id_{series_id}_{subdomain}_tr_{train_len}_1st_{first_anomaly}.csv"


def load_series(path) -> SeriesRecord:
    path = str(path)
    dataset, subdomain, train_len, first = parse_filename(path)
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise LoadError(f"Unreadable CSV ({e})", path)

    if LABEL_COLUMN not in frame.columns:
        raise LoadError(f"Missing '{LABEL_COLUMN}' column", path)
    value_columns = [c for c in frame.columns if c != LABEL_COLUMN]
    if not value_columns:
        raise LoadError("Missing value column", path)

    values = pd.to_numeric(frame[value_columns[0]], errors="coerce").to_numpy(dtype=np.float64)
    labels = pd.to_numeric(frame[LABEL_COLUMN], errors="coerce").to_numpy(dtype=np.float64)

    # rows are 1-based and count the header as row 0
    bad_values = np.flatnonzero(~np.isfinite(values))
    if bad_values.size:
        raise LoadError("Non-finite value", path, row=int(bad_values[0]) + 1)
    bad_labels = np.flatnonzero(~np.isin(labels, (0.0, 1.0)))
    if bad_labels.size:
        raise LoadError("Non-binary label", path, row=int(bad_labels[0]) + 1)

    try:
        return SeriesRecord(values, labels.astype(np.int64), dataset, subdomain,
                            train_len, first, source_file=path)
    except InvalidArgumentError as e:
        raise LoadError(e.message, path)


def write_series(record: SeriesRecord, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({VALUE_COLUMN: record.values, LABEL_COLUMN: record.labels})
    frame.to_csv(path, index=False)
    return path


def load_corpus(data_dir) -> List[SeriesRecord]:
    files = sorted(Path(data_dir).glob("*.csv"))
    if not files:
        raise LoadError("No CSV files found", str(data_dir))
    records = [load_series(p) for p in files]
    logger.info("Corpus loaded", data_dir=str(data_dir), n_series=len(records))
    return records


def window_series(values: np.ndarray, win: int, patch_len: int = 8, offset: int = 0) -> List[RawWindow]:
    """Non-overlapping windows; a trailing segment shorter than one patch is dropped."""
    if win <= 0:
        raise InvalidArgumentError(f"window length must be positive, got {win}")
    values = np.asarray(values, dtype=np.float64)
    windows = []
    for start in range(0, len(values), win):
        segment = values[start:start + win]
        if len(segment) < patch_len:
            continue
        windows.append(RawWindow(offset + start, segment))
    return windows


def window_record(record: SeriesRecord, win: int, patch_len: int = 8, split: str = "all") -> List[RawWindow]:
    if split == "train":
        return window_series(record.values[:record.train_len], win, patch_len)
    if split == "test":
        return window_series(record.values[record.test_start:], win, patch_len, offset=record.test_start)
    return window_series(record.values, win, patch_len)


def standardize(window: np.ndarray, eps: float = 1e-8) -> Tuple[np.ndarray, Tuple[float, float]]:
    window = np.asarray(window, dtype=np.float64)
    if window.size == 0:
        raise InvalidArgumentError("cannot standardize an empty window")
    mean = float(window.mean())
    std = float(window.std())
    return (window - mean) / max(std, eps), (mean, std)


def patchify(window: np.ndarray, patch_len: int = 8, n_patches: int = 64,
             origin: Tuple[str, int] = ("", 0), norm_stats: Tuple[float, float] = (0.0, 1.0)) -> PatchedWindow:
    window = np.asarray(window, dtype=np.float64)
    if len(window) < patch_len:
        raise InvalidArgumentError(f"window of {len(window)} points is shorter than one patch")
    if len(window) > patch_len * n_patches:
        raise InvalidArgumentError(
            f"window of {len(window)} points exceeds {n_patches} patches of {patch_len}"
        )
    n_observed = len(window) // patch_len
    patches = np.zeros((n_patches, patch_len), dtype=np.float64)
    patches[:n_observed] = window[:n_observed * patch_len].reshape(n_observed, patch_len)
    mask = np.zeros(n_patches, dtype=bool)
    mask[:n_observed] = True
    return PatchedWindow(patches, mask, origin, norm_stats)


def unpatchify(window: PatchedWindow) -> np.ndarray:
    return window.patches[:window.n_observed].reshape(-1)


def prepare_windows(record: SeriesRecord, win: int, patch_len: int, n_patches: int,
                    split: str = "all", eps: float = 1e-8) -> List[PatchedWindow]:
    prepared = []
    for raw in window_record(record, win, patch_len, split):
        values, stats = standardize(raw.values, eps)
        prepared.append(patchify(values, patch_len, n_patches, (record.series_id, raw.start), stats))
    return prepared


def build_domain_index(records: Sequence[SeriesRecord]) -> DomainIndex:
    if not records:
        raise InvalidArgumentError("cannot index an empty corpus")
    labels: List[Domain] = []
    for record in records:
        if record.domain not in labels:
            labels.append(record.domain)
    return DomainIndex(labels)


def group_by_domain(records: Iterable[SeriesRecord]) -> Dict[Domain, List[SeriesRecord]]:
    groups: Dict[Domain, List[SeriesRecord]] = {}
    for record in records:
        groups.setdefault(record.domain, []).append(record)
    return groups


def truncate_training(record: SeriesRecord, train_len: int) -> SeriesRecord:
    """Keep the leading ``train_len`` training points; the test region is untouched."""
    return replace(record, train_len=train_len, test_start=record.test_start)
