"""Time-series data model, CSV ingestion, missing-value repair and batching."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, ParseError, UnprocessableVariableError

MISSING_TOKENS = {"", "nan", "NaN", "NAN", "na", "NA"}


@dataclass
class SeriesInstance:
    """One multivariate series of shape (n variables, T steps)."""

    values: np.ndarray
    missing: np.ndarray | None = None
    domain_tag: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2:
            raise DimensionError(f"values must be 2-D (n, T), got shape {v.shape}")
        n, T = v.shape
        if n < 1 or T < 2:
            raise DimensionError(f"need n >= 1 and T >= 2, got n={n}, T={T}")
        self.values = v
        if self.missing is not None:
            m = np.asarray(self.missing, dtype=bool)
            if m.ndim == 1:
                m = m[None, :]
            if m.shape != v.shape:
                raise DimensionError(f"mask shape {m.shape} != values shape {v.shape}")
            self.missing = m if m.any() else None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @property
    def has_missing(self) -> bool:
        return self.missing is not None and bool(self.missing.any())

    def missing_rate(self) -> float:
        return float(self.missing.mean()) if self.has_missing else 0.0


@dataclass
class Batch:
    instances: list[SeriesInstance]
    batch_index: int

    def __post_init__(self):
        lengths = {inst.T for inst in self.instances}
        if len(lengths) > 1:
            raise DimensionError(f"instances in a batch must share T, got {sorted(lengths)}")

    @property
    def T(self) -> int:
        return self.instances[0].T

    def __len__(self):
        return len(self.instances)


@dataclass
class DatasetManifest:
    entries: list[tuple[Path, str]]
    shuffle_seed: int = 0
    batch_size: int | None = None


def load_csv(path, domain_tag: str = "") -> SeriesInstance:
    """Read a wide CSV: header names the variables, one row per timestep."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file", row=1)
    header = rows[0]
    ncol = len(header)
    if ncol == 0 or any(not h.strip() for h in header):
        raise ParseError(f"{path}: header must name every column", row=1)
    body = rows[1:]
    while body and not body[-1]:
        body.pop()
    # a blank line is an empty cell in a one-column file, noise otherwise
    body = [[""] if ncol == 1 and not r else r for r in body if r or ncol == 1]
    if len(body) < 2:
        raise DimensionError(f"{path}: need at least 2 timesteps, got {len(body)}")
    values = np.empty((ncol, len(body)))
    missing = np.zeros((ncol, len(body)), dtype=bool)
    for t, row in enumerate(body):
        rowno = t + 2
        if len(row) != ncol:
            raise ParseError(f"{path}: expected {ncol} cells, got {len(row)}", row=rowno,
                             column=min(len(row), ncol) + 1)
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell in MISSING_TOKENS:
                missing[j, t] = True
                values[j, t] = np.nan
                continue
            try:
                values[j, t] = float(cell)
            except ValueError:
                raise ParseError(f"{path}: not a number: {cell!r}", row=rowno, column=j + 1) from None
            if not math.isfinite(values[j, t]):
                missing[j, t] = True
                values[j, t] = np.nan
    return SeriesInstance(values, missing if missing.any() else None, domain_tag or path.stem)


def write_csv(inst: SeriesInstance, path, names: Sequence[str] | None = None) -> None:
    names = list(names) if names is not None else [f"v{i}" for i in range(inst.n)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for t in range(inst.T):
            w.writerow([repr(float(v)) for v in inst.values[:, t]])


def read_header(path) -> list[str]:
    with Path(path).open(newline="") as fh:
        return next(csv.reader(fh))


def _centered_moving_average(x: np.ndarray, window: int) -> np.ndarray:
    # direct windowed sums: a running cumsum would lose precision on long series
    T = x.shape[-1]
    kernel = np.ones(window)
    right = window // 2
    sums = np.convolve(x, kernel)[right:right + T]
    counts = np.convolve(np.ones(T), kernel)[right:right + T]
    return sums / counts


def preprocess(inst: SeriesInstance, ma_window: int = 10) -> SeriesInstance:
    """Repair missing entries by linear interpolation, then smooth.

    Smoothing (centered moving average, truncated at the edges) is only applied
    to instances that actually had missing values; clean instances are returned
    bit-identical.
    """
    if ma_window < 1:
        raise ConfigError(f"ma_window must be >= 1, got {ma_window}")
    if not inst.has_missing:
        return replace(inst, values=inst.values.copy(), missing=None)
    out = inst.values.copy()
    t = np.arange(inst.T)
    for i in range(inst.n):
        miss = inst.missing[i]
        if miss.all():
            raise UnprocessableVariableError(f"variable {i} of '{inst.domain_tag}' has no observed values")
        if miss.any():
            out[i, miss] = np.interp(t[miss], t[~miss], out[i, ~miss])
    for i in range(inst.n):
        out[i] = _centered_moving_average(out[i], ma_window)
    return SeriesInstance(out, None, inst.domain_tag)


def cyclic_extend(x: np.ndarray, length: int) -> np.ndarray:
    """Repeat ``x`` along its last axis until it has ``length`` samples."""
    T = x.shape[-1]
    reps = -(-length // T)
    return np.concatenate([x] * reps, axis=-1)[..., :length]


def _equalize(instances: list[SeriesInstance]) -> list[SeriesInstance]:
    T = max(inst.T for inst in instances)
    out = []
    for inst in instances:
        if inst.T == T:
            out.append(inst)
            continue
        miss = None if inst.missing is None else cyclic_extend(inst.missing, T)
        out.append(SeriesInstance(cyclic_extend(inst.values, T), miss, inst.domain_tag))
    return out


def batches_from_datasets(datasets: Iterable[Sequence[SeriesInstance]], batch_size: int,
                          seed: int) -> list[Batch]:
    """Partition every dataset into batches, then shuffle across datasets.

    ``batch_index`` is the pre-shuffle position, so the multiset of batches
    does not depend on the seed; only their order does.
    """
    if batch_size < 1:
        raise ConfigError("batch_size must be positive")
    batches = []
    for ds in datasets:
        ds = list(ds)
        for start in range(0, len(ds), batch_size):
            batches.append(Batch(_equalize(ds[start:start + batch_size]), len(batches)))
    if not batches:
        raise ConfigError("no data: every dataset is empty")
    order = np.random.default_rng(seed).permutation(len(batches))
    return [batches[i] for i in order]


def _load_entry(path: Path, tag: str) -> list[SeriesInstance]:
    if path.is_dir():
        files = sorted(path.glob("*.csv"))
        return [load_csv(f, tag) for f in files]
    return [load_csv(path, tag)]


def make_batches(manifest: DatasetManifest, batch_size: int) -> list[Batch]:
    if not manifest.entries:
        raise ConfigError("empty manifest")
    datasets = [_load_entry(Path(p), tag) for p, tag in manifest.entries]
    return batches_from_datasets(datasets, batch_size, manifest.shuffle_seed)


def read_manifest(path) -> DatasetManifest:
    """Parse ``path,domain_tag`` lines plus ``seed=<int>`` (``#`` starts a comment).

    Each entry is a CSV file (one instance) or a directory of CSV files, one
    instance per file. Relative paths resolve against the manifest's folder.
    """
    path = Path(path)
    base = path.parent
    entries = []
    seed = 0
    batch_size = None
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line and "," not in line:
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in ("seed", "batch_size"):
                raise ParseError(f"{path}: unknown setting {key!r}", row=lineno)
            try:
                number = int(val)
            except ValueError:
                raise ParseError(f"{path}: bad integer {val.strip()!r}", row=lineno) from None
            if key == "seed":
                seed = number
            else:
                batch_size = number
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2 or not parts[0]:
            raise ParseError(f"{path}: expected 'path,domain_tag'", row=lineno)
        p = Path(parts[0])
        entries.append((p if p.is_absolute() else base / p, parts[1]))
    return DatasetManifest(entries, seed, batch_size)


def flatten_variables(instances: Sequence[SeriesInstance]) -> tuple[np.ndarray, np.ndarray]:
    """Stack every variable as an independent univariate row.

    Returns ``(rows, owner)`` where ``owner[r]`` is the instance index of row r.
    """
    rows = np.concatenate([inst.values for inst in instances], axis=0)
    owner = np.concatenate([np.full(inst.n, j) for j, inst in enumerate(instances)])
    return rows, owner
