"""Binned multi-mark signal datasets: CSV parsing, labeling, splits, synthesis.

On-disk format is plain CSV (UTF-8, LF, '.' decimal separator), one row per
(gene, bin)::

    gene_id,bin,<mark_1>,...,<mark_N>,expression

Bins run 0..n_bins-1, contiguous and ascending within each gene, and the
gene's raw expression value is repeated on every one of its rows.  Lines
starting with ``#`` are comments and are ignored (CLI outputs prepend a
``# config:`` provenance block).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataFormatError, DegenerateDataError, DimensionError
from .fileio import atomic_write_text
from .validation import LABELS

LABEL_LOW, LABEL_HIGH = LABELS


@dataclass(frozen=True, eq=False)
class GeneSample:
    """One gene: a (marks x bins) signal matrix, raw expression, optional label."""

    gene_id: str
    signal: np.ndarray
    raw_expression: float
    label: int | None = None

    def __post_init__(self):
        sig = np.asarray(self.signal, dtype=np.float64)
        if sig.ndim != 2:
            raise DimensionError(
                f"signal for {self.gene_id!r} must be 2-d, got {sig.ndim}-d"
            )
        if not np.all(np.isfinite(sig)):
            raise ValueError(f"signal for {self.gene_id!r} has non-finite entries")
        if np.any(sig < 0):
            raise ValueError(f"signal for {self.gene_id!r} has negative entries")
        if not np.isfinite(self.raw_expression):
            raise ValueError(f"expression for {self.gene_id!r} is not finite")
        if self.label is not None and self.label not in LABELS:
            raise ValueError(f"label must be -1 or +1, got {self.label!r}")
        object.__setattr__(self, "signal", sig)


@dataclass
class Dataset:
    """A collection of :class:`GeneSample` sharing one (marks, bins) layout."""

    mark_names: list[str]
    bin_count: int
    samples: list[GeneSample]
    provenance: str = ""

    def __post_init__(self):
        if not self.mark_names:
            raise DataFormatError("a dataset needs at least one mark column")
        if len(set(self.mark_names)) != len(self.mark_names):
            raise DataFormatError("mark names must be unique")
        if self.samples and self.bin_count < 1:
            raise DimensionError("bin_count must be >= 1")
        shape = (len(self.mark_names), self.bin_count)
        seen: set[str] = set()
        for s in self.samples:
            if s.signal.shape != shape:
                raise DimensionError(
                    f"gene {s.gene_id!r} has signal shape {s.signal.shape}, "
                    f"expected {shape}"
                )
            if s.gene_id in seen:
                raise DataFormatError(f"duplicate gene id {s.gene_id!r}")
            seen.add(s.gene_id)

    @property
    def n_marks(self) -> int:
        return len(self.mark_names)

    def __len__(self) -> int:
        return len(self.samples)

    def is_labeled(self) -> bool:
        return bool(self.samples) and all(s.label is not None for s in self.samples)

    def labels(self) -> np.ndarray:
        if not self.is_labeled():
            raise DegenerateDataError("dataset is not labeled")
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray | None]:
        """Stack signals into (n, marks, bins); labels come back as None if unset."""
        X = np.stack([s.signal for s in self.samples]) if self.samples else \
            np.empty((0, self.n_marks, self.bin_count))
        y = self.labels() if self.is_labeled() else None
        return X, y

    def subset(self, indices, provenance: str = "") -> "Dataset":
        return Dataset(
            mark_names=list(self.mark_names),
            bin_count=self.bin_count,
            samples=[self.samples[i] for i in indices],
            provenance=provenance or self.provenance,
        )


# ---------------------------------------------------------------------------
# CSV ingestion


def _parse_float(text: str, what: str, line_no: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise DataFormatError(
            f"line {line_no}: {what} {text!r} is not a number"
        ) from None


def parse_dataset(source, expected_marks: int | None = None) -> Dataset:
    """Read a dataset CSV from a path or text file object.

    Every schema violation raises :class:`DataFormatError` naming the
    offending 1-based line number.  ``expected_marks``, when given, pins the
    number of mark columns the header must declare.
    """
    if hasattr(source, "read"):
        return _parse_stream(source, expected_marks, provenance="<stream>")
    path = Path(source)
    with path.open("r", encoding="utf-8", newline="") as fh:
        return _parse_stream(fh, expected_marks, provenance=str(path))


def _parse_stream(fh, expected_marks, provenance) -> Dataset:
    line_no = 0
    header = None
    while header is None:
        raw = fh.readline()
        line_no += 1
        if raw == "":
            raise DataFormatError("line 1: missing header row")
        if raw.lstrip().startswith("#") or raw.strip() == "":
            continue
        header = next(csv.reader([raw]))

    if len(header) < 4:
        raise DataFormatError(
            f"line {line_no}: header needs gene_id,bin,<marks...>,expression"
        )
    if header[0] != "gene_id" or header[1] != "bin" or header[-1] != "expression":
        raise DataFormatError(
            f"line {line_no}: header must start 'gene_id,bin' and end 'expression'"
        )
    mark_names = header[2:-1]
    if expected_marks is not None and len(mark_names) != expected_marks:
        raise DataFormatError(
            f"line {line_no}: expected {expected_marks} mark columns, "
            f"found {len(mark_names)}"
        )
    if len(set(mark_names)) != len(mark_names):
        raise DataFormatError(f"line {line_no}: mark names must be unique")

    n_marks = len(mark_names)
    samples: list[GeneSample] = []
    seen: set[str] = set()
    bin_count: int | None = None

    cur_id: str | None = None
    cur_rows: list[list[float]] = []
    cur_expr = 0.0
    cur_start = 0

    def flush(end_line: int) -> None:
        nonlocal bin_count, cur_id, cur_rows
        if cur_id is None:
            return
        if bin_count is None:
            bin_count = len(cur_rows)
        elif len(cur_rows) != bin_count:
            raise DataFormatError(
                f"line {end_line}: gene {cur_id!r} has {len(cur_rows)} bins, "
                f"expected {bin_count}"
            )
        signal = np.array(cur_rows, dtype=np.float64).T  # rows are bins
        try:
            samples.append(
                GeneSample(gene_id=cur_id, signal=signal, raw_expression=cur_expr)
            )
        except ValueError as exc:
            raise DataFormatError(f"near line {cur_start}: {exc}") from None
        cur_id, cur_rows = None, []

    for raw in fh:
        line_no += 1
        if raw.lstrip().startswith("#") or raw.strip() == "":
            continue
        row = next(csv.reader([raw]))
        if len(row) != n_marks + 3:
            raise DataFormatError(
                f"line {line_no}: expected {n_marks + 3} columns, got {len(row)}"
            )
        gene_id = row[0]
        if gene_id == "":
            raise DataFormatError(f"line {line_no}: empty gene id")
        bin_text = row[1]
        try:
            bin_idx = int(bin_text)
        except ValueError:
            raise DataFormatError(
                f"line {line_no}: bin {bin_text!r} is not an integer"
            ) from None
        values = [
            _parse_float(cell, f"signal column {mark_names[j]!r}", line_no)
            for j, cell in enumerate(row[2:-1])
        ]
        expr = _parse_float(row[-1], "expression", line_no)

        if gene_id != cur_id:
            flush(line_no)
            if gene_id in seen:
                raise DataFormatError(
                    f"line {line_no}: gene id {gene_id!r} appears in more than "
                    f"one block"
                )
            seen.add(gene_id)
            cur_id, cur_expr, cur_start = gene_id, expr, line_no
            cur_rows = []
        if bin_idx != len(cur_rows):
            raise DataFormatError(
                f"line {line_no}: bin {bin_idx} out of order for gene "
                f"{gene_id!r}, expected {len(cur_rows)}"
            )
        if bin_count is not None and bin_idx >= bin_count:
            raise DataFormatError(
                f"line {line_no}: gene {gene_id!r} has more than "
                f"{bin_count} bins"
            )
        if expr != cur_expr:
            raise DataFormatError(
                f"line {line_no}: expression {expr!r} disagrees with "
                f"{cur_expr!r} earlier in gene {gene_id!r}"
            )
        cur_rows.append(values)
    flush(line_no + 1)

    return Dataset(
        mark_names=mark_names,
        bin_count=bin_count if bin_count is not None else 0,
        samples=samples,
        provenance=provenance,
    )


def format_dataset(dataset: Dataset, comment: str | None = None) -> str:
    """Render a dataset back to CSV text (the exact inverse of the parser)."""
    buf = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["gene_id", "bin"] + list(dataset.mark_names) + ["expression"])
    for s in dataset.samples:
        expr = repr(float(s.raw_expression))
        for b in range(dataset.bin_count):
            writer.writerow(
                [s.gene_id, b]
                + [repr(float(v)) for v in s.signal[:, b]]
                + [expr]
            )
    return buf.getvalue()


def write_dataset(dataset: Dataset, path, comment: str | None = None) -> None:
    atomic_write_text(path, format_dataset(dataset, comment))


# ---------------------------------------------------------------------------
# Labeling and splitting


def discretize_expression(dataset: Dataset) -> Dataset:
    """Label each gene +1 when its expression strictly exceeds the median.

    The median over an even number of genes is the mean of the two middle
    order statistics, so ties at the median always land in the -1 class.
    Returns a new dataset; the input is left untouched.
    """
    if not dataset.samples:
        raise DegenerateDataError("cannot discretize an empty dataset")
    expr = np.array([s.raw_expression for s in dataset.samples])
    median = float(np.median(expr))
    labeled = [
        replace(s, label=LABEL_HIGH if s.raw_expression > median else LABEL_LOW)
        for s in dataset.samples
    ]
    return Dataset(
        mark_names=list(dataset.mark_names),
        bin_count=dataset.bin_count,
        samples=labeled,
        provenance=dataset.provenance,
    )


@dataclass(frozen=True)
class SplitSpec:
    """Fractions for the train/validation/test folds plus a shuffle seed."""

    fractions: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    seed: int = 0

    def __post_init__(self):
        if len(self.fractions) != 3:
            raise ValueError("fractions must have exactly three entries")
        if any(f < 0 for f in self.fractions):
            raise ValueError("fractions must be non-negative")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got {sum(self.fractions)!r}")


def split_dataset(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Shuffle deterministically and cut into train/validation/test folds.

    Fold sizes are the half-up roundings of n*fraction for train and
    validation; the test fold takes whatever remains (19802 genes at equal
    thirds come out 6601/6601/6600).
    """
    n = len(dataset.samples)
    if n == 0:
        raise DegenerateDataError("cannot split an empty dataset")
    order = np.random.default_rng(spec.seed).permutation(n)
    n_train = min(n, int(np.floor(n * spec.fractions[0] + 0.5)))
    n_valid = min(n - n_train, int(np.floor(n * spec.fractions[1] + 0.5)))
    cut1, cut2 = n_train, n_train + n_valid
    base = dataset.provenance or "dataset"
    return (
        dataset.subset(order[:cut1], f"{base}[train]"),
        dataset.subset(order[cut1:cut2], f"{base}[valid]"),
        dataset.subset(order[cut2:], f"{base}[test]"),
    )


# ---------------------------------------------------------------------------
# Synthetic data


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic dataset with a planted mark/label association.

    Half the genes (rounded down) are drawn as +1: those get
    ``signal_amplitude`` added to ``high_marks`` over a centered window of
    ``center_width`` bins, the rest get it on ``low_marks``.  Optional
    half-normal noise (|N(0, noise_sigma)|) is added to every entry so
    signals stay non-negative.  Expression values are sampled from disjoint
    bands (high: [6, 10), low: [0, 4)) so that re-deriving labels from the
    written file via the median rule reproduces the planted labels exactly.
    """

    n_genes: int = 1000
    n_f: int = 5
    bins: int = 100
    high_marks: frozenset[int] = frozenset({0, 1})
    low_marks: frozenset[int] = frozenset({3, 4})
    signal_amplitude: float = 1.0
    noise_sigma: float = 0.0
    center_width: int = 10
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "high_marks", frozenset(self.high_marks))
        object.__setattr__(self, "low_marks", frozenset(self.low_marks))
        if self.n_genes < 2:
            raise ValueError("n_genes must be at least 2")
        if self.n_f < 1 or self.bins < 1:
            raise ValueError("n_f and bins must be positive")
        if not 1 <= self.center_width <= self.bins:
            raise ValueError("center_width must lie in [1, bins]")
        if not self.high_marks or not self.low_marks:
            raise ValueError("high_marks and low_marks must be non-empty")
        if self.high_marks & self.low_marks:
            raise ValueError("high_marks and low_marks must be disjoint")
        for m in self.high_marks | self.low_marks:
            if not 0 <= m < self.n_f:
                raise ValueError(f"mark index {m} outside [0, {self.n_f})")
        if self.signal_amplitude <= 0:
            raise ValueError("signal_amplitude must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")

    @property
    def center_slice(self) -> slice:
        start = self.bins // 2 - self.center_width // 2
        return slice(start, start + self.center_width)


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Draw a labeled synthetic dataset as described by ``spec``."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_genes
    template = np.full(n, LABEL_LOW, dtype=np.int64)
    template[: n // 2] = LABEL_HIGH
    labels = rng.permutation(template)

    window = spec.center_slice
    samples = []
    for i in range(n):
        signal = np.zeros((spec.n_f, spec.bins))
        planted = spec.high_marks if labels[i] == LABEL_HIGH else spec.low_marks
        signal[sorted(planted), window] += spec.signal_amplitude
        if spec.noise_sigma > 0:
            signal += np.abs(rng.normal(0.0, spec.noise_sigma, signal.shape))
        if labels[i] == LABEL_HIGH:
            expr = rng.uniform(6.0, 10.0)
        else:
            expr = rng.uniform(0.0, 4.0)
        samples.append(
            GeneSample(
                gene_id=f"g{i:05d}",
                signal=signal,
                raw_expression=float(expr),
                label=int(labels[i]),
            )
        )
    return Dataset(
        mark_names=[f"mark_{j}" for j in range(spec.n_f)],
        bin_count=spec.bins,
        samples=samples,
        provenance=f"synthetic(seed={spec.seed})",
    )


# ---------------------------------------------------------------------------
# Signal preprocessing


@dataclass(frozen=True)
class SignalTransform:
    """Optional log1p and per-mark standardization, fitted on training data.

    ``mark_means``/``mark_stds`` are per-mark statistics taken after the
    log1p step (when enabled); both are None when standardization is off.
    Works on stacked arrays of shape (n, marks, bins) or single (marks, bins)
    matrices; standardized output may be negative, which is why transforms
    are applied to arrays headed into the network rather than to datasets.
    """

    log1p: bool = False
    mark_means: tuple[float, ...] | None = None
    mark_stds: tuple[float, ...] | None = None

    def __post_init__(self):
        if (self.mark_means is None) != (self.mark_stds is None):
            raise ValueError("mark_means and mark_stds must be set together")
        if self.mark_means is not None:
            if len(self.mark_means) != len(self.mark_stds):
                raise ValueError("mark_means and mark_stds differ in length")
            if any(s <= 0 for s in self.mark_stds):
                raise ValueError("mark_stds must be positive")

    @property
    def is_identity(self) -> bool:
        return not self.log1p and self.mark_means is None

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Transform an (n, marks, bins) stack or a single (marks, bins) matrix."""
        out = np.asarray(X, dtype=np.float64)
        if self.is_identity:
            return out
        out = np.array(out, copy=True)
        if self.log1p:
            out = np.log1p(out)
        if self.mark_means is not None:
            means = np.asarray(self.mark_means)
            stds = np.asarray(self.mark_stds)
            if out.shape[-2] != means.shape[0]:
                raise DimensionError(
                    f"transform was fitted for {means.shape[0]} marks, "
                    f"input has {out.shape[-2]}"
                )
            out = (out - means[..., :, None]) / stds[..., :, None]
        return out


def fit_signal_transform(
    X: np.ndarray, log1p: bool = False, standardize: bool = False
) -> SignalTransform:
    """Fit a :class:`SignalTransform` on a training stack (n, marks, bins)."""
    if not (log1p or standardize):
        return SignalTransform()
    if not standardize:
        return SignalTransform(log1p=True)
    work = np.log1p(X) if log1p else np.asarray(X, dtype=np.float64)
    means = work.mean(axis=(0, 2))
    stds = np.maximum(work.std(axis=(0, 2)), 1e-12)
    return SignalTransform(
        log1p=log1p,
        mark_means=tuple(float(v) for v in means),
        mark_stds=tuple(float(v) for v in stds),
    )
