"""Scoring and evaluation: per-gene scores, rank AUC, bin-influence profiles."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .errors import DegenerateDataError, DimensionError
from .fileio import atomic_write_text
from .nn import conv_forward, forward, relu
from .validation import as_label_array

if TYPE_CHECKING:  # pragma: no cover - type-only import, avoids a cycle
    from .data import Dataset
    from .training import TrainedModel


@dataclass(frozen=True)
class ScoreRecord:
    """One gene's predicted probability of the +1 class, plus its label if known."""

    gene_id: str
    score: float
    label: int | None = None


def _check_compatible(model: "TrainedModel", dataset: "Dataset") -> None:
    if list(dataset.mark_names) != list(model.mark_names):
        raise DimensionError(
            f"dataset marks {dataset.mark_names} do not match the model's "
            f"{model.mark_names}"
        )
    if dataset.bin_count != model.hyper.bins:
        raise DimensionError(
            f"dataset has {dataset.bin_count} bins, model expects "
            f"{model.hyper.bins}"
        )
    if not dataset.samples:
        raise DegenerateDataError("dataset has no samples")


def predict_scores(model: "TrainedModel", dataset: "Dataset") -> list[ScoreRecord]:
    """Score every gene: P(class +1) from an eval-mode forward pass."""
    _check_compatible(model, dataset)
    records = []
    for sample in dataset.samples:
        x = model.transform.apply(sample.signal)
        probs = forward(x, model.params, model.hyper, mode="eval").probs
        records.append(
            ScoreRecord(
                gene_id=sample.gene_id,
                score=float(probs[1]),
                label=sample.label,
            )
        )
    return records


def auc_from_scores(scores, labels) -> float:
    """Area under the ROC curve by the rank statistic, with midranks for ties.

    Equals the probability that a uniformly drawn (+1, -1) pair is ordered
    correctly, counting ties as half.  Needs both classes present.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise DimensionError(f"scores must be 1-d, got {scores.ndim}-d")
    if not np.all(np.isfinite(scores)):
        raise DimensionError("scores contain NaN or infinite values")
    labels = as_label_array(labels, scores.shape[0])
    pos = scores[labels == 1]
    neg_count = scores.shape[0] - pos.shape[0]
    if pos.shape[0] == 0 or neg_count == 0:
        raise DegenerateDataError(
            "AUC needs both classes; got a single-class label set"
        )
    order = np.sort(scores)
    lo = np.searchsorted(order, pos, side="left")
    hi = np.searchsorted(order, pos, side="right")
    midranks = 0.5 * (lo + hi + 1)  # 1-based midranks among all scores
    n_pos = pos.shape[0]
    u = midranks.sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * neg_count))


def auc(records: Sequence[ScoreRecord]) -> float:
    """AUC over score records; every record must carry a label."""
    if any(r.label is None for r in records):
        raise DegenerateDataError("cannot compute AUC over unlabeled records")
    return auc_from_scores(
        [r.score for r in records], [r.label for r in records]
    )


# ---------------------------------------------------------------------------
# Bin influence


@dataclass(frozen=True, eq=False)
class BinInfluenceProfile:
    """Mean rectified convolution response per window position.

    ``values[p]`` is the post-ReLU conv output at position ``p``, averaged
    over all filters and all samples; length is ``bins - kernel + 1``.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.shape[0] < 1:
            raise DimensionError("profile values must be a non-empty 1-d array")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise DimensionError("profile values must be finite and non-negative")
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[0]

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.values))


def bin_influence(model: "TrainedModel", dataset: "Dataset") -> BinInfluenceProfile:
    """Average the rectified conv response over filters and samples."""
    _check_compatible(model, dataset)
    total = np.zeros(model.hyper.conv_width)
    for sample in dataset.samples:
        x = model.transform.apply(sample.signal)
        total += relu(conv_forward(x, model.params.conv)).mean(axis=0)
    return BinInfluenceProfile(values=total / len(dataset.samples))


# ---------------------------------------------------------------------------
# CSV writers


def _comment_block(comment: str | None) -> str:
    if not comment:
        return ""
    return "".join(f"# {line}\n" for line in comment.splitlines())


def format_scores_csv(records: Sequence[ScoreRecord], comment: str | None = None) -> str:
    buf = io.StringIO()
    buf.write(_comment_block(comment))
    buf.write("gene_id,score,label\n")
    for r in records:
        label = "" if r.label is None else str(r.label)
        buf.write(f"{r.gene_id},{r.score:.6f},{label}\n")
    return buf.getvalue()


def write_scores_csv(records, path, comment: str | None = None) -> None:
    atomic_write_text(path, format_scores_csv(records, comment))


def format_profile_csv(profile: BinInfluenceProfile, comment: str | None = None) -> str:
    buf = io.StringIO()
    buf.write(_comment_block(comment))
    buf.write("position,mean_activation\n")
    for p, v in enumerate(profile.values):
        buf.write(f"{p},{v:.6f}\n")
    return buf.getvalue()


def write_profile_csv(profile, path, comment: str | None = None) -> None:
    atomic_write_text(path, format_profile_csv(profile, comment))
