"""Class-pattern synthesis: optimize an input matrix toward a target class.

Starting from small random noise, gradient descent minimizes

    L(X) = NLL(class | network(X)) + penalty * ||X||^2

over the input X while the trained weights stay frozen.  The optimized
matrix is then rectified and scaled to [0, 1]; bins above a threshold count
as "active", and marks with above-average active-bin counts are the ones the
model considers influential for that class.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import DimensionError, DivergenceError
from .fileio import atomic_write_text
from .nn import backward, forward, nll_loss
from .svgplot import heatmap_svg
from .validation import LABELS

if TYPE_CHECKING:  # pragma: no cover - type-only import, avoids a cycle
    from .training import TrainedModel

#: Optimization stops early once the gradient 2-norm falls below this.
GRAD_NORM_TOL = 1e-7

#: How many times one iteration may halve its step while backtracking.
MAX_BACKTRACKS = 10


@dataclass(frozen=True)
class VisConfig:
    """Settings for one pattern optimization.

    ``iters`` needs to be large enough to anneal the random start away: each
    step multiplies the initial noise by (1 - 2*l2_penalty*step), so the
    defaults leave under 0.3% of it after 3000 iterations.  Too few
    iterations leave noise that corrupts the active-bin counts.
    """

    target_class: int
    l2_penalty: float = 0.01
    step: float = 0.1
    iters: int = 3000
    threshold: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.target_class not in LABELS:
            raise ValueError(
                f"target_class must be -1 or +1, got {self.target_class!r}"
            )
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be non-negative")
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie strictly between 0 and 1")


@dataclass(frozen=True, eq=False)
class ClassPattern:
    """Result of one optimization: the raw optimum and its [0, 1] rendering."""

    raw: np.ndarray
    normalized: np.ndarray
    target_class: int
    initial_loss: float
    final_loss: float
    iterations_run: int


def normalize_pattern(raw: np.ndarray) -> np.ndarray:
    """Clamp negatives to zero, then scale so the largest entry is 1.

    An all-nonpositive input comes back as all zeros rather than dividing
    by zero.
    """
    clipped = np.maximum(np.asarray(raw, dtype=np.float64), 0.0)
    peak = clipped.max() if clipped.size else 0.0
    if peak <= 0.0:
        return np.zeros_like(clipped)
    return clipped / peak


def optimize_class_pattern(model: "TrainedModel", config: VisConfig) -> ClassPattern:
    """Synthesize the input pattern the model most associates with a class.

    Plain gradient descent with per-iteration backtracking: a step is only
    accepted if it does not increase the loss; the step size is halved up to
    :data:`MAX_BACKTRACKS` times otherwise.  Stops early when the gradient
    norm drops below :data:`GRAD_NORM_TOL` or when no acceptable step exists.
    Raises :class:`DivergenceError` if the loss turns non-finite even at the
    smallest backtracked step (try a smaller ``step``).
    """
    hyper = model.hyper
    rng = np.random.default_rng(config.seed)
    x = rng.uniform(0.0, 1.0, (hyper.n_marks, hyper.bins))

    def loss_and_grad(xi: np.ndarray) -> tuple[float, np.ndarray]:
        trace = forward(xi, model.params, hyper, mode="eval")
        nll = nll_loss(trace.probs, config.target_class)
        grads = backward(trace, xi, config.target_class, model.params)
        loss = nll + config.l2_penalty * float(np.sum(xi * xi))
        grad = grads.x + 2.0 * config.l2_penalty * xi
        return loss, grad

    def loss_only(xi: np.ndarray) -> float:
        trace = forward(xi, model.params, hyper, mode="eval")
        return nll_loss(trace.probs, config.target_class) + config.l2_penalty * float(
            np.sum(xi * xi)
        )

    cur_loss, grad = loss_and_grad(x)
    if not np.isfinite(cur_loss):
        raise DivergenceError("loss is non-finite at the starting point")
    initial_loss = cur_loss
    iterations_run = 0

    for _ in range(config.iters):
        if float(np.linalg.norm(grad)) <= GRAD_NORM_TOL:
            break
        step = config.step
        accepted = False
        for attempt in range(MAX_BACKTRACKS + 1):
            candidate = x - step * grad
            cand_loss = loss_only(candidate)
            if np.isfinite(cand_loss) and cand_loss <= cur_loss:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if not np.isfinite(cand_loss):
                raise DivergenceError(
                    "loss became non-finite during pattern optimization; "
                    "try a smaller step"
                )
            break  # no non-increasing step found: converged as far as we can
        x = candidate
        cur_loss, grad = loss_and_grad(x)
        iterations_run += 1

    return ClassPattern(
        raw=x,
        normalized=normalize_pattern(x),
        target_class=config.target_class,
        initial_loss=float(initial_loss),
        final_loss=float(cur_loss),
        iterations_run=iterations_run,
    )


# ---------------------------------------------------------------------------
# Active bins and mark frequencies


def active_bins(normalized: np.ndarray, threshold: float) -> np.ndarray:
    """Count, per mark, the bins whose normalized value strictly exceeds
    ``threshold``."""
    arr = np.asarray(normalized, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"pattern must be 2-d, got {arr.ndim}-d")
    return (arr > threshold).sum(axis=1)


@dataclass(frozen=True, eq=False)
class FrequencySummary:
    """Per-mark active-bin counts and the above-average 'influential' flags."""

    counts: np.ndarray
    mean_count: float
    influential: np.ndarray  # bool per mark: count strictly above the mean

    @property
    def influential_marks(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.influential)]


def summarize_frequencies(
    pattern: ClassPattern, threshold: float = 0.25
) -> FrequencySummary:
    counts = active_bins(pattern.normalized, threshold)
    mean_count = float(counts.mean())
    return FrequencySummary(
        counts=counts,
        mean_count=mean_count,
        influential=counts > mean_count,
    )


# ---------------------------------------------------------------------------
# Export


def format_pattern_csv(
    pattern: ClassPattern, mark_names: Sequence[str], comment: str | None = None
) -> str:
    marks, bins = pattern.normalized.shape
    if len(mark_names) != marks:
        raise DimensionError(
            f"{len(mark_names)} mark names for a {marks}-mark pattern"
        )
    buf = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    buf.write("mark,bin,value\n")
    for i, name in enumerate(mark_names):
        for b in range(bins):
            buf.write(f"{name},{b},{pattern.normalized[i, b]:.6f}\n")
    return buf.getvalue()


def format_frequency_csv(
    summary: FrequencySummary, mark_names: Sequence[str], comment: str | None = None
) -> str:
    if len(mark_names) != summary.counts.shape[0]:
        raise DimensionError(
            f"{len(mark_names)} mark names for {summary.counts.shape[0]} counts"
        )
    buf = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    buf.write("mark,active_count,influential\n")
    for name, count, flag in zip(mark_names, summary.counts, summary.influential):
        buf.write(f"{name},{int(count)},{'true' if flag else 'false'}\n")
    return buf.getvalue()


def pattern_heatmap_svg(
    pattern: ClassPattern, mark_names: Sequence[str], threshold: float = 0.25
) -> str:
    summary = summarize_frequencies(pattern, threshold)
    sign = "+1" if pattern.target_class == 1 else "-1"
    return heatmap_svg(
        pattern.normalized,
        row_labels=list(mark_names),
        bar_values=[int(c) for c in summary.counts],
        bar_label=f"bins > {threshold:g}",
        title=f"class {sign} pattern",
    )


def export_heatmap(
    pattern: ClassPattern,
    mark_names: Sequence[str],
    path,
    fmt: str = "csv",
    threshold: float = 0.25,
    comment: str | None = None,
) -> None:
    """Write the normalized pattern as ``mark,bin,value`` CSV or as SVG."""
    if fmt == "csv":
        atomic_write_text(path, format_pattern_csv(pattern, mark_names, comment))
    elif fmt == "svg":
        atomic_write_text(path, pattern_heatmap_svg(pattern, mark_names, threshold))
    else:
        raise ValueError(f"fmt must be 'csv' or 'svg', got {fmt!r}")


def write_frequency_csv(summary, mark_names, path, comment: str | None = None) -> None:
    atomic_write_text(path, format_frequency_csv(summary, mark_names, comment))
