"""Training loop (per-sample SGD with epoch shuffling) and model persistence.

Model files are a text magic line, a one-line JSON header, then the raw
float64 little-endian parameter payload guarded by a CRC32 checksum.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, SignalTransform, fit_signal_transform
from .errors import (
    DegenerateDataError,
    DimensionError,
    ModelFormatError,
    ModelIntegrityError,
)
from .fileio import atomic_write_bytes
from .metrics import auc_from_scores
from .nn import (
    ConvParams,
    Gradients,
    Hyperparams,
    LinearParams,
    NetworkParams,
    backward,
    forward,
    init_params,
    nll_loss,
    sgd_step,
    zero_gradients,
)
from .validation import as_label_array, as_signal_array

MODEL_MAGIC = "epiconv-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for one training run.

    ``max_epochs`` caps the epoch count below ``hyper.epochs`` when set.
    ``select_on`` is ``"validation-auc"`` (keep the epoch with the best
    validation AUC, earliest epoch winning ties) or ``"final"``.
    """

    hyper: Hyperparams
    max_epochs: int | None = None
    shuffle_each_epoch: bool = True
    select_on: str = "validation-auc"
    log1p: bool = False
    standardize: bool = False

    def __post_init__(self):
        if self.select_on not in ("validation-auc", "final"):
            raise ValueError(
                f"select_on must be 'validation-auc' or 'final', got {self.select_on!r}"
            )
        if self.max_epochs is not None and self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")

    @property
    def epochs(self) -> int:
        if self.max_epochs is None:
            return self.hyper.epochs
        return min(self.hyper.epochs, self.max_epochs)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int               # 1-based
    train_loss: float        # mean per-sample NLL over the epoch
    val_auc: float | None    # None when no validation fold was given


@dataclass(eq=False)
class TrainedModel:
    """Everything needed to score new data: weights, layout, preprocessing."""

    params: NetworkParams
    hyper: Hyperparams
    mark_names: list[str]
    transform: SignalTransform
    selected_epoch: int
    best_val_auc: float | None


def _score_batch(
    X: np.ndarray, params: NetworkParams, hyper: Hyperparams
) -> np.ndarray:
    """Probability of the +1 class for each sample, dropout off."""
    return np.array(
        [forward(x, params, hyper, mode="eval").probs[1] for x in X]
    )


def train_arrays(
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_valid: np.ndarray | None,
    y_valid: np.ndarray | None,
    config: TrainConfig,
    mark_names: list[str] | None = None,
) -> tuple[TrainedModel, list[EpochRecord]]:
    """Core loop over pre-validated arrays; see :func:`train` for datasets."""
    hyper = config.hyper
    n = X_train.shape[0]
    if n == 0:
        raise DegenerateDataError("cannot train on an empty dataset")
    if (X_valid is None) != (y_valid is None):
        raise DimensionError("X_valid and y_valid must be given together")
    if X_train.shape[1:] != (hyper.n_marks, hyper.bins):
        raise DimensionError(
            f"training data has shape {X_train.shape[1:]} per sample, "
            f"hyperparameters expect {(hyper.n_marks, hyper.bins)}"
        )
    if mark_names is None:
        mark_names = [f"mark_{j}" for j in range(hyper.n_marks)]

    transform = fit_signal_transform(
        X_train, log1p=config.log1p, standardize=config.standardize
    )
    X_tr = transform.apply(X_train)
    X_va = transform.apply(X_valid) if X_valid is not None else None

    rng = np.random.default_rng(hyper.seed)
    params = init_params(hyper, rng)

    use_validation = X_va is not None and config.select_on == "validation-auc"
    best_params = params.copy()
    best_auc = -np.inf
    best_epoch = 0
    history: list[EpochRecord] = []

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n) if config.shuffle_each_epoch else np.arange(n)
        losses = np.empty(n)
        pos = 0
        for start in range(0, n, hyper.batch):
            chunk = order[start : start + hyper.batch]
            total = zero_gradients(params, (hyper.n_marks, hyper.bins))
            for i in chunk:
                trace = forward(X_tr[i], params, hyper, mode="train", rng=rng)
                losses[pos] = nll_loss(trace.probs, int(y_train[i]))
                pos += 1
                total.add_(backward(trace, X_tr[i], int(y_train[i]), params))
            total.scale_(1.0 / len(chunk))
            params = sgd_step(params, total, hyper.lr)

        val_auc = None
        if X_va is not None:
            val_auc = auc_from_scores(_score_batch(X_va, params, hyper), y_valid)
        history.append(
            EpochRecord(epoch=epoch, train_loss=float(losses.mean()), val_auc=val_auc)
        )
        if use_validation and val_auc > best_auc:
            best_auc = val_auc
            best_epoch = epoch
            best_params = params.copy()

    if not use_validation or best_epoch == 0:
        best_params = params
        best_epoch = config.epochs
        best_auc = history[-1].val_auc if history[-1].val_auc is not None else None
    else:
        best_auc = float(best_auc)

    model = TrainedModel(
        params=best_params,
        hyper=hyper,
        mark_names=list(mark_names),
        transform=transform,
        selected_epoch=best_epoch,
        best_val_auc=best_auc,
    )
    return model, history


def train(
    train_set: Dataset, valid_set: Dataset, config: TrainConfig
) -> tuple[TrainedModel, list[EpochRecord]]:
    """Train on a labeled dataset, selecting the epoch by validation AUC."""
    if train_set.mark_names != valid_set.mark_names:
        raise DimensionError("train and validation folds disagree on mark names")
    if train_set.bin_count != valid_set.bin_count:
        raise DimensionError("train and validation folds disagree on bin count")
    X_tr, y_tr = train_set.to_arrays()
    X_va, y_va = valid_set.to_arrays()
    if y_tr is None or y_va is None:
        raise DegenerateDataError(
            "both folds must be labeled; run discretize_expression first"
        )
    if len(np.unique(y_va)) < 2:
        raise DegenerateDataError(
            "validation fold has a single class; AUC-based selection needs both"
        )
    return train_arrays(
        as_signal_array(X_tr),
        as_label_array(y_tr, X_tr.shape[0]),
        as_signal_array(X_va),
        as_label_array(y_va, X_va.shape[0]),
        config,
        mark_names=list(train_set.mark_names),
    )


# ---------------------------------------------------------------------------
# Persistence


def _param_arrays(params: NetworkParams) -> list[tuple[str, np.ndarray]]:
    arrays = [("conv.weights", params.conv.weights), ("conv.bias", params.conv.bias)]
    for i, layer in enumerate(params.mlp):
        arrays.append((f"mlp{i}.weights", layer.weights))
        arrays.append((f"mlp{i}.bias", layer.bias))
    return arrays


def save_model(model: TrainedModel, path) -> None:
    """Serialize: magic line, one-line JSON header, float64-LE payload."""
    arrays = _param_arrays(model.params)
    payload = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, arr in arrays
    )
    transform = model.transform
    header = {
        "hyper": {
            "n_marks": model.hyper.n_marks,
            "bins": model.hyper.bins,
            "kernel": model.hyper.kernel,
            "filters": model.hyper.filters,
            "pool": model.hyper.pool,
            "hidden": list(model.hyper.hidden),
            "dropout": model.hyper.dropout,
            "lr": model.hyper.lr,
            "epochs": model.hyper.epochs,
            "batch": model.hyper.batch,
            "seed": model.hyper.seed,
        },
        "mark_names": list(model.mark_names),
        "transform": {
            "log1p": transform.log1p,
            "mark_means": list(transform.mark_means)
            if transform.mark_means is not None
            else None,
            "mark_stds": list(transform.mark_stds)
            if transform.mark_stds is not None
            else None,
        },
        "selected_epoch": model.selected_epoch,
        "best_val_auc": model.best_val_auc,
        "arrays": [[name, list(arr.shape)] for name, arr in arrays],
        "payload_bytes": len(payload),
        "crc32": zlib.crc32(payload),
    }
    blob = (
        f"{MODEL_MAGIC} {MODEL_VERSION}\n".encode("utf-8")
        + json.dumps(header, sort_keys=True).encode("utf-8")
        + b"\n"
        + payload
    )
    atomic_write_bytes(path, blob)


def load_model(path) -> TrainedModel:
    """Read a model file back, refusing unknown versions and corrupt payloads."""
    raw = Path(path).read_bytes()
    eol = raw.find(b"\n")
    if eol < 0:
        raise ModelFormatError("not a model file: missing magic line")
    magic = raw[:eol].decode("utf-8", errors="replace").split()
    if len(magic) != 2 or magic[0] != MODEL_MAGIC:
        raise ModelFormatError("not a model file: bad magic line")
    if magic[1] != str(MODEL_VERSION):
        raise ModelFormatError(
            f"unsupported model format version {magic[1]!r} "
            f"(this build reads version {MODEL_VERSION})"
        )
    head_end = raw.find(b"\n", eol + 1)
    if head_end < 0:
        raise ModelFormatError("not a model file: missing header line")
    try:
        header = json.loads(raw[eol + 1 : head_end].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"unreadable model header: {exc}") from None

    payload = raw[head_end + 1 :]
    try:
        expected_bytes = int(header["payload_bytes"])
        expected_crc = int(header["crc32"])
        array_specs = header["arrays"]
        hyper = Hyperparams(
            n_marks=int(header["hyper"]["n_marks"]),
            bins=int(header["hyper"]["bins"]),
            kernel=int(header["hyper"]["kernel"]),
            filters=int(header["hyper"]["filters"]),
            pool=int(header["hyper"]["pool"]),
            hidden=tuple(header["hyper"]["hidden"]),
            dropout=float(header["hyper"]["dropout"]),
            lr=float(header["hyper"]["lr"]),
            epochs=int(header["hyper"]["epochs"]),
            batch=int(header["hyper"]["batch"]),
            seed=int(header["hyper"]["seed"]),
        )
        t = header["transform"]
        transform = SignalTransform(
            log1p=bool(t["log1p"]),
            mark_means=tuple(t["mark_means"]) if t["mark_means"] is not None else None,
            mark_stds=tuple(t["mark_stds"]) if t["mark_stds"] is not None else None,
        )
        mark_names = [str(m) for m in header["mark_names"]]
        selected_epoch = int(header["selected_epoch"])
        best_val_auc = (
            float(header["best_val_auc"])
            if header["best_val_auc"] is not None
            else None
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"model header missing or malformed field: {exc}") from None

    if len(payload) != expected_bytes:
        raise ModelIntegrityError(
            f"model payload truncated or padded: {len(payload)} bytes, "
            f"header declares {expected_bytes}"
        )
    if zlib.crc32(payload) != expected_crc:
        raise ModelIntegrityError("model payload fails its CRC32 checksum")

    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    declared = sum(int(np.prod(shape)) for _, shape in array_specs)
    if declared != values.size:
        raise ModelIntegrityError(
            "array shapes in the header do not account for the payload size"
        )
    arrays = {}
    offset = 0
    for name, shape in array_specs:
        count = int(np.prod(shape))
        arrays[name] = values[offset : offset + count].reshape(
            [int(s) for s in shape]
        )
        offset += count

    try:
        conv = ConvParams(arrays["conv.weights"], arrays["conv.bias"])
        mlp = []
        for i in range(len(hyper.hidden) + 1):
            mlp.append(LinearParams(arrays[f"mlp{i}.weights"], arrays[f"mlp{i}.bias"]))
        params = NetworkParams(conv=conv, mlp=tuple(mlp))
    except (KeyError, DimensionError) as exc:
        raise ModelIntegrityError(f"model arrays are inconsistent: {exc}") from None

    if params.conv.weights.shape != (hyper.filters, hyper.n_marks, hyper.kernel):
        raise ModelIntegrityError(
            "conv weights disagree with the stored hyperparameters"
        )
    if params.mlp[0].in_dim != hyper.flat_size:
        raise ModelIntegrityError(
            "MLP input width disagrees with the stored hyperparameters"
        )
    if len(mark_names) != hyper.n_marks:
        raise ModelFormatError("mark name list disagrees with n_marks")

    return TrainedModel(
        params=params,
        hyper=hyper,
        mark_names=mark_names,
        transform=transform,
        selected_epoch=selected_epoch,
        best_val_auc=best_val_auc,
    )
