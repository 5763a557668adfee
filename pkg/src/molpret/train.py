"""Training loops and checkpoint persistence.

Pre-training regresses the message-passing network onto standardized,
clipped descriptor targets under a two-part mask: the validity mask always
applies, and each step an additional random fraction of valid cells is
excluded from the loss as regularization.  Fine-tuning reuses the
message-passing weights with a fresh single-output head, a seeded
validation split and early stopping.  Both paths share one early-stopping
loop, which the tabular baselines borrow as well.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import dmpnn
from . import tensor as T
from .descriptors import DescriptorMatrix, ScalerStats
from .errors import FileFormatError, InputError, NumericError
from .molgraph import Molecule, SmilesError, parse_smiles
from .tensor import Tensor

log = logging.getLogger(__name__)

CHMC_MAGIC = b"CHMC"
CHMC_VERSION = 1


# ---------------------------------------------------------------------------
# configs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    mask_fraction: float = 0.15
    clip_sigmas: float = 6.0
    seed: int = 0
    val_fraction: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.mask_fraction < 1.0:
            raise ValueError("mask_fraction must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.val_fraction < 0.5:
            raise ValueError("val_fraction must lie in (0, 0.5)")


@dataclass(frozen=True)
class FinetuneConfig:
    task: str = "regression"  # or "binary_classification"
    epochs: int = 100
    batch_size: int = 32
    lr_head: float = 1e-3
    lr_mp: float | None = None  # defaults to lr_head / 10
    val_fraction: float = 0.1
    patience: int = 10
    freeze_mp: bool = False
    seed: int = 0
    allow_small: bool = False

    def __post_init__(self):
        if self.task not in ("regression", "binary_classification"):
            raise ValueError(f"unknown task {self.task!r}")
        if not 0.0 < self.val_fraction < 0.5:
            raise ValueError("val_fraction must lie in (0, 0.5)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")

    @property
    def mp_lr(self) -> float:
        if self.freeze_mp:
            return 0.0
        return self.lr_head / 10.0 if self.lr_mp is None else self.lr_mp


# ---------------------------------------------------------------------------
# CHMC container
# ---------------------------------------------------------------------------

def save_container(path, kind: str, header: dict,
                   tensors: list[tuple[str, np.ndarray]]) -> None:
    """Write a CHMC file: magic, version, length-prefixed JSON header, then
    raw little-endian float32 tensors in header-declared order."""
    manifest = [[name, list(arr.shape)] for name, arr in tensors]
    full_header = dict(header)
    full_header["kind"] = kind
    full_header["tensors"] = manifest
    blob = json.dumps(full_header, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHMC_MAGIC)
        fh.write(struct.pack("<I", CHMC_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_container(path) -> tuple[str, dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHMC_MAGIC:
            raise FileFormatError(f"{path}: bad magic {magic!r}, expected CHMC")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHMC_VERSION:
            raise FileFormatError(f"{path}: unsupported version {version}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        tensors = {}
        for name, shape in header["tensors"]:
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 4)
            if len(raw) != count * 4:
                raise FileFormatError(f"{path}: truncated tensor {name!r}")
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    kind = header.pop("kind", "unknown")
    header.pop("tensors")
    return kind, header, tensors


def _scaler_to_json(s: ScalerStats | None):
    if s is None:
        return None
    return {
        "names": list(s.names),
        "mean": [float(v) for v in s.mean],
        "std": [float(v) for v in s.std],
        "clip_sigmas": float(s.clip_sigmas),
        "constant": [bool(v) for v in s.constant],
    }


def _scaler_from_json(d) -> ScalerStats | None:
    if d is None:
        return None
    return ScalerStats(tuple(d["names"]), np.array(d["mean"]),
                       np.array(d["std"]), float(d["clip_sigmas"]),
                       np.array(d["constant"], dtype=bool))


@dataclass
class Checkpoint:
    """Architecture, weights and pre-training provenance."""

    config: dmpnn.MpnnConfig
    weights: dict[str, np.ndarray]  # float32, in weight_shapes order
    descriptor_names: tuple[str, ...]
    scaler: ScalerStats | None
    metadata: dict

    def weight_tensors(self, requires_grad: bool = False) -> dict[str, Tensor]:
        return {k: Tensor(v.copy(), requires_grad=requires_grad)
                for k, v in self.weights.items()}


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    header = {
        "config": ckpt.config.to_dict(),
        "descriptor_names": list(ckpt.descriptor_names),
        "scaler": _scaler_to_json(ckpt.scaler),
        "metadata": ckpt.metadata,
    }
    names = list(dmpnn.weight_shapes(ckpt.config))
    save_container(path, "mpnn", header,
                   [(n, ckpt.weights[n]) for n in names])


def load_checkpoint(path) -> Checkpoint:
    kind, header, tensors = load_container(path)
    if kind != "mpnn":
        raise FileFormatError(f"{path}: container kind {kind!r} is not an "
                              f"mpnn checkpoint")
    cfg = dmpnn.MpnnConfig.from_dict(header["config"])
    return Checkpoint(cfg, tensors, tuple(header["descriptor_names"]),
                      _scaler_from_json(header["scaler"]), header["metadata"])


def random_checkpoint(arch: dmpnn.MpnnConfig, descriptor_names,
                      seed: int) -> Checkpoint:
    """Fresh seeded weights with no pre-training; the random-init baseline."""
    weights = {k: t.data for k, t in dmpnn.init_weights(arch, seed).items()}
    return Checkpoint(arch, weights, tuple(descriptor_names), None,
                      {"seed": seed, "epochs": 0, "pretrained": False})


def checkpoint_fingerprints(ckpt: Checkpoint, mols) -> np.ndarray:
    return dmpnn.fingerprint(mols, ckpt.config, ckpt.weight_tensors())


# ---------------------------------------------------------------------------
# pre-training
# ---------------------------------------------------------------------------

def _batches(indices: np.ndarray, batch_size: int):
    for start in range(0, len(indices), batch_size):
        yield indices[start:start + batch_size]


def _masked_rmse(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> float:
    n = int(mask.sum())
    if n == 0:
        return float("nan")
    diff = np.where(mask, pred.astype(np.float64) - target, 0.0)
    return math.sqrt(float((diff * diff).sum()) / n)


def pretrain(mols, targets: DescriptorMatrix, cfg: PretrainConfig,
             arch: dmpnn.MpnnConfig | None = None,
             scaler: ScalerStats | None = None):
    """Pre-train on standardized descriptor targets with masked MSE.

    Returns (checkpoint-with-best-held-out-weights, per-epoch history).
    The effective loss mask is the validity mask AND NOT a per-step random
    drop of ``mask_fraction`` of the valid cells.  Pass the scaler that
    standardized the targets to record it in the checkpoint.
    """
    mols = list(mols)
    if targets.n_rows != len(mols):
        raise ValueError(
            f"targets have {targets.n_rows} rows but corpus has {len(mols)}")
    if arch is None:
        arch = dmpnn.MpnnConfig(output_dim=targets.n_cols)
    if arch.output_dim != targets.n_cols:
        raise ValueError("arch.output_dim must equal the descriptor count")

    rng = np.random.default_rng(cfg.seed)
    n = len(mols)
    perm = rng.permutation(n)
    n_val = max(1, int(round(cfg.val_fraction * n)))
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]

    weights = dmpnn.init_weights(arch, cfg.seed)
    params = list(weights.values())
    state = T.adam_init(params)
    values = targets.values
    mask = targets.mask

    feats = [dmpnn.featurize(m) for m in mols]  # featurize once

    def eval_rmse(idx: np.ndarray) -> float:
        preds = []
        for chunk in _batches(idx, 256):
            batch = dmpnn.batch_from_features([feats[i] for i in chunk])
            preds.append(np.asarray(dmpnn.forward(batch, arch, weights).data))
        pred = np.concatenate(preds) if preds else np.zeros((0, targets.n_cols))
        return _masked_rmse(pred, np.nan_to_num(values[idx]), mask[idx])

    steps_per_epoch = max(1, math.ceil(len(train_idx) / cfg.batch_size))
    warmup_steps = 2 * steps_per_epoch
    history = []
    best_rmse = eval_rmse(val_idx)
    best_weights = {k: t.data.copy() for k, t in weights.items()}
    best_epoch = 0
    step = 0
    final_train_loss = float("nan")

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(train_idx)
        losses = []
        for chunk in _batches(order, cfg.batch_size):
            batch = dmpnn.batch_from_features([feats[i] for i in chunk])
            y = np.nan_to_num(values[chunk])
            valid = mask[chunk]
            drop = rng.random(valid.shape) < cfg.mask_fraction
            eff = valid & ~drop
            if not eff.any():
                log.warning("skipping all-masked batch at epoch %d", epoch)
                continue
            with T.Tape() as tape:
                out = dmpnn.forward(batch, arch, weights)
                loss = T.mse_masked(out, y, eff)
                grads = tape.gradients(loss, params)
            loss_val = float(loss.data)
            if not math.isfinite(loss_val):
                raise NumericError(f"non-finite pre-training loss at epoch {epoch}")
            step += 1
            lr = cfg.lr * min(1.0, step / warmup_steps)
            T.adam_step(params, grads, state, lr)
            losses.append(loss_val)
        train_loss = float(np.mean(losses)) if losses else float("nan")
        final_train_loss = train_loss
        val_rmse = eval_rmse(val_idx)
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "val_rmse": val_rmse})
        log.info("pretrain epoch %d train_loss %.6f val_rmse %.6f",
                 epoch, train_loss, val_rmse)
        if val_rmse < best_rmse:
            best_rmse = val_rmse
            best_weights = {k: t.data.copy() for k, t in weights.items()}
            best_epoch = epoch

    ckpt = Checkpoint(
        arch, best_weights, targets.names, scaler,
        {"seed": cfg.seed, "epochs": cfg.epochs,
         "mask_fraction": cfg.mask_fraction,
         "final_train_loss": final_train_loss,
         "best_val_rmse": best_rmse, "best_epoch": best_epoch,
         "pretrained": True},
    )
    return ckpt, history


# ---------------------------------------------------------------------------
# shared early-stopping loop
# ---------------------------------------------------------------------------

def _np_loss(task: str, pred: np.ndarray, target: np.ndarray) -> float:
    pred = pred.astype(np.float64).reshape(-1)
    target = target.astype(np.float64).reshape(-1)
    if task == "regression":
        return float(np.mean((pred - target) ** 2))
    per = np.maximum(pred, 0) - pred * target + np.log1p(np.exp(-np.abs(pred)))
    return float(np.mean(per))


def train_with_early_stopping(forward, targets: np.ndarray,
                              train_idx: np.ndarray, val_idx: np.ndarray,
                              task: str, groups, cfg: FinetuneConfig,
                              rng: np.random.Generator):
    """Generic mini-batch loop with patience-based early stopping.

    ``forward(idx, training)`` returns a prediction Tensor of shape
    (len(idx), 1) in standardized/logit space; ``groups`` is a list of
    (params, lr) pairs, each with its own Adam state.  Returns the history
    and restores every parameter to its best-validation snapshot.
    """
    all_params = [p for params, _ in groups for p in params]
    states = [T.adam_init(params) for params, _ in groups]

    def val_loss() -> float:
        pred = np.asarray(forward(val_idx, False).data)
        return _np_loss(task, pred, targets[val_idx])

    best = val_loss()
    best_snapshot = [p.data.copy() for p in all_params]
    best_epoch = 0
    since_best = 0
    history = [{"epoch": 0, "train_loss": float("nan"), "val_loss": best}]

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(train_idx)
        losses = []
        for chunk in _batches(order, cfg.batch_size):
            with T.Tape() as tape:
                out = forward(chunk, True)
                y = targets[chunk].reshape(-1, 1)
                if task == "regression":
                    loss = T.mse_masked(out, y, np.ones_like(y, dtype=bool))
                else:
                    loss = T.bce_with_logits(out, y)
                grads = tape.gradients(loss, all_params)
            if not math.isfinite(float(loss.data)):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            offset = 0
            for (params, lr), state in zip(groups, states):
                if lr > 0.0:
                    T.adam_step(params, grads[offset:offset + len(params)],
                                state, lr)
                offset += len(params)
            losses.append(float(loss.data))
        vloss = val_loss()
        history.append({"epoch": epoch,
                        "train_loss": float(np.mean(losses)) if losses else float("nan"),
                        "val_loss": vloss})
        if vloss < best:
            best = vloss
            best_snapshot = [p.data.copy() for p in all_params]
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break

    for p, snap in zip(all_params, best_snapshot):
        p.data = snap
    return history, best_epoch, best


# ---------------------------------------------------------------------------
# fine-tuning
# ---------------------------------------------------------------------------

@dataclass
class FinetunedModel:
    """Message-passing encoder plus a single-output head, with the label
    transform needed to undo standardization at prediction time."""

    config: dmpnn.MpnnConfig
    weights: dict[str, np.ndarray]
    task: str
    label_mean: float
    label_std: float
    metadata: dict

    def predict(self, molecules) -> np.ndarray:
        return predict(self, molecules)


def _as_molecules(inputs) -> list[Molecule]:
    mols = []
    for i, item in enumerate(inputs):
        if isinstance(item, Molecule):
            mols.append(item)
        else:
            try:
                mols.append(parse_smiles(item))
            except SmilesError as e:
                raise InputError(f"row {i}: cannot parse {item!r}: {e}") from e
    return mols


def _split_with_classes(rng, n, val_fraction, labels, task):
    """Seeded validation split; classification splits that land single-class
    are redrawn once."""
    for attempt in range(2):
        perm = rng.permutation(n)
        n_val = max(1, int(round(val_fraction * n)))
        val_idx, train_idx = perm[:n_val], perm[n_val:]
        if task != "binary_classification":
            return train_idx, val_idx
        if len(set(labels[train_idx])) == 2 and len(set(labels[val_idx])) == 2:
            return train_idx, val_idx
    raise ValueError("validation split is single-class after one redraw")


def finetune(ckpt: Checkpoint, inputs, labels, cfg: FinetuneConfig):
    """Fit a fresh head (and optionally the encoder) on a labeled set.

    Returns (model, history).  Regression labels are standardized by the
    statistics of the training split and predictions are un-standardized
    on the way out.
    """
    mols = _as_molecules(inputs)
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape[0] != len(mols):
        raise ValueError("one label per molecule required")
    if not np.isfinite(labels).all():
        raise ValueError("labels must be finite")
    if cfg.task == "binary_classification" and not np.isin(labels, (0.0, 1.0)).all():
        raise ValueError("binary labels must be 0 or 1")
    if len(mols) < 10 and not cfg.allow_small:
        raise ValueError(
            f"refusing to fine-tune on {len(mols)} rows (< 10); "
            f"set allow_small to override")

    rng = np.random.default_rng(cfg.seed)
    train_idx, val_idx = _split_with_classes(
        rng, len(mols), cfg.val_fraction, labels, cfg.task)

    if cfg.task == "regression":
        y_mean = float(labels[train_idx].mean())
        y_std = float(labels[train_idx].std())
        if y_std == 0.0:
            y_std = 1.0
        targets = (labels - y_mean) / y_std
    else:
        y_mean, y_std = 0.0, 1.0
        targets = labels

    arch = replace(ckpt.config, output_dim=1)
    mp_weights = {k: Tensor(ckpt.weights[k].copy(), requires_grad=True)
                  for k in dmpnn.MP_WEIGHT_NAMES}
    fresh = dmpnn.init_weights(arch, cfg.seed)
    head_weights = {k: fresh[k] for k in dmpnn.head_weight_names(arch)}
    weights = {**mp_weights, **head_weights}

    feats = [dmpnn.featurize(m) for m in mols]

    def forward(idx, training):
        batch = dmpnn.batch_from_features([feats[i] for i in idx])
        return dmpnn.forward(batch, arch, weights)

    groups = [(list(mp_weights.values()), cfg.mp_lr),
              (list(head_weights.values()), cfg.lr_head)]
    history, best_epoch, best_val = train_with_early_stopping(
        forward, targets, train_idx, val_idx, cfg.task, groups, cfg, rng)

    model = FinetunedModel(
        arch, {k: t.data.copy() for k, t in weights.items()},
        cfg.task, y_mean, y_std,
        {"seed": cfg.seed, "best_epoch": best_epoch, "best_val_loss": best_val,
         "frozen_encoder": cfg.freeze_mp,
         "pretrained": bool(ckpt.metadata.get("pretrained", False))},
    )
    return model, history


def predict(model: FinetunedModel, inputs) -> np.ndarray:
    """Deterministic predictions; regression outputs are un-standardized,
    classification outputs are probabilities in (0, 1)."""
    mols = _as_molecules(inputs)
    if not mols:
        return np.zeros(0)
    weights = {k: Tensor(v) for k, v in model.weights.items()}
    preds = []
    for start in range(0, len(mols), 256):
        batch = dmpnn.batch_molecules(mols[start:start + 256])
        preds.append(np.asarray(dmpnn.forward(batch, model.config, weights).data))
    out = np.concatenate(preds).reshape(-1).astype(np.float64)
    if model.task == "regression":
        return out * model.label_std + model.label_mean
    return 1.0 / (1.0 + np.exp(-np.clip(out, -30.0, 30.0)))


def save_finetuned(model: FinetunedModel, path) -> None:
    header = {
        "config": model.config.to_dict(),
        "task": model.task,
        "label_mean": model.label_mean,
        "label_std": model.label_std,
        "metadata": model.metadata,
    }
    save_container(path, "finetuned", header,
                   sorted(model.weights.items()))


def load_finetuned(path) -> FinetunedModel:
    kind, header, tensors = load_container(path)
    if kind != "finetuned":
        raise FileFormatError(f"{path}: container kind {kind!r} is not a "
                              f"fine-tuned model")
    return FinetunedModel(
        dmpnn.MpnnConfig.from_dict(header["config"]), tensors,
        header["task"], header["label_mean"], header["label_std"],
        header["metadata"])


# ---------------------------------------------------------------------------
# labeled datasets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LabeledRow:
    smiles: str
    target: float
    split: str | None
    cliff: bool | None
    line: int


def read_labeled_csv(path, cliff_column: str | None = None) -> list[LabeledRow]:
    """Labeled dataset: CSV with header and columns ``smiles``, ``target``,
    optional ``split`` in {train, test}, plus an optional cliff-flag column."""
    import csv as _csv
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = _csv.DictReader(fh)
        fields = reader.fieldnames or ()
        if "smiles" not in fields or "target" not in fields:
            raise InputError(f"{path}: need 'smiles' and 'target' columns, "
                             f"found {list(fields)}")
        if cliff_column is not None and cliff_column not in fields:
            raise InputError(f"{path}: cliff column {cliff_column!r} missing")
        for lineno, row in enumerate(reader, start=2):
            smiles = (row["smiles"] or "").strip()
            if not smiles:
                raise InputError(f"{path}:{lineno}: empty smiles cell")
            try:
                target = float(row["target"])
            except (TypeError, ValueError):
                raise InputError(
                    f"{path}:{lineno}: bad target {row['target']!r}") from None
            split = (row.get("split") or "").strip() or None
            if split is not None and split not in ("train", "test"):
                raise InputError(f"{path}:{lineno}: split must be train or "
                                 f"test, got {split!r}")
            cliff = None
            if cliff_column is not None:
                raw = (row.get(cliff_column) or "").strip().lower()
                if raw not in ("0", "1", "true", "false"):
                    raise InputError(f"{path}:{lineno}: bad cliff flag {raw!r}")
                cliff = raw in ("1", "true")
            rows.append(LabeledRow(smiles, target, split, cliff, lineno))
    if not rows:
        raise InputError(f"{path}: no data rows")
    return rows
