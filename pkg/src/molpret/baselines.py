"""Descriptor-pipeline baselines: a plain descriptor FNN and PCA+MLP.

PCA uses a cyclic Jacobi eigensolver on the column covariance, which is
exact on the small symmetric matrices that arise here and needs no
convergence tuning.  Masked descriptor cells are imputed to 0 in
standardized space (equivalently the column mean in raw space).  Both
baselines train their MLP heads with the early-stopping loop from
:mod:`molpret.train`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .descriptors import (
    DescriptorMatrix,
    ScalerStats,
    apply_scaler,
    compute_matrix,
    fit_scaler,
)
from .errors import FileFormatError
from .train import FinetuneConfig, load_container, save_container, \
    train_with_early_stopping, _split_with_classes
from .tensor import Tensor


# ---------------------------------------------------------------------------
# PCA via cyclic Jacobi rotations
# ---------------------------------------------------------------------------

def jacobi_eigh(a: np.ndarray, tol: float = 1e-12,
                max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues, eigenvectors) sorted by descending eigenvalue,
    with orthonormal eigenvector columns.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("jacobi_eigh needs a square matrix")
    v = np.eye(n)
    norm = max(np.abs(a).max(), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt((a * a).sum() - (np.diag(a) ** 2).sum())
        if off <= tol * norm * n:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                     if theta != 0.0 else 1.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    eigvals = np.diag(a).copy()
    order = np.argsort(-eigvals)
    return eigvals[order], v[:, order]


@dataclass(frozen=True)
class PcaModel:
    """Principal components retaining a target share of variance."""

    components: np.ndarray        # (cols, k), orthonormal columns
    means: np.ndarray             # (cols,)
    explained_ratios: np.ndarray  # all columns, non-increasing
    k: int


def _imputed(d: DescriptorMatrix) -> np.ndarray:
    x = np.where(d.mask, d.values, 0.0)
    return x.astype(np.float64)


def fit_pca(d: DescriptorMatrix, variance_threshold: float = 0.95) -> PcaModel:
    """Fit PCA on a standardized matrix, keeping the fewest components whose
    cumulative explained-variance ratio reaches the threshold."""
    if d.n_rows < 2:
        raise ValueError("PCA needs at least 2 rows")
    x = _imputed(d)
    means = x.mean(axis=0)
    xc = x - means
    cov = (xc.T @ xc) / x.shape[0]
    eigvals, eigvecs = jacobi_eigh(cov)
    eigvals = np.clip(eigvals, 0.0, None)
    total = eigvals.sum()
    if total <= 0.0:
        raise ValueError("degenerate input: all columns constant")
    ratios = eigvals / total
    cumulative = np.cumsum(ratios)
    k = int(np.searchsorted(cumulative, variance_threshold - 1e-12) + 1)
    k = min(k, len(eigvals))
    return PcaModel(eigvecs[:, :k].copy(), means, ratios, k)


def pca_project(model: PcaModel, x: np.ndarray) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - model.means) @ model.components


def pca_reconstruct(model: PcaModel, z: np.ndarray) -> np.ndarray:
    return np.asarray(z, dtype=np.float64) @ model.components.T + model.means


def save_pca(scaler: ScalerStats, model: PcaModel, path) -> None:
    """Persist the descriptor scaler together with the fitted components."""
    header = {
        "k": model.k,
        "scaler": {
            "names": list(scaler.names),
            "mean": [float(v) for v in scaler.mean],
            "std": [float(v) for v in scaler.std],
            "clip_sigmas": float(scaler.clip_sigmas),
            "constant": [bool(v) for v in scaler.constant],
        },
    }
    save_container(path, "pca", header, [
        ("components", model.components),
        ("means", model.means),
        ("explained_ratios", model.explained_ratios),
    ])


def load_pca(path) -> tuple[ScalerStats, PcaModel]:
    kind, header, tensors = load_container(path)
    if kind != "pca":
        raise FileFormatError(f"{path}: container kind {kind!r} is not pca")
    s = header["scaler"]
    scaler = ScalerStats(tuple(s["names"]), np.array(s["mean"]),
                         np.array(s["std"]), float(s["clip_sigmas"]),
                         np.array(s["constant"], dtype=bool))
    model = PcaModel(
        tensors["components"].astype(np.float64),
        tensors["means"].astype(np.float64),
        tensors["explained_ratios"].astype(np.float64),
        int(header["k"]))
    return scaler, model


# ---------------------------------------------------------------------------
# tabular MLP shared by both baselines
# ---------------------------------------------------------------------------

@dataclass
class TabularNet:
    """An input-standardizing MLP with NaN-to-mean imputation."""

    weights: list[np.ndarray]  # w0, b0, w1, b1, ...
    impute: np.ndarray
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    task: str

    def _standardize(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).copy()
        nan = np.isnan(x)
        if nan.any():
            x[nan] = np.broadcast_to(self.impute, x.shape)[nan]
        return (x - self.x_mean) / self.x_std

    def predict(self, x: np.ndarray) -> np.ndarray:
        h = self._standardize(x)
        n_layers = len(self.weights) // 2
        for i in range(n_layers):
            h = h @ self.weights[2 * i] + self.weights[2 * i + 1]
            if i < n_layers - 1:
                h = np.maximum(h, 0.0)
        out = h.reshape(-1)
        if self.task == "regression":
            return out * self.y_std + self.y_mean
        return 1.0 / (1.0 + np.exp(-np.clip(out, -30.0, 30.0)))


def fit_tabular(x: np.ndarray, y: np.ndarray, cfg: FinetuneConfig,
                hidden: tuple[int, ...] = (1800, 1800)):
    """Train an MLP head on a feature matrix with the shared early-stopping
    loop.  NaN cells are imputed to the column mean of valid training cells;
    inputs are standardized internally, so raw feature scales are safe."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("x must be (rows, features) aligned with y")
    if x.shape[0] < 10 and not cfg.allow_small:
        raise ValueError(f"refusing to fit on {x.shape[0]} rows (< 10); "
                         f"set allow_small to override")

    impute = np.zeros(x.shape[1])
    for j in range(x.shape[1]):
        valid = ~np.isnan(x[:, j])
        impute[j] = x[valid, j].mean() if valid.any() else 0.0
    xi = x.copy()
    nan = np.isnan(xi)
    xi[nan] = np.broadcast_to(impute, xi.shape)[nan]
    x_mean = xi.mean(axis=0)
    x_std = xi.std(axis=0)
    x_std[x_std == 0.0] = 1.0
    xs = ((xi - x_mean) / x_std).astype(np.float32)

    rng = np.random.default_rng(cfg.seed)
    train_idx, val_idx = _split_with_classes(
        rng, len(y), cfg.val_fraction, y, cfg.task)

    if cfg.task == "regression":
        y_mean = float(y[train_idx].mean())
        y_std = float(y[train_idx].std())
        if y_std == 0.0:
            y_std = 1.0
        targets = (y - y_mean) / y_std
    else:
        if not np.isin(y, (0.0, 1.0)).all():
            raise ValueError("binary labels must be 0 or 1")
        y_mean, y_std = 0.0, 1.0
        targets = y

    dims = [x.shape[1], *hidden, 1]
    params: list[Tensor] = []
    for i in range(len(dims) - 1):
        limit = np.sqrt(6.0 / (dims[i] + dims[i + 1]))
        w = rng.uniform(-limit, limit, size=(dims[i], dims[i + 1]))
        params.append(Tensor(w.astype(np.float32), requires_grad=True))
        params.append(Tensor(np.zeros(dims[i + 1], dtype=np.float32),
                             requires_grad=True))

    def forward(idx, training):
        h = Tensor(xs[idx])
        n_layers = len(params) // 2
        for i in range(n_layers):
            h = T.add(T.matmul(h, params[2 * i]), params[2 * i + 1])
            if i < n_layers - 1:
                h = T.relu(h)
        return h

    history, best_epoch, best_val = train_with_early_stopping(
        forward, targets, train_idx, val_idx, cfg.task,
        [(params, cfg.lr_head)], cfg, rng)

    net = TabularNet([p.data.copy() for p in params], impute, x_mean, x_std,
                     y_mean, y_std, cfg.task)
    return net, history


# ---------------------------------------------------------------------------
# the two baseline models
# ---------------------------------------------------------------------------

@dataclass
class DescriptorFnnModel:
    """MLP over the raw descriptor vector (fastprop-style)."""

    net: TabularNet

    def predict(self, mols) -> np.ndarray:
        mat = compute_matrix(mols)
        return self.net.predict(mat.values)


def descriptor_fnn_fit(mols, labels, cfg: FinetuneConfig,
                       hidden: tuple[int, ...] = (1800, 1800)):
    mat = compute_matrix(list(mols))
    net, history = fit_tabular(mat.values, labels, cfg, hidden)
    return DescriptorFnnModel(net), history


@dataclass
class PcamlpModel:
    """MLP over PCA-projected standardized descriptors.

    ``prefitted`` records whether the scaler+components came from an
    external corpus or were fit on the fine-tuning data.
    """

    scaler: ScalerStats
    pca: PcaModel
    net: TabularNet
    prefitted: bool

    def predict(self, mols) -> np.ndarray:
        mat = compute_matrix(mols)
        std = apply_scaler(mat, self.scaler)
        z = pca_project(self.pca, _imputed(std))
        return self.net.predict(z)


def pcamlp_fit(mols, labels, cfg: FinetuneConfig,
               hidden: tuple[int, ...] = (1800, 1800),
               prefitted: tuple[ScalerStats, PcaModel] | None = None,
               variance_threshold: float = 0.95):
    """PCA+MLP in pre-fitted (corpus scaler/components supplied) or local
    mode (both fit on the fine-tuning molecules)."""
    mols = list(mols)
    mat = compute_matrix(mols)
    if prefitted is not None:
        scaler, pca = prefitted
    else:
        scaler = fit_scaler(mat)
        pca = fit_pca(apply_scaler(mat, scaler), variance_threshold)
    std = apply_scaler(mat, scaler)
    z = pca_project(pca, _imputed(std))
    net, history = fit_tabular(z, labels, cfg, hidden)
    return PcamlpModel(scaler, pca, net, prefitted is not None), history
