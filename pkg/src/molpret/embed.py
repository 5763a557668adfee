"""Fingerprint analysis: Morgan hashing, cosine series sorting, exact t-SNE.

The Morgan fingerprint hashes iterated neighborhood environments of heavy
atoms into a fixed-width count vector.  Series sorting ranks the members of
a chemical series by cosine distance to the lead molecule and scores the
agreement with the reference order using Kendall tau-b.  The t-SNE here is
the exact O(n^2) algorithm: per-row bandwidths are tuned by binary search
until the conditional distribution's entropy matches log2(perplexity),
followed by momentum gradient descent with early exaggeration.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.stats import kendalltau

from .errors import InputError
from .molgraph import Molecule, SmilesError, parse_smiles

_BOND_CODE = {"single": 1, "double": 2, "triple": 3, "aromatic": 4}


def _hash64(*ints) -> int:
    payload = struct.pack(f"<{len(ints)}q", *ints)
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(),
                          "little", signed=True)


def morgan_fingerprint(m: Molecule, radius: int = 2, width: int = 2048,
                       counts: bool = True) -> np.ndarray:
    """Circular fingerprint over heavy atoms.

    The round-0 invariant is (atomic number, heavy degree, charge,
    hydrogen count, aromatic, in-ring); each subsequent round hashes the
    center's previous identifier with the sorted (bond order, neighbor
    identifier) pairs.  All round identifiers fold into ``width`` by
    modulo.  Deterministic under atom permutation.
    """
    heavy = [i for i, a in enumerate(m.atoms) if a.element != "H"]
    local = {g: k for k, g in enumerate(heavy)}
    ring_atoms = set()
    for b in m.bonds:
        if b.in_ring:
            ring_atoms.add(b.a1)
            ring_atoms.add(b.a2)

    neighbor_bonds: list[list[tuple[int, int]]] = [[] for _ in heavy]
    for b in m.bonds:
        if b.a1 in local and b.a2 in local:
            code = _BOND_CODE[b.order]
            neighbor_bonds[local[b.a1]].append((code, local[b.a2]))
            neighbor_bonds[local[b.a2]].append((code, local[b.a1]))

    ids = []
    for k, g in enumerate(heavy):
        a = m.atoms[g]
        h = a.total_h + sum(1 for nb in m.adjacency[g]
                            if m.atoms[nb].element == "H")
        ids.append(_hash64(a.atomic_number, len(neighbor_bonds[k]),
                           a.formal_charge, h, int(a.aromatic),
                           int(g in ring_atoms)))

    fp = np.zeros(width, dtype=np.int64)
    for i in ids:
        fp[i % width] += 1
    for _ in range(radius):
        new_ids = []
        for k in range(len(heavy)):
            env = sorted((code, ids[nb]) for code, nb in neighbor_bonds[k])
            flat = [ids[k]]
            for code, nb_id in env:
                flat.extend((code, nb_id))
            new_ids.append(_hash64(*flat))
        ids = new_ids
        for i in ids:
            fp[i % width] += 1
    if not counts:
        return (fp > 0).astype(np.int64)
    return fp


# ---------------------------------------------------------------------------
# series sorting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Series:
    """A lead molecule and its members, given in the reference order of
    increasing dissimilarity from the lead."""

    lead: Molecule
    members: tuple[Molecule, ...]
    lead_smiles: str = ""
    member_smiles: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.members:
            raise ValueError("a series needs at least one member")


def load_series_json(path) -> list[Series]:
    """Series file: JSON list of {"lead": smiles, "members": [smiles, ...]}."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise InputError(f"{path}: expected a JSON list of series")
    out = []
    for i, entry in enumerate(raw):
        try:
            lead = parse_smiles(entry["lead"])
            members = tuple(parse_smiles(s) for s in entry["members"])
        except (KeyError, TypeError) as e:
            raise InputError(f"{path}: series {i}: missing field {e}") from e
        except SmilesError as e:
            raise InputError(f"{path}: series {i}: {e}") from e
        out.append(Series(lead, members, entry["lead"],
                          tuple(entry["members"])))
    return out


@dataclass(frozen=True)
class CosineSortResult:
    order: tuple[int, ...]       # member indices sorted by distance to lead
    distances: tuple[float, ...]
    tau: float                   # Kendall tau-b vs the reference order
    flagged: tuple[int, ...]     # members with zero-norm embeddings


def cosine_sort(series: Series, fp_fn) -> CosineSortResult:
    """Sort members by cosine distance to the lead's embedding.

    Zero-norm embeddings rank last and are flagged.  The agreement score is
    Kendall tau-b between the predicted distances and the reference order,
    so the result is invariant to positive rescaling of the embeddings.
    """
    if len(series.members) < 2:
        raise ValueError("cosine_sort needs at least 2 members")
    lead_e = np.asarray(fp_fn(series.lead), dtype=np.float64).reshape(-1)
    embeddings = [np.asarray(fp_fn(mol), dtype=np.float64).reshape(-1)
                  for mol in series.members]
    lead_norm = np.linalg.norm(lead_e)
    distances = []
    flagged = []
    for i, e in enumerate(embeddings):
        norm = np.linalg.norm(e)
        if norm == 0.0 or lead_norm == 0.0:
            distances.append(float("inf"))
            flagged.append(i)
        else:
            distances.append(1.0 - float(lead_e @ e) / (lead_norm * norm))
    order = tuple(int(i) for i in np.argsort(distances, kind="mergesort"))
    finite = [d if math.isfinite(d) else max(
        [x for x in distances if math.isfinite(x)], default=0.0) + 1.0
        for d in distances]
    tau, _ = kendalltau(finite, np.arange(len(distances)), variant="b")
    return CosineSortResult(order, tuple(distances),
                            float(tau) if tau == tau else float("nan"),
                            tuple(flagged))


# ---------------------------------------------------------------------------
# exact t-SNE
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TsneResult:
    coords: np.ndarray          # (n, 2)
    kl_initial: float
    kl_final: float
    row_perplexities: np.ndarray


def _conditional_p(d2_row: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Row of conditional probabilities at precision beta and its Shannon
    entropy in bits."""
    w = np.exp(-beta * (d2_row - d2_row.min()))
    total = w.sum()
    p = w / total
    nz = p > 0
    entropy = -float((p[nz] * np.log2(p[nz])).sum())
    return p, entropy


def _calibrate_row(d2_row: np.ndarray, target_bits: float, tol: float,
                   max_iter: int = 60) -> tuple[np.ndarray, float]:
    beta = 1.0
    lo, hi = 0.0, float("inf")
    p, h = _conditional_p(d2_row, beta)
    for _ in range(max_iter):
        if abs(h - target_bits) <= tol:
            break
        if h > target_bits:  # too flat: tighten the kernel
            lo = beta
            beta = beta * 2.0 if hi == float("inf") else 0.5 * (beta + hi)
        else:
            hi = beta
            beta = 0.5 * (beta + lo)
        p, h = _conditional_p(d2_row, beta)
    return p, h


def joint_probabilities(points: np.ndarray, perplexity: float,
                        entropy_tol: float | None = None):
    """Symmetrized t-SNE P matrix plus per-row achieved perplexities.

    Each row's bandwidth is bisected until the conditional entropy matches
    log2(perplexity); squared distances are floored at 1e-12 so duplicate
    points cannot collapse the kernel.
    """
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    sq = (x * x).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (x @ x.T), 1e-12)
    target_bits = math.log2(perplexity)
    if entropy_tol is None:
        # tight enough that the achieved perplexity lands within 1e-3
        entropy_tol = min(1e-4, 5e-4 / (perplexity * math.log(2.0)))
    cond = np.zeros((n, n))
    perp = np.zeros(n)
    others = np.arange(n)
    for i in range(n):
        mask = others != i
        p_row, h = _calibrate_row(d2[i, mask], target_bits, entropy_tol)
        cond[i, mask] = p_row
        perp[i] = 2.0 ** h
    p_joint = (cond + cond.T) / (2.0 * n)
    return p_joint, perp


def _kl(p: np.ndarray, y: np.ndarray) -> float:
    q_num = 1.0 / (1.0 + _pairwise_sq(y))
    np.fill_diagonal(q_num, 0.0)
    q = q_num / q_num.sum()
    nz = p > 0
    return float((p[nz] * np.log(p[nz] / np.maximum(q[nz], 1e-12))).sum())


def _pairwise_sq(y: np.ndarray) -> np.ndarray:
    sq = (y * y).sum(axis=1)
    return np.maximum(sq[:, None] + sq[None, :] - 2.0 * (y @ y.T), 0.0)


def _pca_init(x: np.ndarray, scale: float = 1e-4) -> np.ndarray:
    xc = x - x.mean(axis=0)
    cov = (xc.T @ xc) / x.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    components = eigvecs[:, np.argsort(-eigvals)[:2]]
    y = xc @ components
    if y.shape[1] < 2:
        y = np.hstack([y, np.zeros((y.shape[0], 2 - y.shape[1]))])
    for c in range(2):
        std = y[:, c].std()
        if std > 0:
            y[:, c] *= scale / std
    return y


def tsne(points, perplexity: float = 30.0, iters: int = 1000,
         lr: float = 200.0, early_exaggeration: float = 12.0,
         exaggeration_iters: int = 250, seed: int = 0,
         init: str = "pca") -> TsneResult:
    """Exact t-SNE to two dimensions.

    PCA initialization (scaled to 1e-4 std) keeps runs reproducible;
    ``init="random"`` draws seeded normal coordinates instead.  Momentum
    steps from 0.5 to 0.8 when early exaggeration ends.
    """
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    if n < 3:
        raise ValueError("t-SNE needs at least 3 points")
    if not perplexity < n:
        raise ValueError("perplexity must be smaller than the point count")

    p, row_perp = joint_probabilities(x, perplexity)

    if init == "pca":
        y = _pca_init(x)
    elif init == "random":
        y = np.random.default_rng(seed).normal(0.0, 1e-4, size=(n, 2))
    else:
        raise ValueError(f"unknown init {init!r}")

    kl_initial = _kl(p, y)
    velocity = np.zeros_like(y)
    for it in range(iters):
        exaggerating = it < exaggeration_iters
        p_eff = p * early_exaggeration if exaggerating else p
        q_num = 1.0 / (1.0 + _pairwise_sq(y))
        np.fill_diagonal(q_num, 0.0)
        q = q_num / q_num.sum()
        w = (p_eff - q) * q_num
        grad = 4.0 * (np.diag(w.sum(axis=1)) @ y - w @ y)
        momentum = 0.5 if exaggerating else 0.8
        velocity = momentum * velocity - lr * grad
        y = y + velocity
        y = y - y.mean(axis=0)
    kl_final = _kl(p, y)
    return TsneResult(y, kl_initial, kl_final, row_perp)
