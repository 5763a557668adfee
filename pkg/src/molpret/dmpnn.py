"""Directed message-passing network over molecular graphs.

Hidden states live on directed bonds.  Each undirected bond contributes two
directed edges; a directed edge aggregates the incoming states at its
source atom minus its own reverse, so messages never bounce straight back.
The molecule embedding is the mean over atom readout states and doubles as
the learned fingerprint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .molgraph import Molecule
from .tensor import Tensor

FEATURIZATION_VERSION = 1

ELEMENT_ORDER = ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I")
_N_ELEM = len(ELEMENT_ORDER) + 1          # trailing slot: any other element
_N_DEGREE = 6                             # 0..5, clipped
_N_CHARGE = 5                             # -2..+2, clipped
_N_HCOUNT = 5                             # 0..4, clipped
ATOM_FDIM = _N_ELEM + _N_DEGREE + _N_CHARGE + 1 + _N_HCOUNT
BOND_ORDER_INDEX = {"single": 0, "double": 1, "triple": 2, "aromatic": 3}
BOND_FDIM = len(BOND_ORDER_INDEX) + 1


def atom_feature_vector(m: Molecule, idx: int) -> np.ndarray:
    """One-hot element/degree/charge/H-count features plus aromatic flag."""
    a = m.atoms[idx]
    vec = np.zeros(ATOM_FDIM, dtype=np.float32)
    try:
        vec[ELEMENT_ORDER.index(a.element)] = 1.0
    except ValueError:
        vec[_N_ELEM - 1] = 1.0
    off = _N_ELEM
    vec[off + min(len(m.adjacency[idx]), _N_DEGREE - 1)] = 1.0
    off += _N_DEGREE
    vec[off + min(max(a.formal_charge, -2), 2) + 2] = 1.0
    off += _N_CHARGE
    vec[off] = 1.0 if a.aromatic else 0.0
    off += 1
    vec[off + min(a.total_h, _N_HCOUNT - 1)] = 1.0
    return vec


def bond_feature_vector(order: str, in_ring: bool) -> np.ndarray:
    vec = np.zeros(BOND_FDIM, dtype=np.float32)
    vec[BOND_ORDER_INDEX[order]] = 1.0
    vec[-1] = 1.0 if in_ring else 0.0
    return vec


@dataclass
class BatchGraph:
    """Concatenated feature matrices and directed-edge index tables for a
    batch of molecules.

    Every undirected bond yields two directed edges; ``rev`` maps each edge
    to its reverse and is an involution.  ``scopes`` holds the (start,
    count) atom range of each molecule.
    """

    atom_features: np.ndarray   # (n_atoms, ATOM_FDIM)
    bond_features: np.ndarray   # (n_edges, BOND_FDIM)
    edge_src: np.ndarray        # (n_edges,) source atom of each directed edge
    edge_dst: np.ndarray        # (n_edges,)
    rev: np.ndarray             # (n_edges,) index of the reverse edge
    mol_index: np.ndarray       # (n_atoms,) molecule id per atom
    scopes: list[tuple[int, int]] = field(default_factory=list)

    @property
    def n_atoms(self) -> int:
        return self.atom_features.shape[0]

    @property
    def n_mols(self) -> int:
        return len(self.scopes)


def featurize(m: Molecule):
    """Per-molecule feature matrices and directed-edge tables."""
    n = len(m.atoms)
    atom_f = np.stack([atom_feature_vector(m, i) for i in range(n)]) \
        if n else np.zeros((0, ATOM_FDIM), dtype=np.float32)
    n_edges = 2 * len(m.bonds)
    bond_f = np.zeros((n_edges, BOND_FDIM), dtype=np.float32)
    src = np.zeros(n_edges, dtype=np.int64)
    dst = np.zeros(n_edges, dtype=np.int64)
    rev = np.zeros(n_edges, dtype=np.int64)
    for k, b in enumerate(m.bonds):
        f = bond_feature_vector(b.order, b.in_ring)
        e1, e2 = 2 * k, 2 * k + 1
        bond_f[e1] = f
        bond_f[e2] = f
        src[e1], dst[e1] = b.a1, b.a2
        src[e2], dst[e2] = b.a2, b.a1
        rev[e1], rev[e2] = e2, e1
    return atom_f, bond_f, src, dst, rev


def batch_molecules(mols) -> BatchGraph:
    return batch_from_features([featurize(m) for m in mols])


def batch_from_features(feats) -> BatchGraph:
    """Assemble a batch from cached :func:`featurize` outputs."""
    atom_blocks, bond_blocks = [], []
    srcs, dsts, revs, mol_idx, scopes = [], [], [], [], []
    atom_off = 0
    edge_off = 0
    for mi, (atom_f, bond_f, src, dst, rev) in enumerate(feats):
        atom_blocks.append(atom_f)
        bond_blocks.append(bond_f)
        srcs.append(src + atom_off)
        dsts.append(dst + atom_off)
        revs.append(rev + edge_off)
        mol_idx.append(np.full(atom_f.shape[0], mi, dtype=np.int64))
        scopes.append((atom_off, atom_f.shape[0]))
        atom_off += atom_f.shape[0]
        edge_off += bond_f.shape[0]
    cat = lambda blocks, width: (np.concatenate(blocks)
                                 if blocks else np.zeros((0, width), dtype=np.float32))
    icat = lambda blocks: (np.concatenate(blocks)
                           if blocks else np.zeros(0, dtype=np.int64))
    return BatchGraph(
        cat(atom_blocks, ATOM_FDIM), cat(bond_blocks, BOND_FDIM),
        icat(srcs), icat(dsts), icat(revs), icat(mol_idx), scopes)


@dataclass(frozen=True)
class MpnnConfig:
    """Network dimensions; defaults are desk-scale, not the full-size
    2048-wide / depth-6 configuration, which remains reachable by setting
    the fields explicitly."""

    hidden_size: int = 128
    depth: int = 3
    ffn_layers: int = 3
    ffn_hidden: int | None = None
    output_dim: int = 1
    activation: str = "relu"

    def __post_init__(self):
        for name in ("hidden_size", "depth", "ffn_layers", "output_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.activation != "relu":
            raise ValueError("only relu activation is supported")

    @property
    def ffn_width(self) -> int:
        return self.ffn_hidden if self.ffn_hidden is not None else self.hidden_size

    def to_dict(self) -> dict:
        return {
            "hidden_size": self.hidden_size,
            "depth": self.depth,
            "ffn_layers": self.ffn_layers,
            "ffn_hidden": self.ffn_hidden,
            "output_dim": self.output_dim,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MpnnConfig":
        return cls(**d)


MP_WEIGHT_NAMES = ("w_in", "b_in", "w_msg", "b_msg", "w_out", "b_out")


def weight_shapes(cfg: MpnnConfig) -> dict[str, tuple[int, ...]]:
    """Canonical name -> shape map; definition order is the checkpoint
    serialization order."""
    h = cfg.hidden_size
    shapes: dict[str, tuple[int, ...]] = {
        "w_in": (ATOM_FDIM + BOND_FDIM, h),
        "b_in": (h,),
        "w_msg": (h, h),
        "b_msg": (h,),
        "w_out": (ATOM_FDIM + h, h),
        "b_out": (h,),
    }
    dims = [h] + [cfg.ffn_width] * (cfg.ffn_layers - 1) + [cfg.output_dim]
    for i in range(cfg.ffn_layers):
        shapes[f"ffn{i}_w"] = (dims[i], dims[i + 1])
        shapes[f"ffn{i}_b"] = (dims[i + 1],)
    return shapes


def init_weights(cfg: MpnnConfig, seed: int, dtype=np.float32) -> dict[str, Tensor]:
    """Seeded Xavier-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in weight_shapes(cfg).items():
        if name.endswith("_b") or name.startswith("b_"):
            data = np.zeros(shape, dtype=dtype)
        else:
            fan_in, fan_out = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            data = rng.uniform(-limit, limit, size=shape).astype(dtype)
        weights[name] = Tensor(data, requires_grad=True, dtype=dtype)
    return weights


def head_weight_names(cfg: MpnnConfig) -> tuple[str, ...]:
    return tuple(n for n in weight_shapes(cfg) if n.startswith("ffn"))


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return T.add(T.matmul(x, w), b)


def edge_hidden_states(batch: BatchGraph, cfg: MpnnConfig,
                       weights: dict[str, Tensor]) -> Tensor:
    """Final directed-edge states after ``depth - 1`` update iterations."""
    atom_f = Tensor(batch.atom_features, dtype=weights["w_in"].dtype)
    bond_f = Tensor(batch.bond_features, dtype=weights["w_in"].dtype)
    x_src = T.gather_rows(atom_f, batch.edge_src)
    h0 = T.relu(_linear(T.concat([x_src, bond_f], axis=1),
                        weights["w_in"], weights["b_in"]))
    h = h0
    for _ in range(cfg.depth - 1):
        # m_vw = sum of incoming states at v minus the reverse edge's state
        incoming = T.scatter_add_rows(h, batch.edge_dst, batch.n_atoms)
        msg = T.sub(T.gather_rows(incoming, batch.edge_src),
                    T.gather_rows(h, batch.rev))
        h = T.relu(T.add(h0, _linear(msg, weights["w_msg"], weights["b_msg"])))
    return h


def encode(batch: BatchGraph, cfg: MpnnConfig,
           weights: dict[str, Tensor]) -> Tensor:
    """Molecule embeddings: mean over atom readout states."""
    atom_f = Tensor(batch.atom_features, dtype=weights["w_in"].dtype)
    h = edge_hidden_states(batch, cfg, weights)
    atom_agg = T.scatter_add_rows(h, batch.edge_dst, batch.n_atoms)
    h_atom = T.relu(_linear(T.concat([atom_f, atom_agg], axis=1),
                            weights["w_out"], weights["b_out"]))
    mol_sum = T.scatter_add_rows(h_atom, batch.mol_index, batch.n_mols)
    counts = np.array([[1.0 / max(c, 1)] for _, c in batch.scopes],
                      dtype=weights["w_in"].dtype)
    return T.mul(mol_sum, Tensor(counts, dtype=weights["w_in"].dtype))


def head(embedding: Tensor, cfg: MpnnConfig,
         weights: dict[str, Tensor]) -> Tensor:
    """FNN readout: ffn_layers linear maps with relu between them."""
    h = embedding
    for i in range(cfg.ffn_layers - 1):
        h = T.relu(_linear(h, weights[f"ffn{i}_w"], weights[f"ffn{i}_b"]))
    last = cfg.ffn_layers - 1
    return _linear(h, weights[f"ffn{last}_w"], weights[f"ffn{last}_b"])


def forward(batch: BatchGraph, cfg: MpnnConfig,
            weights: dict[str, Tensor]) -> Tensor:
    """Per-molecule output vectors, shape (n_mols, output_dim)."""
    return head(encode(batch, cfg, weights), cfg, weights)


def fingerprint(mols, cfg: MpnnConfig, weights: dict[str, Tensor]) -> np.ndarray:
    """Learned representation: the mean-aggregated atom states feeding the
    FNN head.  Returns an (n_mols, hidden_size) array."""
    if not mols:
        return np.zeros((0, cfg.hidden_size), dtype=np.float32)
    batch = batch_molecules(mols)
    return np.asarray(encode(batch, cfg, weights).data)
