"""Canonical descriptor vector and the standardize-then-clip target transform.

The descriptor set is a fixed, versioned list of 26 values spanning three
algorithm families: substructure/element counting, additive aggregation
(molecular weight, McGowan volume) and topological complexity indices
(Randic, Zagreb, Wiener, Balaban, eccentric connectivity).  All values are
computed directly from the molecular graph.

Multi-fragment inputs: counting and aggregation descriptors sum over
fragments; path-based complexity descriptors are computed on the largest
fragment.  Descriptors that are undefined for a molecule (Balaban J on a
single atom, McGowan volume with an atom missing from the volume table)
are reported through the validity mask rather than raising.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FileFormatError
from .molgraph import (
    HALOGENS,
    PERIODIC,
    Molecule,
    QueryAtom,
    QueryBond,
    QueryGraph,
    count_subgraph_matches,
)

DESCRIPTOR_FORMAT_VERSION = 1

# McGowan characteristic atomic volumes, indexed by atomic number.  The
# published scheme is linear within each period (steps of 1.96 through the
# second and third periods, 1.60/1.61 thereafter); hydrogen is 8.71 and each
# bond, including bonds to hydrogen, subtracts 6.56.
MCGOWAN_VOLUMES: dict[int, float] = dict(enumerate([
    8.71, 6.75,
    22.23, 20.27, 18.31, 16.35, 14.39, 12.43, 10.47, 8.51,
    32.71, 30.75, 28.79, 26.83, 24.87, 22.91, 20.95, 18.99,
    51.89, 50.28, 48.68, 47.07, 45.47, 43.86, 42.26, 40.65, 39.05,
    37.44, 35.84, 34.23, 32.63, 31.02, 29.42, 27.81, 26.21, 24.60,
    60.22, 58.61, 57.01, 55.40, 53.80, 52.19, 50.59, 48.98, 47.38,
    45.77, 44.17, 42.56, 40.96, 39.35, 37.75, 36.14, 34.54, 32.93,
], start=1))
MCGOWAN_BOND_DECREMENT = 6.56


@dataclass(frozen=True)
class DescriptorSpec:
    name: str
    kind: str  # counting | aggregation | complexity
    domain_note: str


_COUNT = "sums over fragments"
_LARGEST = "computed on the largest fragment"

DESCRIPTOR_SPECS: tuple[DescriptorSpec, ...] = (
    DescriptorSpec("nHeavy", "counting", _COUNT),
    DescriptorSpec("nC", "counting", _COUNT),
    DescriptorSpec("nN", "counting", _COUNT),
    DescriptorSpec("nO", "counting", _COUNT),
    DescriptorSpec("nHalogen", "counting", _COUNT),
    DescriptorSpec("nHetero", "counting", _COUNT),
    DescriptorSpec("nBondsHeavy", "counting", _COUNT),
    DescriptorSpec("nAromaticAtoms", "counting", _COUNT),
    DescriptorSpec("nRings", "counting", "cyclomatic number of the full graph"),
    DescriptorSpec("nRotatableBonds", "counting",
                   "non-ring single bonds between heavy atoms of degree >= 2"),
    DescriptorSpec("nHBD", "counting", "N or O bearing at least one hydrogen"),
    DescriptorSpec("nHBA", "counting", "count of N and O atoms"),
    DescriptorSpec("nCarbonyl", "counting", _COUNT),
    DescriptorSpec("nHydroxyl", "counting", _COUNT),
    DescriptorSpec("nCarboxyl", "counting", _COUNT),
    DescriptorSpec("nAmine", "counting",
                   "neutral non-aromatic N with only single bonds"),
    DescriptorSpec("nNitro", "counting", _COUNT),
    DescriptorSpec("nEster", "counting", _COUNT),
    DescriptorSpec("MW", "aggregation", "includes implicit hydrogens"),
    DescriptorSpec("McGowanVolume", "aggregation",
                   "masked if an atom is missing from the volume table"),
    DescriptorSpec("RandicChi", "complexity", "edge sum over heavy bonds"),
    DescriptorSpec("ZagrebM1", "complexity", "sum of squared heavy degrees"),
    DescriptorSpec("ZagrebM2", "complexity", "edge sum of degree products"),
    DescriptorSpec("WienerIndex", "complexity", _LARGEST),
    DescriptorSpec("BalabanJ", "complexity",
                   _LARGEST + "; masked below 2 heavy atoms"),
    DescriptorSpec("EccentricConnectivity", "complexity", _LARGEST),
)

DESCRIPTOR_NAMES: tuple[str, ...] = tuple(s.name for s in DESCRIPTOR_SPECS)
N_DESCRIPTORS = len(DESCRIPTOR_NAMES)

_ANY = QueryAtom()

PATTERNS: dict[str, QueryGraph] = {
    "carbonyl": QueryGraph(
        (QueryAtom(element="C"), QueryAtom(element="O")),
        (QueryBond(0, 1, "double"),)),
    "hydroxyl": QueryGraph(
        (QueryAtom(element="O", min_h=1), _ANY),
        (QueryBond(0, 1, "single"),)),
    "carboxyl": QueryGraph(
        (QueryAtom(element="C"), QueryAtom(element="O"),
         QueryAtom(element="O", min_h=1)),
        (QueryBond(0, 1, "double"), QueryBond(0, 2, "single"))),
    "amine": QueryGraph(
        (QueryAtom(element="N", aromatic=False, charge=0,
                   single_bonds_only=True),),
        ()),
    "nitro": QueryGraph(
        (QueryAtom(element="N"), QueryAtom(element="O"),
         QueryAtom(element="O")),
        (QueryBond(0, 1, "double"), QueryBond(0, 2, None))),
    "ester": QueryGraph(
        (QueryAtom(element="C"), QueryAtom(element="O"),
         QueryAtom(element="O"), QueryAtom(element="C")),
        (QueryBond(0, 1, "double"), QueryBond(0, 2, "single"),
         QueryBond(2, 3, "single"))),
}


# ---------------------------------------------------------------------------
# heavy-atom graph view
# ---------------------------------------------------------------------------

class _HeavyGraph:
    """Heavy-atom subgraph with component bookkeeping."""

    def __init__(self, m: Molecule):
        self.mol = m
        self.heavy = [i for i, a in enumerate(m.atoms) if a.element != "H"]
        local = {g: k for k, g in enumerate(self.heavy)}
        self.n = len(self.heavy)
        self.adj: list[list[int]] = [[] for _ in range(self.n)]
        self.bonds = []  # (local1, local2, bond)
        for b in m.bonds:
            if b.a1 in local and b.a2 in local:
                i, j = local[b.a1], local[b.a2]
                self.adj[i].append(j)
                self.adj[j].append(i)
                self.bonds.append((i, j, b))
        self.degree = [len(nb) for nb in self.adj]
        self.components = self._components()

    def _components(self) -> list[list[int]]:
        seen = [False] * self.n
        comps = []
        for start in range(self.n):
            if seen[start]:
                continue
            comp = [start]
            seen[start] = True
            frontier = [start]
            while frontier:
                v = frontier.pop()
                for w in self.adj[v]:
                    if not seen[w]:
                        seen[w] = True
                        comp.append(w)
                        frontier.append(w)
            comps.append(sorted(comp))
        return comps

    def largest_component(self) -> list[int]:
        return max(self.components, key=len) if self.components else []

    def distances(self, nodes: list[int]) -> np.ndarray:
        """All-pairs shortest-path matrix (BFS per source, unit weights)."""
        local = {g: k for k, g in enumerate(nodes)}
        n = len(nodes)
        dist = np.full((n, n), -1, dtype=np.int64)
        for si, s in enumerate(nodes):
            dist[si, si] = 0
            frontier = [s]
            d = 0
            while frontier:
                d += 1
                nxt = []
                for v in frontier:
                    for w in self.adj[v]:
                        wi = local.get(w)
                        if wi is not None and dist[si, wi] < 0:
                            dist[si, wi] = d
                            nxt.append(w)
                frontier = nxt
        return dist

    def total_h(self, local_idx: int) -> int:
        g = self.heavy[local_idx]
        a = self.mol.atoms[g]
        attached = sum(1 for nb in self.mol.adjacency[g]
                       if self.mol.atoms[nb].element == "H")
        return a.total_h + attached


# ---------------------------------------------------------------------------
# individual descriptor operations
# ---------------------------------------------------------------------------

def wiener_index(m: Molecule) -> float:
    """Sum of shortest-path distances over unordered heavy-atom pairs.

    Multi-fragment molecules use the largest fragment; a single heavy atom
    gives 0.
    """
    hg = _HeavyGraph(m)
    comp = hg.largest_component()
    if len(comp) < 2:
        return 0.0
    dist = hg.distances(comp)
    return float(dist.sum()) / 2.0


def mcgowan_volume(m: Molecule) -> float | None:
    """Additive McGowan volume in (cm^3/mol)/100, or None when an atom is
    missing from the volume table.  Implicit hydrogens contribute both
    their atomic volume and one bond each."""
    total = 0.0
    n_h = 0
    for a in m.atoms:
        z = PERIODIC[a.element][0]
        v = MCGOWAN_VOLUMES.get(z)
        if v is None:
            return None
        total += v
        n_h += a.total_h
    total += n_h * MCGOWAN_VOLUMES[1]
    n_bonds = len(m.bonds) + n_h
    return (total - MCGOWAN_BOND_DECREMENT * n_bonds) / 100.0


def balaban_j(m: Molecule) -> float | None:
    """Balaban's J index on the largest heavy fragment; None below two
    atoms.  J = m/(gamma+1) * sum over edges of (S_i * S_j)^(-1/2) where
    S_i are distance-matrix row sums."""
    hg = _HeavyGraph(m)
    comp = hg.largest_component()
    if len(comp) < 2:
        return None
    local = {g: k for k, g in enumerate(comp)}
    comp_set = set(comp)
    dist = hg.distances(comp)
    row_sums = dist.sum(axis=1).astype(np.float64)
    edges = [(local[i], local[j]) for i, j, _ in hg.bonds
             if i in comp_set and j in comp_set]
    n_edges = len(edges)
    gamma = n_edges - len(comp) + 1
    acc = sum(1.0 / math.sqrt(row_sums[i] * row_sums[j]) for i, j in edges)
    return n_edges / (gamma + 1.0) * acc


def eccentric_connectivity(m: Molecule) -> float:
    """Sum of eccentricity times degree over the largest heavy fragment."""
    hg = _HeavyGraph(m)
    comp = hg.largest_component()
    if len(comp) < 2:
        return 0.0
    dist = hg.distances(comp)
    ecc = dist.max(axis=1)
    degs = np.array([hg.degree[v] for v in comp], dtype=np.int64)
    return float((ecc * degs).sum())


def compute_descriptors(m: Molecule) -> tuple[np.ndarray, np.ndarray]:
    """The canonical 26-element descriptor vector and its validity mask.

    Invalid entries hold NaN and mask False; everything else is finite.
    """
    hg = _HeavyGraph(m)
    values = np.full(N_DESCRIPTORS, np.nan, dtype=np.float64)
    mask = np.zeros(N_DESCRIPTORS, dtype=bool)

    def put(name: str, value, valid: bool = True) -> None:
        j = DESCRIPTOR_NAMES.index(name)
        if valid and value is not None:
            values[j] = float(value)
            mask[j] = True

    atoms = [m.atoms[g] for g in hg.heavy]
    put("nHeavy", hg.n)
    put("nC", sum(a.element == "C" for a in atoms))
    put("nN", sum(a.element == "N" for a in atoms))
    put("nO", sum(a.element == "O" for a in atoms))
    put("nHalogen", sum(a.element in HALOGENS for a in atoms))
    put("nHetero", sum(a.element != "C" for a in atoms))
    put("nBondsHeavy", len(hg.bonds))
    put("nAromaticAtoms", sum(a.aromatic for a in atoms))
    put("nRings", m.n_rings)

    rotatable = sum(
        1 for i, j, b in hg.bonds
        if b.order == "single" and not b.in_ring
        and hg.degree[i] >= 2 and hg.degree[j] >= 2)
    put("nRotatableBonds", rotatable)

    put("nHBD", sum(1 for k, a in enumerate(atoms)
                    if a.element in ("N", "O") and hg.total_h(k) >= 1))
    put("nHBA", sum(a.element in ("N", "O") for a in atoms))

    for name in ("carbonyl", "hydroxyl", "carboxyl", "amine", "nitro", "ester"):
        put("n" + name.capitalize(), count_subgraph_matches(m, PATTERNS[name]))

    mw = sum(PERIODIC[a.element][1] for a in m.atoms)
    mw += PERIODIC["H"][1] * sum(a.total_h for a in m.atoms)
    put("MW", mw)
    put("McGowanVolume", mcgowan_volume(m))

    randic = sum(1.0 / math.sqrt(hg.degree[i] * hg.degree[j])
                 for i, j, _ in hg.bonds)
    put("RandicChi", randic)
    put("ZagrebM1", float(sum(d * d for d in hg.degree)))
    put("ZagrebM2", float(sum(hg.degree[i] * hg.degree[j]
                              for i, j, _ in hg.bonds)))

    put("WienerIndex", wiener_index(m))
    put("BalabanJ", balaban_j(m))
    put("EccentricConnectivity", eccentric_connectivity(m))
    return values, mask


# ---------------------------------------------------------------------------
# matrices and scaling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DescriptorMatrix:
    """Dense rows of named descriptor values with a validity mask.

    Invalid cells hold NaN and mask False; they are excluded from every
    statistic computed downstream.
    """

    names: tuple[str, ...]
    values: np.ndarray  # (rows, cols) float64, NaN where invalid
    mask: np.ndarray    # (rows, cols) bool
    row_ids: tuple[str, ...]

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


def compute_matrix(mols, row_ids=None) -> DescriptorMatrix:
    """Descriptor matrix for a list of molecules."""
    rows = []
    masks = []
    for m in mols:
        v, k = compute_descriptors(m)
        rows.append(v)
        masks.append(k)
    if row_ids is None:
        row_ids = tuple(str(i) for i in range(len(rows)))
    values = np.array(rows) if rows else np.zeros((0, N_DESCRIPTORS))
    mask = np.array(masks) if masks else np.zeros((0, N_DESCRIPTORS), dtype=bool)
    return DescriptorMatrix(DESCRIPTOR_NAMES, values, mask, tuple(row_ids))


@dataclass(frozen=True)
class ScalerStats:
    """Per-column standardization statistics with a clip bound.

    ``std`` is the population standard deviation over mask-valid cells;
    columns with no valid cells or zero spread are flagged constant and
    masked out downstream.
    """

    names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    clip_sigmas: float
    constant: np.ndarray  # bool per column


def fit_scaler(d: DescriptorMatrix, clip_sigmas: float = 6.0) -> ScalerStats:
    if d.n_rows < 2:
        raise ValueError("scaler fitting needs at least 2 rows")
    cols = d.n_cols
    mean = np.zeros(cols)
    std = np.zeros(cols)
    constant = np.zeros(cols, dtype=bool)
    for j in range(cols):
        valid = d.mask[:, j]
        if not valid.any():
            constant[j] = True
            continue
        x = d.values[valid, j]
        mean[j] = x.mean()
        std[j] = math.sqrt(float(np.mean((x - mean[j]) ** 2)))
        if std[j] == 0.0:
            constant[j] = True
    return ScalerStats(d.names, mean, std, clip_sigmas, constant)


def apply_scaler(d: DescriptorMatrix, s: ScalerStats) -> DescriptorMatrix:
    """Standardize to zero mean / unit sigma, then clip to ±clip_sigmas.

    Constant columns are masked False everywhere.
    """
    if d.names != s.names:
        raise ValueError("column-name mismatch between matrix and scaler")
    values = np.full_like(d.values, np.nan)
    mask = d.mask.copy()
    for j in range(d.n_cols):
        if s.constant[j]:
            mask[:, j] = False
            continue
        valid = d.mask[:, j]
        z = (d.values[valid, j] - s.mean[j]) / s.std[j]
        values[valid, j] = np.clip(z, -s.clip_sigmas, s.clip_sigmas)
    return DescriptorMatrix(d.names, values, mask, d.row_ids)


# ---------------------------------------------------------------------------
# binary and CSV persistence
# ---------------------------------------------------------------------------

CHMD_MAGIC = b"CHMD"


def save_chmd(d: DescriptorMatrix, path) -> None:
    """Write the matrix: magic, version, dims, name table, then row-major
    little-endian float32 with NaN marking invalid cells."""
    data = d.values.astype("<f4")
    data[~d.mask] = np.nan
    with open(path, "wb") as fh:
        fh.write(CHMD_MAGIC)
        fh.write(struct.pack("<I", DESCRIPTOR_FORMAT_VERSION))
        fh.write(struct.pack("<QQ", d.n_rows, d.n_cols))
        for name in d.names:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
        fh.write(data.tobytes(order="C"))


def load_chmd(path) -> DescriptorMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHMD_MAGIC:
            raise FileFormatError(f"{path}: bad magic {magic!r}, expected CHMD")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != DESCRIPTOR_FORMAT_VERSION:
            raise FileFormatError(f"{path}: unsupported version {version}")
        rows, cols = struct.unpack("<QQ", fh.read(16))
        names = []
        for _ in range(cols):
            (ln,) = struct.unpack("<I", fh.read(4))
            names.append(fh.read(ln).decode("utf-8"))
        raw = fh.read(rows * cols * 4)
        if len(raw) != rows * cols * 4:
            raise FileFormatError(f"{path}: truncated data section")
    values = np.frombuffer(raw, dtype="<f4").reshape(rows, cols).astype(np.float64)
    mask = ~np.isnan(values)
    return DescriptorMatrix(tuple(names), values, mask,
                            tuple(str(i) for i in range(rows)))


def export_csv(d: DescriptorMatrix, path) -> None:
    """CSV with one row per molecule; invalid cells are left empty."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id," + ",".join(d.names) + "\n")
        for i in range(d.n_rows):
            cells = [d.row_ids[i]]
            for j in range(d.n_cols):
                cells.append(repr(float(d.values[i, j])) if d.mask[i, j] else "")
            fh.write(",".join(cells) + "\n")
