"""Shared test utilities: a random-molecule generator and independent
oracles kept deliberately separate from the package implementations."""

from __future__ import annotations

import itertools
import math

import numpy as np

from molpret.molgraph import Molecule

# element, max valence, sampling weight
_GEN_ELEMENTS = (
    ("C", 4, 0.62), ("N", 3, 0.12), ("O", 2, 0.14), ("S", 2, 0.05),
    ("F", 1, 0.04), ("Cl", 1, 0.03),
)

CURATED_SMILES = [
    "C", "CC", "CCC", "CCCC", "CCCCC", "CC(C)C", "CC(C)(C)C",
    "CCO", "OCCO", "CC(=O)O", "CC(=O)OC", "CC(=O)OCC", "CC(=O)N",
    "CCN", "CCCN", "CC(C)O", "CCS", "CCCl", "CCBr", "CCI", "CCF",
    "C#N", "C#CC", "C=C", "C=CC=C", "N#CC#N",
    "c1ccccc1", "Cc1ccccc1", "c1ccncc1", "c1ccc2ccccc2c1",
    "c1ccoc1", "c1ccsc1", "c1cc[nH]c1", "Oc1ccccc1", "Nc1ccccc1",
    "CC(=O)Oc1ccccc1C(=O)O", "c1ccc(cc1)C(=O)O",
    "C1CC1", "C1CCC1", "C1CCCC1", "C1CCCCC1", "C1CCOC1", "C1CCNC1",
    "C1CC1.C", "CC(=O)O.CCO", "[Na+].[Cl-]", "C[N+](=O)[O-]",
    "CN(=O)=O", "[13CH4]", "[C]", "[CH3-]", "[NH4+]", "O=C=O", "S=C=S",
    "ClC(Cl)(Cl)Cl", "FC(F)(F)F",
]


def random_molecule_smiles(rng: np.random.Generator,
                           max_heavy: int = 12) -> str:
    """Emit a random parseable SMILES with valence bookkeeping.

    Builds a random tree over sampled elements, optionally upgrades bonds
    to doubles and adds up to two extra ring-closure edges, then writes the
    string by depth-first traversal.  Aromatic systems are not generated
    (curated strings cover them).
    """
    n = int(rng.integers(1, max_heavy + 1))
    symbols, max_val = [], []
    weights = np.array([w for _, _, w in _GEN_ELEMENTS])
    weights = weights / weights.sum()
    for _ in range(n):
        idx = rng.choice(len(_GEN_ELEMENTS), p=weights)
        sym, val, _ = _GEN_ELEMENTS[idx]
        symbols.append(sym)
        max_val.append(val)
    free = list(max_val)

    # spanning tree
    edges: dict[tuple[int, int], int] = {}
    children: list[list[int]] = [[] for _ in range(n)]
    for i in range(1, n):
        hosts = [j for j in range(i) if free[j] >= 1]
        if not hosts:
            symbols[i - 1], max_val[i - 1] = "C", 4
            free[i - 1] += 4 - max_val[i - 1]
            hosts = [i - 1]
        j = int(hosts[rng.integers(len(hosts))])
        edges[(j, i)] = 1
        children[j].append(i)
        free[i] -= 1
        free[j] -= 1

    # upgrade a few bonds to double where both ends can afford it
    for (a, b) in list(edges):
        if free[a] >= 1 and free[b] >= 1 and rng.random() < 0.15:
            edges[(a, b)] = 2
            free[a] -= 1
            free[b] -= 1

    # extra ring edges
    ring_edges: list[tuple[int, int]] = []
    for _ in range(int(rng.integers(0, 3))):
        capable = [i for i in range(n) if free[i] >= 1]
        pairs = [(a, b) for a, b in itertools.combinations(capable, 2)
                 if (a, b) not in edges and (b, a) not in edges
                 and (a, b) not in ring_edges]
        if not pairs:
            break
        a, b = pairs[int(rng.integers(len(pairs)))]
        ring_edges.append((a, b))
        free[a] -= 1
        free[b] -= 1

    ring_digit: dict[int, list[tuple[int, int]]] = {}
    for digit, (a, b) in enumerate(ring_edges, start=1):
        ring_digit.setdefault(a, []).append((digit, 1))
        ring_digit.setdefault(b, []).append((digit, 1))

    bond_char = {1: "", 2: "=", 3: "#"}

    def write(v: int) -> str:
        out = symbols[v]
        for digit, _ in ring_digit.get(v, ()):
            out += str(digit)
        kids = children[v]
        parts = []
        for c in kids:
            parts.append(bond_char[edges[(v, c)]] + write(c))
        for part in parts[:-1]:
            out += "(" + part + ")"
        if parts:
            out += parts[-1]
        return out

    return write(0)


def build_test_corpus(seed: int, size: int, max_heavy: int = 12) -> list[str]:
    """Deterministic mixed corpus: curated strings plus generated ones."""
    rng = np.random.default_rng(seed)
    out = list(CURATED_SMILES)
    while len(out) < size:
        out.append(random_molecule_smiles(rng, max_heavy))
    return out[:size]


def random_alkane_smiles(rng: np.random.Generator, max_c: int = 12) -> str:
    """A random acyclic saturated carbon skeleton as SMILES."""
    n = int(rng.integers(1, max_c + 1))
    children: list[list[int]] = [[] for _ in range(n)]
    free = [4] * n
    for i in range(1, n):
        hosts = [j for j in range(i) if free[j] >= 1]
        j = int(hosts[rng.integers(len(hosts))])
        children[j].append(i)
        free[i] -= 1
        free[j] -= 1

    def write(v: int) -> str:
        parts = [write(c) for c in children[v]]
        out = "C"
        for part in parts[:-1]:
            out += "(" + part + ")"
        if parts:
            out += parts[-1]
        return out

    return write(0)


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------

def heavy_subgraph(m: Molecule):
    heavy = [i for i, a in enumerate(m.atoms) if a.element != "H"]
    local = {g: k for k, g in enumerate(heavy)}
    edges = [(local[b.a1], local[b.a2], b) for b in m.bonds
             if b.a1 in local and b.a2 in local]
    return heavy, edges


def floyd_warshall(m: Molecule) -> np.ndarray:
    """All-pairs distances over the heavy graph by the classic triple loop."""
    heavy, edges = heavy_subgraph(m)
    n = len(heavy)
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for i, j, _ in edges:
        dist[i, j] = dist[j, i] = 1.0
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if dist[i, k] + dist[k, j] < dist[i, j]:
                    dist[i, j] = dist[i, k] + dist[k, j]
    return dist


def components_from_distances(dist: np.ndarray) -> list[list[int]]:
    n = dist.shape[0]
    seen = [False] * n
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        comp = [i for i in range(n) if np.isfinite(dist[s, i])]
        for i in comp:
            seen[i] = True
        comps.append(comp)
    return comps


def wiener_oracle(m: Molecule) -> float:
    dist = floyd_warshall(m)
    comps = components_from_distances(dist)
    if not comps:
        return 0.0
    comp = max(comps, key=len)
    sub = dist[np.ix_(comp, comp)]
    return float(sub.sum()) / 2.0


def balaban_oracle(m: Molecule) -> float | None:
    dist = floyd_warshall(m)
    comps = components_from_distances(dist)
    if not comps:
        return None
    comp = max(comps, key=len)
    if len(comp) < 2:
        return None
    heavy, edges = heavy_subgraph(m)
    cset = set(comp)
    comp_edges = [(i, j) for i, j, _ in edges if i in cset and j in cset]
    sub = dist[np.ix_(comp, comp)]
    pos = {v: k for k, v in enumerate(comp)}
    s = sub.sum(axis=1)
    m_edges = len(comp_edges)
    gamma = m_edges - len(comp) + 1
    acc = sum(1.0 / math.sqrt(s[pos[i]] * s[pos[j]]) for i, j in comp_edges)
    return m_edges / (gamma + 1.0) * acc


def eccentric_oracle(m: Molecule) -> float:
    dist = floyd_warshall(m)
    comps = components_from_distances(dist)
    if not comps:
        return 0.0
    comp = max(comps, key=len)
    if len(comp) < 2:
        return 0.0
    heavy, edges = heavy_subgraph(m)
    deg = [0] * len(heavy)
    for i, j, _ in edges:
        deg[i] += 1
        deg[j] += 1
    sub = dist[np.ix_(comp, comp)]
    ecc = sub.max(axis=1)
    return float(sum(ecc[k] * deg[v] for k, v in enumerate(comp)))


def enumerate_subgraph_matches(m: Molecule, q) -> int:
    """Brute-force oracle: test every injective mapping of query atoms."""
    heavy = [i for i, a in enumerate(m.atoms) if a.element != "H"]
    bonds = {}
    for b in m.bonds:
        bonds[(b.a1, b.a2)] = b
        bonds[(b.a2, b.a1)] = b

    def heavy_degree(i):
        return sum(1 for nb in m.adjacency[i] if m.atoms[nb].element != "H")

    def hydrogens(i):
        return m.atoms[i].total_h + sum(
            1 for nb in m.adjacency[i] if m.atoms[nb].element == "H")

    def atom_ok(i, qa):
        a = m.atoms[i]
        if qa.element is not None and a.element != qa.element:
            return False
        if qa.aromatic is not None and a.aromatic != qa.aromatic:
            return False
        if qa.charge is not None and a.formal_charge != qa.charge:
            return False
        if qa.degree is not None and heavy_degree(i) != qa.degree:
            return False
        if qa.min_h is not None and hydrogens(i) < qa.min_h:
            return False
        if qa.single_bonds_only:
            for nb in m.adjacency[i]:
                if bonds[(i, nb)].order != "single":
                    return False
        return True

    found = set()
    k = len(q.atoms)
    for combo in itertools.permutations(heavy, k):
        if not all(atom_ok(combo[t], q.atoms[t]) for t in range(k)):
            continue
        ok = True
        for qb in q.bonds:
            b = bonds.get((combo[qb.a], combo[qb.b]))
            if b is None or (qb.order is not None and b.order != qb.order):
                ok = False
                break
        if ok:
            found.add(frozenset(combo))
    return len(found)


def t_cdf_oracle(t: float, df: int) -> float:
    """Student-t CDF by piecewise Gauss-Legendre quadrature of the density."""
    log_norm = (math.lgamma((df + 1) / 2.0) - math.lgamma(df / 2.0)
                - 0.5 * math.log(df * math.pi))

    def density(x):
        return np.exp(log_norm - (df + 1) / 2.0 * np.log1p(x * x / df))

    breaks = [-3e9, -3e8, -3e7, -3e6, -3e5, -3e4, -3000.0, -300.0, -30.0,
              -10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0, 30.0, 300.0, 3000.0]
    edges = sorted(set(b for b in breaks if b < t)) + [t]
    total = 0.0
    nodes, weights = np.polynomial.legendre.leggauss(80)
    for a, b in zip(edges[:-1], edges[1:]):
        half = 0.5 * (b - a)
        xs = a + half * (nodes + 1.0)
        total += float((weights * density(xs)).sum() * half)
    return total


def kendall_tau_brute(x, y) -> float:
    """Tau-b by O(n^2) pair counting with tie corrections."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    nc = nd = tx = ty = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx == 0 and dy == 0:
                tx += 1
                ty += 1
            elif dx == 0:
                tx += 1
            elif dy == 0:
                ty += 1
            elif dx * dy > 0:
                nc += 1
            else:
                nd += 1
    n0 = n * (n - 1) // 2
    denom = math.sqrt((n0 - tx) * (n0 - ty))
    if denom == 0:
        return float("nan")
    return (nc - nd) / denom


def silhouette(coords: np.ndarray, labels: np.ndarray) -> float:
    d = np.sqrt(((coords[:, None, :] - coords[None, :, :]) ** 2).sum(-1))
    vals = []
    for i in range(len(coords)):
        same = labels == labels[i]
        own = same.copy()
        own[i] = False
        a_i = d[i, own].mean()
        b_i = min(d[i, labels == lab].mean()
                  for lab in set(labels) - {labels[i]})
        vals.append((b_i - a_i) / max(a_i, b_i))
    return float(np.mean(vals))
