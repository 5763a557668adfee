"""SMILES parsing into immutable molecular graphs.

Supports the organic subset (B, C, N, O, P, S, F, Cl, Br, I), aromatic
lowercase atoms (b, c, n, o, p, s), bracket atoms with isotope / charge /
explicit hydrogen counts, branches, ring-closure digits (including ``%nn``),
explicit bond symbols and dot-separated components.  Stereo markers
(``/ \\ @ @@``) are accepted and discarded; all downstream computations are
stereo-agnostic.

Conventions that differ from a full Daylight implementation, chosen to keep
the parser free of a kekulization solver:

* Aromatic bonds keep their aromatic label; they are never kekulized.
* Implicit hydrogens on bare atoms are assigned from the smallest allowed
  valence that covers the bond-order sum, with aromatic bonds counted as
  1.5.  Half-integer sums round *down*, which reproduces the hydrogen
  count of any kekulized assignment (a fused-ring junction atom with three
  aromatic bonds has bond-order sum 4, not 5).
* Aromatic O and S donate a lone pair to the ring, so their aromatic bonds
  count as order 1 when filling hydrogens (furan and thiophene carry no
  implicit hydrogens, matching standard toolkits).
* An aromatic bond that turns out not to lie on any cycle is demoted to a
  single bond before hydrogen filling.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field


class SmilesError(ValueError):
    """Base class for all SMILES parsing failures."""


class EmptySmilesError(SmilesError):
    """Input string is empty or whitespace."""


class UnbalancedParenthesesError(SmilesError):
    """Branch parentheses do not balance or are misplaced."""


class RingClosureError(SmilesError):
    """Ring-bond digit is unmatched, self-referential or contradictory."""


class UnknownElementError(SmilesError):
    """Atom symbol is not a recognised element."""


class ValenceError(SmilesError):
    """A bare organic-subset atom exceeds its maximum allowed valence."""


class SmilesSyntaxError(SmilesError):
    """Any other malformed construct (dangling bond, bad bracket, ...)."""


# Allowed valences for bare organic-subset atoms (Daylight-style minimums);
# the smallest valence covering the bond-order sum is used.
VALENCES: dict[str, tuple[int, ...]] = {
    "B": (3,),
    "C": (4,),
    "N": (3, 5),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}

ORGANIC_SUBSET = frozenset(VALENCES)
AROMATIC_SYMBOLS = frozenset("bcnops")
HALOGENS = frozenset({"F", "Cl", "Br", "I", "At"})

BOND_ORDERS = ("single", "double", "triple", "aromatic")
_BOND_CHAR = {"-": "single", "=": "double", "#": "triple", ":": "aromatic",
              "/": "single", "\\": "single"}
# Twice the bond order, so aromatic (1.5) stays integral.
_ORDER_X2 = {"single": 2, "double": 4, "triple": 6, "aromatic": 3}

# symbol -> (atomic number, standard atomic weight)
PERIODIC: dict[str, tuple[int, float]] = {
    "H": (1, 1.008), "He": (2, 4.0026),
    "Li": (3, 6.94), "Be": (4, 9.0122), "B": (5, 10.81), "C": (6, 12.011),
    "N": (7, 14.007), "O": (8, 15.999), "F": (9, 18.998), "Ne": (10, 20.180),
    "Na": (11, 22.990), "Mg": (12, 24.305), "Al": (13, 26.982),
    "Si": (14, 28.085), "P": (15, 30.974), "S": (16, 32.06),
    "Cl": (17, 35.45), "Ar": (18, 39.95),
    "K": (19, 39.098), "Ca": (20, 40.078), "Sc": (21, 44.956),
    "Ti": (22, 47.867), "V": (23, 50.942), "Cr": (24, 51.996),
    "Mn": (25, 54.938), "Fe": (26, 55.845), "Co": (27, 58.933),
    "Ni": (28, 58.693), "Cu": (29, 63.546), "Zn": (30, 65.38),
    "Ga": (31, 69.723), "Ge": (32, 72.630), "As": (33, 74.922),
    "Se": (34, 78.971), "Br": (35, 79.904), "Kr": (36, 83.798),
    "Rb": (37, 85.468), "Sr": (38, 87.62), "Y": (39, 88.906),
    "Zr": (40, 91.224), "Nb": (41, 92.906), "Mo": (42, 95.95),
    "Tc": (43, 98.0), "Ru": (44, 101.07), "Rh": (45, 102.91),
    "Pd": (46, 106.42), "Ag": (47, 107.87), "Cd": (48, 112.41),
    "In": (49, 114.82), "Sn": (50, 118.71), "Sb": (51, 121.76),
    "Te": (52, 127.60), "I": (53, 126.90), "Xe": (54, 131.29),
    "Cs": (55, 132.91), "Ba": (56, 137.33),
    "Pt": (78, 195.08), "Au": (79, 196.97), "Hg": (80, 200.59),
    "Tl": (81, 204.38), "Pb": (82, 207.2), "Bi": (83, 208.98),
}


@dataclass(frozen=True)
class Atom:
    """A heavy atom (or an explicitly bracketed hydrogen) in the graph.

    ``explicit_h`` is the hydrogen count written inside a bracket atom
    (None for bare atoms); ``implicit_h`` is filled by the valence model and
    is always 0 when ``explicit_h`` is given.
    """

    element: str
    formal_charge: int = 0
    aromatic: bool = False
    isotope: int | None = None
    explicit_h: int | None = None
    implicit_h: int = 0

    @property
    def total_h(self) -> int:
        return self.implicit_h + (self.explicit_h or 0)

    @property
    def atomic_number(self) -> int:
        return PERIODIC[self.element][0]


@dataclass(frozen=True)
class Bond:
    """Undirected bond; endpoints are stored with ``a1 < a2``."""

    a1: int
    a2: int
    order: str
    in_ring: bool = False

    def other(self, idx: int) -> int:
        return self.a2 if idx == self.a1 else self.a1


@dataclass(frozen=True)
class Molecule:
    """Immutable molecular graph; safe to share across workers."""

    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    adjacency: tuple[tuple[int, ...], ...]
    n_components: int

    @property
    def n_rings(self) -> int:
        return len(self.bonds) - len(self.atoms) + self.n_components

    def neighbors(self, idx: int) -> tuple[int, ...]:
        return self.adjacency[idx]

    def heavy_indices(self) -> tuple[int, ...]:
        return tuple(i for i, a in enumerate(self.atoms) if a.element != "H")


def bond_lookup(m: Molecule) -> dict[tuple[int, int], Bond]:
    """Map of (min, max) endpoint pairs to bonds."""
    return {(b.a1, b.a2): b for b in m.bonds}


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_BRACKET_RE = re.compile(
    r"(?P<isotope>\d+)?"
    r"(?P<symbol>[A-Z][a-z]?|[bcnops])"
    r"(?P<chiral>@{1,2})?"
    r"(?P<hcount>H\d*)?"
    r"(?P<charge>\+\d{1,2}|-\d{1,2}|\+{1,3}|-{1,3})?"
)


class _RawAtom:
    __slots__ = ("element", "charge", "aromatic", "isotope", "explicit_h")

    def __init__(self, element, charge=0, aromatic=False, isotope=None,
                 explicit_h=None):
        self.element = element
        self.charge = charge
        self.aromatic = aromatic
        self.isotope = isotope
        self.explicit_h = explicit_h


def _parse_bracket(content: str, pos: int) -> _RawAtom:
    m = _BRACKET_RE.fullmatch(re.sub(r":\d+$", "", content))
    if m is None:
        raise SmilesSyntaxError(f"malformed bracket atom [{content}] at position {pos}")
    symbol = m.group("symbol")
    aromatic = symbol.islower()
    element = symbol.capitalize() if aromatic else symbol
    if element not in PERIODIC:
        raise UnknownElementError(f"unknown element {symbol!r} at position {pos}")
    if aromatic and symbol not in AROMATIC_SYMBOLS:
        raise UnknownElementError(f"{symbol!r} cannot be aromatic")
    hcount = 0
    if m.group("hcount"):
        digits = m.group("hcount")[1:]
        hcount = int(digits) if digits else 1
    charge = 0
    if m.group("charge"):
        c = m.group("charge")
        if c in ("+", "++", "+++", "-", "--", "---"):
            charge = len(c) if c[0] == "+" else -len(c)
        else:
            charge = int(c)
    isotope = int(m.group("isotope")) if m.group("isotope") else None
    if element == "H" and hcount:
        raise SmilesSyntaxError("a bracket hydrogen cannot itself carry hydrogens")
    return _RawAtom(element, charge, aromatic, isotope, hcount)


def parse_smiles(s: str) -> Molecule:
    """Parse a SMILES string into a :class:`Molecule`.

    Implicit hydrogens, component count and ring-membership flags are all
    filled in; aromatic bonds never get kekulized.

    Raises a :class:`SmilesError` subclass identifying the failure: empty
    input, unbalanced parentheses, unmatched ring closures, unknown
    elements, over-valent bare atoms, or other syntax errors.
    """
    if not isinstance(s, str):
        raise TypeError("SMILES input must be a string")
    s = s.strip()
    if not s:
        raise EmptySmilesError("empty SMILES string")

    atoms: list[_RawAtom] = []
    bonds: list[tuple[int, int, str | None]] = []  # order None = default
    seen_pairs: set[tuple[int, int]] = set()
    prev: int | None = None
    pending: str | None = None
    stack: list[int | None] = []
    ring_open: dict[int, tuple[int, str | None]] = {}

    def add_atom(raw: _RawAtom) -> None:
        nonlocal prev, pending
        atoms.append(raw)
        idx = len(atoms) - 1
        if prev is not None:
            _add_bond(prev, idx, pending)
        prev = idx
        pending = None

    def _add_bond(i: int, j: int, order: str | None) -> None:
        if i == j:
            raise RingClosureError(f"ring bond from atom {i} to itself")
        pair = (min(i, j), max(i, j))
        if pair in seen_pairs:
            raise RingClosureError(f"duplicate bond between atoms {i} and {j}")
        seen_pairs.add(pair)
        bonds.append((pair[0], pair[1], order))

    def close_or_open_ring(num: int, pos: int) -> None:
        nonlocal pending
        if prev is None:
            raise RingClosureError(f"ring digit before any atom at position {pos}")
        if num in ring_open:
            other, other_order = ring_open.pop(num)
            order = pending if pending is not None else other_order
            if (pending is not None and other_order is not None
                    and pending != other_order):
                raise RingClosureError(
                    f"conflicting bond orders on ring closure {num}")
            _add_bond(other, prev, order)
        else:
            ring_open[num] = (prev, pending)
        pending = None

    i = 0
    n = len(s)
    while i < n:
        ch = s[i]
        if ch == "(":
            if prev is None:
                raise UnbalancedParenthesesError(
                    f"branch opened before any atom at position {i}")
            stack.append(prev)
            i += 1
        elif ch == ")":
            if not stack:
                raise UnbalancedParenthesesError(
                    f"unmatched ')' at position {i}")
            if pending is not None:
                raise SmilesSyntaxError(f"dangling bond before ')' at position {i}")
            prev = stack.pop()
            i += 1
        elif ch in _BOND_CHAR:
            if pending is not None:
                raise SmilesSyntaxError(f"two bond symbols in a row at position {i}")
            pending = _BOND_CHAR[ch]
            i += 1
        elif ch.isdigit():
            close_or_open_ring(int(ch), i)
            i += 1
        elif ch == "%":
            digits = s[i + 1:i + 3]
            if len(digits) < 2 or not digits.isdigit():
                raise RingClosureError(f"'%' needs two digits at position {i}")
            close_or_open_ring(int(digits), i)
            i += 3
        elif ch == ".":
            if pending is not None:
                raise SmilesSyntaxError(f"bond symbol before '.' at position {i}")
            prev = None
            i += 1
        elif ch == "[":
            end = s.find("]", i)
            if end < 0:
                raise SmilesSyntaxError(f"unclosed bracket at position {i}")
            add_atom(_parse_bracket(s[i + 1:end], i))
            i = end + 1
        elif ch in AROMATIC_SYMBOLS:
            add_atom(_RawAtom(ch.upper(), aromatic=True))
            i += 1
        elif ch.isupper():
            two = s[i:i + 2]
            if two in ("Cl", "Br"):
                add_atom(_RawAtom(two))
                i += 2
            elif ch in ORGANIC_SUBSET and ch in PERIODIC:
                add_atom(_RawAtom(ch))
                i += 1
            else:
                raise UnknownElementError(
                    f"element {ch!r} at position {i} must be bracketed")
        else:
            raise SmilesSyntaxError(f"unexpected character {ch!r} at position {i}")

    if stack:
        raise UnbalancedParenthesesError(f"{len(stack)} unclosed '('")
    if ring_open:
        raise RingClosureError(
            "unmatched ring closure digit(s): " + ", ".join(map(str, sorted(ring_open))))
    if pending is not None:
        raise SmilesSyntaxError("dangling bond symbol at end of input")

    return _assemble(atoms, bonds)


def _assemble(raw_atoms: list[_RawAtom],
              raw_bonds: list[tuple[int, int, str | None]]) -> Molecule:
    n = len(raw_atoms)
    # Resolve default bond orders: aromatic iff both endpoints aromatic.
    orders: list[str] = []
    for a1, a2, order in raw_bonds:
        if order is None:
            both_aromatic = raw_atoms[a1].aromatic and raw_atoms[a2].aromatic
            order = "aromatic" if both_aromatic else "single"
        if order == "aromatic" and not (raw_atoms[a1].aromatic and raw_atoms[a2].aromatic):
            raise SmilesSyntaxError(
                f"aromatic bond between non-aromatic atoms {a1} and {a2}")
        orders.append(order)

    adjacency: list[list[int]] = [[] for _ in range(n)]
    for (a1, a2, _), _o in zip(raw_bonds, orders):
        adjacency[a1].append(a2)
        adjacency[a2].append(a1)

    n_components, in_ring = _ring_flags(n, [(b[0], b[1]) for b in raw_bonds], adjacency)

    # Aromatic labels only make sense on cycles.
    for k, ring in enumerate(in_ring):
        if orders[k] == "aromatic" and not ring:
            orders[k] = "single"

    final_atoms = []
    for idx, raw in enumerate(raw_atoms):
        implicit_h = 0
        if raw.explicit_h is None:
            sum2 = 0
            for k, (a1, a2, _) in enumerate(raw_bonds):
                if idx in (a1, a2):
                    x2 = _ORDER_X2[orders[k]]
                    if (orders[k] == "aromatic" and raw.aromatic
                            and raw.element in ("O", "S")):
                        x2 = 2  # lone-pair donor: ring bonds act as singles
                    sum2 += x2
            rounded = sum2 // 2
            candidates = [v for v in VALENCES[raw.element] if v >= rounded]
            if not candidates:
                raise ValenceError(
                    f"atom {idx} ({raw.element}) has bond-order sum {rounded}, "
                    f"exceeding allowed valences {VALENCES[raw.element]}")
            implicit_h = min(candidates) - rounded
        final_atoms.append(Atom(
            element=raw.element,
            formal_charge=raw.charge,
            aromatic=raw.aromatic,
            isotope=raw.isotope,
            explicit_h=raw.explicit_h,
            implicit_h=implicit_h,
        ))

    bond_objs = sorted(
        (Bond(a1, a2, orders[k], in_ring[k])
         for k, (a1, a2, _) in enumerate(raw_bonds)),
        key=lambda b: (b.a1, b.a2),
    )
    adj = tuple(tuple(sorted(nb)) for nb in adjacency)
    return Molecule(tuple(final_atoms), tuple(bond_objs), adj, n_components)


def _ring_flags(n_atoms: int, edges: list[tuple[int, int]],
                adjacency: list[list[int]]) -> tuple[int, list[bool]]:
    """Connected-component count and per-edge cycle membership.

    An edge lies on a cycle iff it is not a bridge; bridges are found with
    an iterative lowlink DFS so deep chain molecules cannot overflow the
    recursion limit.
    """
    edge_ids: dict[tuple[int, int], list[int]] = {}
    for k, (a, b) in enumerate(edges):
        edge_ids.setdefault((min(a, b), max(a, b)), []).append(k)

    disc = [-1] * n_atoms
    low = [0] * n_atoms
    is_bridge = [False] * len(edges)
    timer = 0
    n_components = 0

    for root in range(n_atoms):
        if disc[root] != -1:
            continue
        n_components += 1
        stack = [(root, -1, iter(adjacency[root]))]
        disc[root] = low[root] = timer
        timer += 1
        while stack:
            v, parent, it = stack[-1]
            advanced = False
            for w in it:
                if w == parent:
                    # skip one edge back to the parent (no multi-edges exist)
                    parent = -2
                    continue
                if disc[w] == -1:
                    disc[w] = low[w] = timer
                    timer += 1
                    stack.append((w, v, iter(adjacency[w])))
                    advanced = True
                    break
                low[v] = min(low[v], disc[w])
            if not advanced:
                stack.pop()
                if stack:
                    u = stack[-1][0]
                    low[u] = min(low[u], low[v])
                    if low[v] > disc[u]:
                        pair = (min(u, v), max(u, v))
                        for k in edge_ids[pair]:
                            is_bridge[k] = True
    return n_components, [not b for b in is_bridge]


def perceive_rings(m: Molecule) -> tuple[int, tuple[bool, ...]]:
    """Recompute (ring count, per-bond ring flags) from topology.

    The ring count is the cyclomatic number ``bonds - atoms + components``;
    a bond is in a ring iff it lies on some cycle.
    """
    adjacency = [list(nb) for nb in m.adjacency]
    edges = [(b.a1, b.a2) for b in m.bonds]
    n_components, flags = _ring_flags(len(m.atoms), edges, adjacency)
    count = len(m.bonds) - len(m.atoms) + n_components
    return count, tuple(flags)


# ---------------------------------------------------------------------------
# reindexing
# ---------------------------------------------------------------------------

def canonical_reindex(m: Molecule, perm) -> Molecule:
    """Relabel atoms so atom ``i`` moves to index ``perm[i]``.

    The result is an isomorphic molecule; every descriptor and model
    embedding must be invariant to this operation.
    """
    perm = list(perm)
    if len(perm) != len(m.atoms):
        raise ValueError(
            f"permutation length {len(perm)} != atom count {len(m.atoms)}")
    if sorted(perm) != list(range(len(m.atoms))):
        raise ValueError("not a permutation of atom indices")

    new_atoms: list[Atom | None] = [None] * len(m.atoms)
    for i, a in enumerate(m.atoms):
        new_atoms[perm[i]] = a
    new_bonds = sorted(
        (Bond(min(perm[b.a1], perm[b.a2]), max(perm[b.a1], perm[b.a2]),
              b.order, b.in_ring)
         for b in m.bonds),
        key=lambda b: (b.a1, b.a2),
    )
    adjacency: list[list[int]] = [[] for _ in range(len(m.atoms))]
    for b in new_bonds:
        adjacency[b.a1].append(b.a2)
        adjacency[b.a2].append(b.a1)
    adj = tuple(tuple(sorted(nb)) for nb in adjacency)
    return Molecule(tuple(new_atoms), tuple(new_bonds), adj, m.n_components)


# ---------------------------------------------------------------------------
# substructure matching
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QueryAtom:
    """Constraints on one query vertex; None fields are wildcards.

    Query atoms only ever match heavy atoms.  ``min_h`` tests the total
    hydrogen count (implicit + explicit + attached bracket hydrogens);
    ``single_bonds_only`` requires every incident bond of the candidate to
    be a single bond.
    """

    element: str | None = None
    aromatic: bool | None = None
    charge: int | None = None
    degree: int | None = None
    min_h: int | None = None
    single_bonds_only: bool = False


@dataclass(frozen=True)
class QueryBond:
    a: int
    b: int
    order: str | None = None  # None matches any order


@dataclass(frozen=True)
class QueryGraph:
    """A small connected pattern graph (at most 12 atoms)."""

    atoms: tuple[QueryAtom, ...]
    bonds: tuple[QueryBond, ...]

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("query graph needs at least one atom")
        if len(self.atoms) > 12:
            raise ValueError("query graphs are limited to 12 atoms")
        adj = [[] for _ in self.atoms]
        for qb in self.bonds:
            adj[qb.a].append(qb.b)
            adj[qb.b].append(qb.a)
        seen = {0}
        frontier = [0]
        while frontier:
            v = frontier.pop()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    frontier.append(w)
        if len(seen) != len(self.atoms):
            raise ValueError("query graph must be connected")


def _attached_h_atoms(m: Molecule, idx: int) -> int:
    return sum(1 for nb in m.adjacency[idx] if m.atoms[nb].element == "H")


def _atom_matches(m: Molecule, idx: int, q: QueryAtom,
                  heavy_degree: int, bonds_of: list[list[Bond]]) -> bool:
    a = m.atoms[idx]
    if a.element == "H":
        return False
    if q.element is not None and a.element != q.element:
        return False
    if q.aromatic is not None and a.aromatic != q.aromatic:
        return False
    if q.charge is not None and a.formal_charge != q.charge:
        return False
    if q.degree is not None and heavy_degree != q.degree:
        return False
    if q.min_h is not None and a.total_h + _attached_h_atoms(m, idx) < q.min_h:
        return False
    if q.single_bonds_only and any(b.order != "single" for b in bonds_of[idx]):
        return False
    return True


def count_subgraph_matches(m: Molecule, q: QueryGraph) -> int:
    """Count subgraph-isomorphism embeddings of ``q`` in ``m``.

    Embeddings that hit the same set of molecule atoms (automorphic
    repeats) are counted once.  Matching is non-induced: extra molecule
    bonds between matched atoms are allowed.
    """
    lookup = bond_lookup(m)
    bonds_of: list[list[Bond]] = [[] for _ in m.atoms]
    for b in m.bonds:
        bonds_of[b.a1].append(b)
        bonds_of[b.a2].append(b)
    heavy_deg = [sum(1 for nb in m.adjacency[i] if m.atoms[nb].element != "H")
                 for i in range(len(m.atoms))]

    # visit query atoms in a connectivity-respecting order so every atom
    # after the first attaches to an already-mapped one
    q_adj: list[list[tuple[int, str | None]]] = [[] for _ in q.atoms]
    for qb in q.bonds:
        q_adj[qb.a].append((qb.b, qb.order))
        q_adj[qb.b].append((qb.a, qb.order))
    order = [0]
    placed = {0}
    while len(order) < len(q.atoms):
        for v in order:
            nxt = [w for w, _ in q_adj[v] if w not in placed]
            if nxt:
                order.append(nxt[0])
                placed.add(nxt[0])
                break

    matches: set[frozenset[int]] = set()
    mapping: dict[int, int] = {}
    used: set[int] = set()

    def extend(depth: int) -> None:
        if depth == len(order):
            matches.add(frozenset(mapping.values()))
            return
        qi = order[depth]
        anchored = [(w, o) for w, o in q_adj[qi] if w in mapping]
        if anchored:
            w0, _ = anchored[0]
            candidates = m.adjacency[mapping[w0]]
        else:
            candidates = range(len(m.atoms))
        for cand in candidates:
            if cand in used:
                continue
            if not _atom_matches(m, cand, q.atoms[qi], heavy_deg[cand], bonds_of):
                continue
            ok = True
            for w, qorder in anchored:
                mb = lookup.get((min(cand, mapping[w]), max(cand, mapping[w])))
                if mb is None or (qorder is not None and mb.order != qorder):
                    ok = False
                    break
            if ok:
                mapping[qi] = cand
                used.add(cand)
                extend(depth + 1)
                del mapping[qi]
                used.discard(cand)

    extend(0)
    return len(matches)


# ---------------------------------------------------------------------------
# corpus files
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorpusRecord:
    smiles: str
    mol_id: str
    line: int


def read_smiles_file(path) -> list[CorpusRecord]:
    """Read a SMILES corpus: one molecule per line, optional identifier
    after whitespace, ``#`` comment lines and blank lines skipped."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(None, 1)
            smiles = parts[0]
            mol_id = parts[1].strip() if len(parts) > 1 else str(len(records))
            records.append(CorpusRecord(smiles, mol_id, lineno))
    return records
