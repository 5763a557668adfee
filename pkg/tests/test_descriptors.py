import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import (
    balaban_oracle,
    eccentric_oracle,
    enumerate_subgraph_matches,
    wiener_oracle,
)
from molpret.descriptors import (
    DESCRIPTOR_NAMES,
    DESCRIPTOR_SPECS,
    PATTERNS,
    DescriptorMatrix,
    apply_scaler,
    balaban_j,
    compute_descriptors,
    compute_matrix,
    export_csv,
    fit_scaler,
    load_chmd,
    mcgowan_volume,
    save_chmd,
    wiener_index,
)
from molpret.errors import FileFormatError
from molpret.molgraph import canonical_reindex, parse_smiles

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def as_dict(m):
    values, mask = compute_descriptors(m)
    return dict(zip(DESCRIPTOR_NAMES, values)), dict(zip(DESCRIPTOR_NAMES, mask))


class TestCanonicalSet:
    def test_order_and_size(self):
        assert len(DESCRIPTOR_NAMES) == 26
        assert DESCRIPTOR_NAMES[0] == "nHeavy"
        assert DESCRIPTOR_NAMES[-1] == "EccentricConnectivity"
        assert len(set(DESCRIPTOR_NAMES)) == 26

    def test_kinds_cover_three_families(self):
        kinds = {s.kind for s in DESCRIPTOR_SPECS}
        assert kinds == {"counting", "aggregation", "complexity"}


class TestSpecExamples:
    def test_propane_wiener(self):
        d, _ = as_dict(parse_smiles("CCC"))
        assert d["WienerIndex"] == 4

    def test_single_atom(self):
        d, mask = as_dict(parse_smiles("C"))
        assert d["WienerIndex"] == 0
        assert not mask["BalabanJ"]

    def test_benzene_zagreb(self):
        d, _ = as_dict(parse_smiles("c1ccccc1"))
        assert d["ZagrebM1"] == 24
        assert d["ZagrebM2"] == 24

    def test_ethanol_hbond_counts(self):
        d, _ = as_dict(parse_smiles("CCO"))
        assert d["nHBD"] == 1
        assert d["nHBA"] == 1
        assert d["nHydroxyl"] == 1

    def test_path_graph_wiener_formula(self):
        for n in range(2, 10):
            m = parse_smiles("C" * n)
            assert wiener_index(m) == (n ** 3 - n) / 6

    def test_benzene_wiener(self):
        assert wiener_index(parse_smiles("c1ccccc1")) == 27

    def test_ethane_balaban(self):
        assert balaban_j(parse_smiles("CC")) == pytest.approx(1.0)

    def test_propane_balaban(self):
        assert balaban_j(parse_smiles("CCC")) == pytest.approx(4 / math.sqrt(6))

    def test_mcgowan_methane(self):
        expected = (16.35 + 4 * 8.71 - 6.56 * 4) / 100
        assert mcgowan_volume(parse_smiles("C")) == pytest.approx(expected)

    def test_mcgowan_ethane(self):
        expected = (2 * 16.35 + 6 * 8.71 - 6.56 * 7) / 100
        assert mcgowan_volume(parse_smiles("CC")) == pytest.approx(expected)

    def test_mcgowan_bare_carbon(self):
        assert mcgowan_volume(parse_smiles("[C]")) == pytest.approx(0.1635)

    def test_counting_examples(self):
        d, _ = as_dict(parse_smiles("CC(=O)OCC"))  # ethyl acetate
        assert d["nEster"] == 1
        assert d["nCarbonyl"] == 1
        assert d["nCarboxyl"] == 0
        d, _ = as_dict(parse_smiles("CC(=O)O"))
        assert d["nCarboxyl"] == 1
        d, _ = as_dict(parse_smiles("C[N+](=O)[O-]"))
        assert d["nNitro"] == 1
        d, _ = as_dict(parse_smiles("CN(=O)=O"))
        assert d["nNitro"] == 1
        d, _ = as_dict(parse_smiles("CCN"))
        assert d["nAmine"] == 1

    def test_rotatable_bonds(self):
        assert as_dict(parse_smiles("CCCC"))[0]["nRotatableBonds"] == 1
        assert as_dict(parse_smiles("C1CCCCC1"))[0]["nRotatableBonds"] == 0
        assert as_dict(parse_smiles("CCC"))[0]["nRotatableBonds"] == 0


class TestMcGowanReference:
    def test_matches_committed_reference_values(self):
        with open(os.path.join(FIXTURES, "mcgowan_reference.json")) as fh:
            entries = json.load(fh)
        assert len(entries) == 50
        for e in entries:
            got = mcgowan_volume(parse_smiles(e["smiles"]))
            assert got == pytest.approx(e["value"], abs=1e-3), e["name"]

    def test_unknown_atom_masked(self):
        d, mask = as_dict(parse_smiles("[Cs]"))
        assert not mask["McGowanVolume"]
        assert mask["MW"]


class TestOracleEquivalence:
    def test_wiener_matches_floyd_warshall(self, corpus_500):
        for m in corpus_500:
            assert wiener_index(m) == wiener_oracle(m), m

    def test_balaban_matches_distance_matrix_oracle(self, corpus_500):
        for m in corpus_500:
            got = balaban_j(m)
            want = balaban_oracle(m)
            if want is None:
                assert got is None
            else:
                assert got == pytest.approx(want, rel=1e-9)

    def test_eccentric_matches_oracle(self, corpus_500):
        for m in corpus_500:
            from molpret.descriptors import eccentric_connectivity
            assert eccentric_connectivity(m) == eccentric_oracle(m)

    def test_zagreb_randic_against_degree_oracle(self, corpus_500):
        for m in corpus_500:
            heavy = [i for i, a in enumerate(m.atoms) if a.element != "H"]
            local = set(heavy)
            deg = {i: sum(1 for nb in m.adjacency[i] if nb in local)
                   for i in heavy}
            edges = [(b.a1, b.a2) for b in m.bonds
                     if b.a1 in local and b.a2 in local]
            d, _ = as_dict(m)
            assert d["ZagrebM1"] == sum(v * v for v in deg.values())
            assert d["ZagrebM2"] == sum(deg[i] * deg[j] for i, j in edges)
            randic = sum(1 / math.sqrt(deg[i] * deg[j]) for i, j in edges)
            assert d["RandicChi"] == pytest.approx(randic, rel=1e-12)

    def test_substructure_counts_match_enumeration(self, corpus_500):
        # enumeration is exponential; keep to the smaller molecules
        for m in corpus_500[:120]:
            if len(m.atoms) > 10:
                continue
            for name, q in PATTERNS.items():
                assert count_matches(m, q) == enumerate_subgraph_matches(m, q)


def count_matches(m, q):
    from molpret.molgraph import count_subgraph_matches
    return count_subgraph_matches(m, q)


class TestPermutationInvariance:
    def test_descriptor_vectors_invariant(self, corpus_500):
        rng = np.random.default_rng(99)
        int_cols = [j for j, n in enumerate(DESCRIPTOR_NAMES)
                    if n.startswith("n")]
        for m in corpus_500:
            v0, k0 = compute_descriptors(m)
            perm = list(rng.permutation(len(m.atoms)))
            v1, k1 = compute_descriptors(canonical_reindex(m, perm))
            assert (k0 == k1).all()
            for j in range(len(v0)):
                if not k0[j]:
                    continue
                if j in int_cols:
                    assert v0[j] == v1[j]
                else:
                    assert v1[j] == pytest.approx(v0[j], rel=1e-9)


class TestMonotonicity:
    def test_chain_growth_strictly_increases(self):
        names = ("MW", "WienerIndex", "McGowanVolume")
        prev = None
        for n in range(1, 10):
            d, _ = as_dict(parse_smiles("C" * n))
            row = [d[x] for x in names]
            if prev is not None:
                assert all(b > a for a, b in zip(prev, row))
            prev = row


class TestMultiFragment:
    def test_counting_sums_fragments(self):
        d1, _ = as_dict(parse_smiles("CCO"))
        d2, _ = as_dict(parse_smiles("CCO.CCO"))
        for name in ("nHeavy", "nC", "nO", "nHBD"):
            assert d2[name] == 2 * d1[name]
        assert d2["MW"] == pytest.approx(2 * d1["MW"], rel=1e-12)
        assert d2["McGowanVolume"] == pytest.approx(
            2 * d1["McGowanVolume"], rel=1e-12)

    def test_path_descriptors_use_largest_fragment(self):
        d_pair, mask = as_dict(parse_smiles("CCCC.C"))
        d_big, _ = as_dict(parse_smiles("CCCC"))
        assert d_pair["WienerIndex"] == d_big["WienerIndex"]
        assert d_pair["BalabanJ"] == d_big["BalabanJ"]
        assert mask["WienerIndex"]


class TestScaler:
    def _matrix(self, cols):
        cols = {k: np.asarray(v, dtype=np.float64) for k, v in cols.items()}
        names = tuple(cols)
        n = len(next(iter(cols.values())))
        values = np.column_stack([cols[k] for k in names])
        mask = ~np.isnan(values)
        return DescriptorMatrix(names, values, mask,
                                tuple(str(i) for i in range(n)))

    def test_constant_column_flagged(self):
        s = fit_scaler(self._matrix({"a": [1.0, 1.0, 1.0]}))
        assert s.constant[0]
        assert s.mean[0] == 1.0
        assert s.std[0] == 0.0

    def test_two_point_symmetry(self):
        s = fit_scaler(self._matrix({"a": [0.0, 2.0]}))
        assert s.mean[0] == 1.0
        assert s.std[0] == 1.0  # population std keeps this exact

    def test_masked_cells_excluded(self):
        s = fit_scaler(self._matrix({"a": [1.0, np.nan, 3.0]}))
        assert s.mean[0] == 2.0
        assert s.std[0] == 1.0

    def test_apply_examples(self):
        d = self._matrix({"a": [0.0, 2.0, 1.0, 11.0, -1.0]})
        s = fit_scaler(self._matrix({"a": [0.0, 2.0]}))
        z = apply_scaler(d, s)
        assert z.values[2, 0] == 0.0          # x = mu
        assert z.values[3, 0] == 6.0          # x = mu + 10 sigma, clipped
        assert z.values[4, 0] == -2.0         # x = mu - 2 sigma

    def test_constant_columns_masked_everywhere(self):
        d = self._matrix({"a": [1.0, 1.0, 1.0], "b": [0.0, 1.0, 2.0]})
        z = apply_scaler(d, fit_scaler(d))
        assert not z.mask[:, 0].any()
        assert z.mask[:, 1].all()

    def test_name_mismatch(self):
        d = self._matrix({"a": [0.0, 1.0]})
        other = fit_scaler(self._matrix({"b": [0.0, 1.0]}))
        with pytest.raises(ValueError):
            apply_scaler(d, other)

    def test_needs_two_rows(self):
        with pytest.raises(ValueError):
            fit_scaler(self._matrix({"a": [1.0]}))

    @given(st.lists(st.floats(min_value=-1e6, max_value=1e6,
                              allow_nan=False), min_size=3, max_size=40))
    @settings(max_examples=80, deadline=None)
    def test_round_trip_property(self, xs):
        d = self._matrix({"a": xs})
        s = fit_scaler(d)
        z = apply_scaler(d, s)
        if s.constant[0]:
            assert not z.mask.any()
            return
        for i, x in enumerate(xs):
            zv = z.values[i, 0]
            if abs(zv) < 6.0:  # unclipped cells invert exactly
                back = s.mean[0] + zv * s.std[0]
                assert back == pytest.approx(x, rel=1e-9, abs=1e-9)


class TestPersistence:
    def test_chmd_round_trip(self, tmp_path, corpus_60):
        mat = compute_matrix(corpus_60[:10])
        path = tmp_path / "d.chmd"
        save_chmd(mat, path)
        loaded = load_chmd(path)
        assert loaded.names == mat.names
        assert loaded.n_rows == 10
        assert (loaded.mask == mat.mask).all()
        valid = mat.mask
        assert np.allclose(loaded.values[valid],
                           mat.values[valid].astype(np.float32))
        raw = path.read_bytes()
        assert raw[:4] == b"CHMD"

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.chmd"
        p.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(FileFormatError):
            load_chmd(p)

    def test_truncated(self, tmp_path, corpus_60):
        mat = compute_matrix(corpus_60[:4])
        p = tmp_path / "t.chmd"
        save_chmd(mat, p)
        p.write_bytes(p.read_bytes()[:-10])
        with pytest.raises(FileFormatError):
            load_chmd(p)

    def test_csv_export(self, tmp_path):
        m = compute_matrix([parse_smiles("C"), parse_smiles("CCO")],
                           ["a", "b"])
        p = tmp_path / "d.csv"
        export_csv(m, p)
        lines = p.read_text().splitlines()
        assert lines[0].startswith("id,nHeavy,")
        assert lines[1].split(",")[0] == "a"
        # single atom: BalabanJ cell empty
        j = 1 + DESCRIPTOR_NAMES.index("BalabanJ")
        assert lines[1].split(",")[j] == ""
