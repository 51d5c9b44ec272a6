"""Tests for the export decomposition and participation/position indices."""

import math

import numpy as np
import pytest

from gvckit.decomp import (DecompGroups, decompose, decompose_all, gross_exports,
                           indices, indices_series)
from gvckit.errors import InvalidPairError, UnknownCodeError
from gvckit.mrio import MrioTable, SynthSpec, coefficients, synth_mrio
from oracles import total_exports_from_balances, world_from_coefficients

# ln(1.2) - ln(1.1) to 19 significant digits (Decimal oracle)
POSITION_02_01 = 0.0870113769896296484


def autarky_world():
    """Two isolated economies: no cross-border intermediates or final demand."""
    a = np.zeros((4, 4))
    a[0:2, 0:2] = [[0.2, 0.1], [0.05, 0.3]]
    a[2:4, 2:4] = [[0.25, 0.0], [0.1, 0.15]]
    y = np.zeros((4, 2))
    y[0:2, 0] = [3.0, 2.0]
    y[2:4, 1] = [4.0, 1.5]
    return world_from_coefficients(a, y, ("AAA", "BBB"), ("S1", "S2"))


def seeded_world(g=3, n=2, seed=1):
    t = synth_mrio(SynthSpec(G=g, N=n, seed=seed))
    return t, coefficients(t)


def groups_with(e, fwd_frac, bwd_frac, sectors=("S1", "S2")):
    """Hand-built DecompGroups whose forward/backward sums are fixed fractions of E."""
    e = np.asarray(e, dtype=float)
    tot = e.sum()
    z = np.zeros_like(e)
    g3 = np.full_like(e, fwd_frac * tot / (2 * len(e)))
    g6 = np.full_like(e, bwd_frac * tot / (2 * len(e)))
    return DecompGroups(exporter="AAA", importer="BBB", year=2019, sectors=sectors,
                        E=e, G1=z, G2=z, G3=g3, G4=g3.copy(), G5=z,
                        G6=g6, G7=g6.copy(), G8=z)


# ---------------------------------------------------------------------------
# gross exports
# ---------------------------------------------------------------------------

class TestGrossExports:
    def test_autarky_is_zero(self):
        t = autarky_world()
        c = coefficients(t)
        np.testing.assert_array_equal(gross_exports(t, c, "AAA", "BBB"), np.zeros(2))

    def test_direct_arithmetic(self):
        # A_sr = [[0.1]], X_r = [100], Y_sr = [5]  ->  E = [15]
        a = np.array([[0.2, 0.1], [0.05, 0.3]])
        y = np.array([[25.0, 5.0], [37.5, 30.0]])
        t = world_from_coefficients(a, y, ("AAA", "BBB"), ("S1",))
        assert t.X[1] == pytest.approx(100.0, rel=1e-12)
        c = coefficients(t)
        e = gross_exports(t, c, "AAA", "BBB")
        assert e[0] == pytest.approx(15.0, rel=1e-12)

    def test_same_pair_rejected(self):
        t, c = seeded_world()
        with pytest.raises(InvalidPairError):
            gross_exports(t, c, "S00", "S00")

    def test_unknown_code_rejected(self):
        t, c = seeded_world()
        with pytest.raises(UnknownCodeError):
            gross_exports(t, c, "S00", "ZZZ")

    def test_row_balance_oracle(self):
        t, c = seeded_world(3, 2, seed=4)
        s = t.countries[0]
        total = sum(gross_exports(t, c, s, r).sum() for r in t.countries if r != s)
        assert total == pytest.approx(total_exports_from_balances(t, s), rel=1e-9)


# ---------------------------------------------------------------------------
# decomposition
# ---------------------------------------------------------------------------

class TestDecompose:
    def test_autarky_all_zero(self):
        t = autarky_world()
        c = coefficients(t)
        d = decompose(t, c, "AAA", "BBB")
        np.testing.assert_array_equal(d.E, np.zeros(2))
        for key in ("G1", "G2", "G3", "G4", "G5", "G6", "G7", "G8"):
            np.testing.assert_array_equal(d.group(key), np.zeros(2))

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_two_country_third_terms_exactly_zero(self, seed):
        t, c = seeded_world(2, 3, seed=seed)
        d = decompose(t, c, t.countries[0], t.countries[1])
        assert np.all(d.G3 == 0.0)
        assert np.all(d.G7 == 0.0)

    @pytest.mark.parametrize("g,n,seed", [(2, 1, 0), (3, 2, 1), (4, 3, 2), (5, 4, 3)])
    def test_conservation_oracle(self, g, n, seed):
        """Completeness and the domestic/foreign origin split, with both sides
        of the split computed from V and B directly, not from the groups."""
        t, c = seeded_world(g, n, seed)
        for s in t.countries:
            for r in t.countries:
                if s == r:
                    continue
                d = decompose(t, c, s, r)
                scale = max(np.abs(d.E).sum(), 1e-300)
                assert np.abs(d.group_sum() - d.E).max() / scale <= 1e-8
                sblk = t.block(s)
                dom_row = c.V[sblk] @ c.B[sblk, sblk]
                vmask = c.V.copy()
                vmask[sblk] = 0.0
                for_row = vmask @ c.B[:, sblk]
                assert np.abs(d.domestic() - dom_row * d.E).max() / scale <= 1e-8
                assert np.abs(d.foreign() - for_row * d.E).max() / scale <= 1e-8

    def test_same_pair_rejected(self):
        t, c = seeded_world()
        with pytest.raises(InvalidPairError):
            decompose(t, c, "S01", "S01")


class TestDecomposeAll:
    def test_pair_count_two_countries(self):
        t, c = seeded_world(2, 1, seed=6)
        assert len(decompose_all(t, c)) == 2

    def test_pair_count_and_completeness_three_countries(self):
        t, c = seeded_world(3, 2, seed=6)
        out = decompose_all(t, c)
        assert len(out) == 6
        for d in out:
            scale = np.abs(d.E).sum()
            assert np.abs(d.group_sum() - d.E).max() / scale <= 1e-8

    def test_lexicographic_ordering(self):
        a = np.zeros((3, 3))
        y = np.eye(3) * 5.0 + 1.0
        t = world_from_coefficients(a, y, ("VNM", "CHN", "MEX"), ("S1",))
        c = coefficients(t)
        pairs = [(d.exporter, d.importer) for d in decompose_all(t, c)]
        assert pairs == sorted(pairs)
        assert pairs[0] == ("CHN", "MEX")

    def test_world_aggregate_identity(self):
        t, c = seeded_world(4, 2, seed=8)
        out = decompose_all(t, c)
        tot_e = sum(d.E.sum() for d in out)
        tot_g = sum(d.group_sum().sum() for d in out)
        assert tot_g == pytest.approx(tot_e, rel=1e-8)

    def test_autarky_all_zero(self):
        t = autarky_world()
        c = coefficients(t)
        for d in decompose_all(t, c):
            np.testing.assert_array_equal(d.E, np.zeros(2))
            np.testing.assert_array_equal(d.group_sum(), np.zeros(2))


# ---------------------------------------------------------------------------
# indices
# ---------------------------------------------------------------------------

class TestIndices:
    def test_closed_form(self):
        d = groups_with([10.0, 10.0], fwd_frac=0.2, bwd_frac=0.1)
        ix = indices(d, ("S1", "S2"))
        assert ix.defined
        assert ix.forward_share == pytest.approx(0.2, abs=1e-15)
        assert ix.backward_share == pytest.approx(0.1, abs=1e-15)
        assert ix.participation == pytest.approx(0.3, abs=1e-15)
        assert ix.participation == ix.forward_share + ix.backward_share
        assert ix.position == pytest.approx(POSITION_02_01, abs=1e-15)

    def test_symmetric_shares_give_zero_position(self):
        d = groups_with([10.0, 10.0], fwd_frac=0.15, bwd_frac=0.15)
        ix = indices(d, ("S1", "S2"))
        assert ix.position == 0.0

    def test_no_trade_cell_undefined(self):
        d = groups_with([0.0, 0.0], fwd_frac=0.0, bwd_frac=0.0)
        ix = indices(d, ("S1", "S2"))
        assert not ix.defined
        assert ix.participation is None and ix.position is None

    def test_empty_or_unknown_subset(self):
        d = groups_with([10.0, 10.0], 0.2, 0.1)
        with pytest.raises(UnknownCodeError):
            indices(d, ())
        with pytest.raises(UnknownCodeError):
            indices(d, ("S9",))

    def test_sign_law_on_synthetic_worlds(self):
        t, c = seeded_world(4, 3, seed=12)
        for d in decompose_all(t, c):
            ix = indices(d, t.sectors)
            assert ix.defined
            assert 0.0 <= ix.participation <= 1.0 + 1e-12
            want = np.sign(ix.forward_share - ix.backward_share)
            assert np.sign(ix.position) == want

    def test_aggregation_consistency(self):
        """Subset indices equal indices of the pre-summed one-sector reduction."""
        t, c = seeded_world(3, 4, seed=13)
        d = decompose(t, c, t.countries[0], t.countries[2])
        subset = (t.sectors[1], t.sectors[3])
        mask = np.array([s in subset for s in t.sectors])

        def reduce(vec):
            return np.array([vec[mask].sum()])

        red = DecompGroups(exporter=d.exporter, importer=d.importer, year=d.year,
                           sectors=("agg",), E=reduce(d.E),
                           **{k: reduce(d.group(k)) for k in
                              ("G1", "G2", "G3", "G4", "G5", "G6", "G7", "G8")})
        a = indices(d, subset)
        b = indices(red, ("agg",))
        assert a.forward_share == pytest.approx(b.forward_share, rel=1e-12)
        assert a.backward_share == pytest.approx(b.backward_share, rel=1e-12)
        assert a.position == pytest.approx(b.position, rel=1e-12)

    def test_scale_invariance(self):
        t, c = seeded_world(3, 2, seed=14)
        scaled = MrioTable(year=t.year, countries=t.countries, sectors=t.sectors,
                           Z=t.Z * 2.5, Y=t.Y * 2.5, VA=t.VA * 2.5, X=t.X * 2.5)
        cs = coefficients(scaled)
        for s in t.countries:
            for r in t.countries:
                if s == r:
                    continue
                a = indices(decompose(t, c, s, r), t.sectors)
                b = indices(decompose(scaled, cs, s, r), t.sectors)
                for name in ("forward_share", "backward_share", "participation", "position"):
                    assert abs(getattr(a, name) - getattr(b, name)) <= 1e-12


class TestIndicesSeries:
    def test_singleton_matches_direct(self):
        t, c = seeded_world(3, 2, seed=2)
        [(year, ix)] = indices_series([t], "S00", "S01", t.sectors)
        direct = indices(decompose(t, c, "S00", "S01"), t.sectors)
        assert year == t.year
        assert ix == direct

    def test_identical_years_identical_records(self):
        a = synth_mrio(SynthSpec(G=3, N=2, seed=2, year=2020))
        b = synth_mrio(SynthSpec(G=3, N=2, seed=2, year=2021))
        out = indices_series([b, a], "S00", "S01", a.sectors)
        assert [y for y, _ in out] == [2020, 2021]
        assert out[0][1] == out[1][1]

    def test_inconsistent_worlds_rejected(self):
        a = synth_mrio(SynthSpec(G=3, N=2, seed=2, year=2020))
        b = synth_mrio(SynthSpec(G=4, N=2, seed=2, year=2021))
        with pytest.raises(ValueError, match="different country/sector"):
            indices_series([a, b], "S00", "S01", a.sectors)

    def test_monotone_offdiagonal_scaling_raises_forward_share(self):
        """Worlds whose cross-border coefficients grow year over year: the
        forward share must grow with them, and the series must equal the
        per-year direct computation."""
        rng = np.random.default_rng(21)
        g, n = 3, 2
        gn = g * n
        dom = rng.uniform(0.1, 0.5, size=(gn, gn))
        off = rng.uniform(0.1, 0.5, size=(gn, gn))
        blockmask = np.zeros((gn, gn), dtype=bool)
        for k in range(g):
            blockmask[k * n:(k + 1) * n, k * n:(k + 1) * n] = True
        dom *= blockmask
        off *= ~blockmask
        dom *= 0.3 / dom.sum(axis=0, keepdims=True)
        off *= 0.4 / off.sum(axis=0, keepdims=True)
        y = rng.uniform(0.5, 1.5, size=(gn, g))

        tables = []
        for k, year in enumerate(range(2015, 2024)):
            lam = 0.08 + 0.07 * k
            a = dom + lam * off
            tables.append(world_from_coefficients(
                a, y, [f"S{j:02d}" for j in range(g)], ["C1", "C2"], year=year))

        series = indices_series(tables, "S00", "S01", ("C1", "C2"))
        fwd = [ix.forward_share for _, ix in series]
        assert all(b >= a for a, b in zip(fwd, fwd[1:]))
        for table, (year, ix) in zip(tables, series):
            direct = indices(decompose(table, coefficients(table), "S00", "S01"),
                             ("C1", "C2"))
            assert year == table.year and ix == direct

    def test_position_formula_against_log(self):
        t, c = seeded_world(3, 2, seed=3)
        ix = indices(decompose(t, c, "S00", "S02"), t.sectors)
        assert ix.position == pytest.approx(
            math.log1p(ix.forward_share) - math.log1p(ix.backward_share), abs=1e-15)
