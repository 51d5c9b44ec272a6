"""Tests for MRIO loading, validation, coefficients, and synthetic worlds."""

import numpy as np
import pytest

from gvckit.errors import DataFormatError, NumericalError
from gvckit.mrio import (MrioTable, SynthSpec, coefficients, load_mrio, synth_mrio,
                         validate_mrio, write_mrio)
from oracles import power_series_inverse, world_from_coefficients

MINIMAL_CSV = """2019,2,1
AAA,BBB
S1
10,4
5,8
20,6
9,8
25,18
40,30
"""


def rebuild(table, **overrides):
    fields = {"year": table.year, "countries": table.countries, "sectors": table.sectors,
              "Z": table.Z.copy(), "Y": table.Y.copy(), "VA": table.VA.copy(),
              "X": table.X.copy()}
    fields.update(overrides)
    return MrioTable(**fields)


# ---------------------------------------------------------------------------
# load / write
# ---------------------------------------------------------------------------

class TestLoad:
    def test_minimal_two_country_file(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text(MINIMAL_CSV)
        t = load_mrio(path)
        assert t.G == 2 and t.N == 1 and t.year == 2019
        assert t.countries == ("AAA", "BBB")
        np.testing.assert_array_equal(t.Z, [[10, 4], [5, 8]])
        np.testing.assert_array_equal(t.Y, [[20, 6], [9, 8]])
        np.testing.assert_array_equal(t.VA, [25, 18])
        np.testing.assert_array_equal(t.X, [40, 30])
        assert validate_mrio(t).passed

    def test_duplicate_country_code(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text(MINIMAL_CSV.replace("AAA,BBB", "AAA,AAA"))
        with pytest.raises(DataFormatError, match="AAA"):
            load_mrio(path)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("2019,2\nAAA,BBB\n")
        with pytest.raises(DataFormatError, match="row 1"):
            load_mrio(path)

    def test_ragged_row(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text(MINIMAL_CSV.replace("5,8\n", "5,8,9\n", 1))
        with pytest.raises(DataFormatError, match="row 5"):
            load_mrio(path)

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text(MINIMAL_CSV.replace("10,4", "10,oops"))
        with pytest.raises(DataFormatError, match="'oops'"):
            load_mrio(path)

    def test_round_trip_bitwise(self, tmp_path):
        t = synth_mrio(SynthSpec(G=3, N=2, seed=11))
        path = tmp_path / "w.csv"
        write_mrio(t, path)
        t2 = load_mrio(path)
        assert t2.year == t.year
        assert t2.countries == t.countries and t2.sectors == t.sectors
        for name in ("Z", "Y", "VA", "X"):
            np.testing.assert_array_equal(getattr(t2, name), getattr(t, name))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

class TestValidate:
    def test_balanced_synthetic_passes(self):
        rep = validate_mrio(synth_mrio(SynthSpec(G=3, N=2, seed=1)))
        assert rep.passed and not rep.violations

    def test_perturbed_output_flags_column_balance(self):
        t = synth_mrio(SynthSpec(G=3, N=2, seed=1))
        x = t.X.copy()
        x[3] *= 1.10
        rep = validate_mrio(rebuild(t, X=x))
        col = [f for f in rep.violations if f.code == "column-balance"]
        assert len(col) == 1 and "column 3" in col[0].location
        assert col[0].magnitude == pytest.approx(0.1 / 1.1, rel=1e-6)

    def test_negative_inventory_cell_is_warning_only(self):
        t = synth_mrio(SynthSpec(G=3, N=2, seed=7, inventory=True))
        assert (t.Y < 0).sum() == 1
        rep = validate_mrio(t)
        assert rep.passed
        assert any(f.code == "negative-Y" for f in rep.warnings)

    def test_negative_intermediate_is_violation(self):
        t = synth_mrio(SynthSpec(G=2, N=1, seed=3))
        z = t.Z.copy()
        z[0, 1] = -1.0
        rep = validate_mrio(rebuild(t, Z=z))
        assert not rep.passed
        assert any(f.code == "negative-Z" for f in rep.violations)

    def test_single_country_world_flagged(self):
        t = MrioTable(year=2019, countries=("AAA",), sectors=("S1",),
                      Z=[[50.0]], Y=[[50.0]], VA=[50.0], X=[100.0])
        rep = validate_mrio(t)
        assert any(f.code == "world-size" for f in rep.violations)


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------

class TestCoefficients:
    def test_geometric_series_world(self):
        # one sector feeding half of its own output back into production
        t = MrioTable(year=2019, countries=("AAA",), sectors=("S1",),
                      Z=[[50.0]], Y=[[50.0]], VA=[50.0], X=[100.0])
        c = coefficients(t)
        assert c.A[0, 0] == pytest.approx(0.5, abs=1e-15)
        assert c.V[0] == pytest.approx(0.5, abs=1e-15)
        assert c.B[0, 0] == pytest.approx(2.0, rel=1e-12)
        assert c.L[0, 0, 0] == pytest.approx(2.0, rel=1e-12)

    def test_no_intermediates_gives_identity(self):
        t = MrioTable(year=2019, countries=("AAA", "BBB"), sectors=("S1",),
                      Z=np.zeros((2, 2)), Y=[[30.0, 10.0], [5.0, 20.0]],
                      VA=[40.0, 25.0], X=[40.0, 25.0])
        c = coefficients(t)
        np.testing.assert_array_equal(c.A, np.zeros((2, 2)))
        np.testing.assert_array_equal(c.B, np.eye(2))
        np.testing.assert_array_equal(c.V, np.ones(2))

    def test_power_series_oracle(self):
        t = synth_mrio(SynthSpec(G=3, N=2, seed=1))
        c = coefficients(t)
        b_ref = power_series_inverse(c.A, terms=200)
        assert np.abs(c.B - b_ref).max() <= 1e-9

    @pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
    def test_value_closure(self, seed):
        c = coefficients(synth_mrio(SynthSpec(G=4, N=3, seed=seed)))
        assert np.abs(c.V @ c.B - 1.0).max() <= 1e-10

    def test_leontief_residuals(self):
        t = synth_mrio(SynthSpec(G=5, N=4, seed=9))
        c = coefficients(t)
        gn = t.G * t.N
        assert np.abs(c.B @ (np.eye(gn) - c.A) - np.eye(gn)).max() <= 1e-9
        for s in range(t.G):
            blk = slice(s * t.N, (s + 1) * t.N)
            res = c.L[s] @ (np.eye(t.N) - c.A[blk, blk]) - np.eye(t.N)
            assert np.abs(res).max() <= 1e-9

    def test_zero_output_sector_convention(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(0.0, 0.2, size=(4, 4))
        a[3, :] = 0.0
        a[:, 3] = 0.0
        y = rng.uniform(0.5, 1.5, size=(4, 2))
        y[3, :] = 0.0
        t = world_from_coefficients(a, y, ("AAA", "BBB"), ("S1", "S2"))
        assert t.X[3] == 0.0
        assert validate_mrio(t).passed
        c = coefficients(t)
        np.testing.assert_array_equal(c.A[:, 3], np.zeros(4))
        assert c.V[3] == 0.0
        pos = t.X > 0
        assert np.abs((c.V @ c.B)[pos] - 1.0).max() <= 1e-10

    def test_near_singular_raises(self):
        a = np.array([[1.0 - 1e-14, 0.0], [0.0, 0.5]])
        y = np.full((2, 2), 0.5)
        t = world_from_coefficients(a, y, ("AAA", "BBB"), ("S1",))
        with pytest.raises(NumericalError, match="condition"):
            coefficients(t)


# ---------------------------------------------------------------------------
# synthetic generator
# ---------------------------------------------------------------------------

class TestSynth:
    def test_deterministic_per_seed(self):
        a = synth_mrio(SynthSpec(G=2, N=1, seed=7))
        b = synth_mrio(SynthSpec(G=2, N=1, seed=7))
        for name in ("Z", "Y", "VA", "X"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    @pytest.mark.parametrize("g,n,seed", [(2, 1, 0), (3, 2, 1), (5, 4, 2)])
    def test_validator_as_oracle(self, g, n, seed):
        rep = validate_mrio(synth_mrio(SynthSpec(G=g, N=n, seed=seed)))
        assert rep.passed and not rep.violations and not rep.warnings

    def test_zero_density_world(self):
        t = synth_mrio(SynthSpec(G=2, N=1, seed=7, density=0.0))
        np.testing.assert_array_equal(t.Z, np.zeros((2, 2)))

    def test_column_sums_capped(self):
        t = synth_mrio(SynthSpec(G=4, N=3, seed=5))
        c = coefficients(t)
        assert c.A.sum(axis=0).max() <= 0.8 + 1e-12

    def test_bad_spec_rejected(self):
        with pytest.raises(ValueError):
            synth_mrio(SynthSpec(G=1, N=1, seed=0))
