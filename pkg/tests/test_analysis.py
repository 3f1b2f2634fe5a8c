import csv
from fractions import Fraction
from math import ceil, floor

import pytest

from cellular_ia.analysis import (
    PRESETS,
    SweepSpec,
    analytic_dof,
    analytic_dof_bdria,
    analytic_dof_rir,
    analytic_dof_tdma,
    critical_points,
    format_gain,
    format_rational,
    gain_pct,
    run_sweep,
    write_sweep_csv,
)
from cellular_ia.core import SystemConfig
from cellular_ia.errors import InvalidConfigError, SchemeInapplicableError

WE = SystemConfig(3, 4, 2, 3)


def _rows(name):
    return {(r.scheme, r.config.N): r for r in run_sweep(PRESETS[name])}


class TestClosedForms:
    def test_worked_example(self):
        assert analytic_dof_rir(WE) == Fraction(18, 5)
        assert analytic_dof_bdria(WE) == 6
        assert analytic_dof_tdma(WE) == 3
        assert analytic_dof("ria", WE) is None

    def test_independent_float_oracle(self):
        # float re-derivation from scratch, compared to the exact values
        for L, M, K, N in [(2, 37, 3, 25), (3, 10, 4, 7), (4, 9, 2, 8), (2, 72, 3, 54)]:
            cfg = SystemConfig(L, M, K, N)
            phi = floor(N / (M - N))
            pb = max(0, floor((2 * N - M) / (M - N)))
            spu = ceil(M / K)
            if phi:
                assert float(analytic_dof_rir(cfg)) == pytest.approx(L * spu * K * phi / (L * phi + 1))
            assert float(analytic_dof_bdria(cfg)) == pytest.approx(L * spu * K * (pb + 1) / (L + pb + 1))

    def test_phi_zero_inapplicable(self):
        with pytest.raises(SchemeInapplicableError):
            analytic_dof_rir(SystemConfig(2, 12, 3, 5))

    def test_gain_and_formatting(self):
        assert gain_pct(Fraction(18, 5), Fraction(3)) == 20
        assert format_gain(Fraction(1, 3) * 100) == "33.3"
        assert format_rational(Fraction(18, 5)) == "3.6"
        assert format_rational(Fraction(6)) == "6"


def divisibility_oracle(M):
    return [N for N in range(M) if 2 * N >= M and any((M - N) * q == M for q in range(1, M + 1))]


class TestCriticalPoints:
    @pytest.mark.parametrize("M", [2, 4, 12, 72, 97])
    def test_against_oracle(self, M):
        assert [n for n, _ in critical_points(M)] == divisibility_oracle(M)

    def test_m72(self):
        pts = dict(critical_points(72))
        assert {36, 48, 54, 60, 63, 64, 66, 68, 69, 70, 71} == set(pts)
        assert pts[54] == 3
        assert dict(critical_points(72, "bdria"))[54] == 2

    def test_bad_inputs(self):
        with pytest.raises(InvalidConfigError):
            critical_points(1)
        with pytest.raises(ValueError):
            critical_points(8, "tdma")


class TestPresets:
    def test_fig10_endpoint(self):
        rows = _rows("fig10")
        assert rows["rir", 25].config.M == 37
        assert float(rows["rir", 25].gain) == pytest.approx(24.8, abs=0.05)
        assert float(rows["bdria", 25].gain) == pytest.approx(56.0, abs=0.05)

    def test_fig11_identical(self):
        rows = _rows("fig11")
        for N in range(5, 26):
            assert rows["rir", N].dof == rows["bdria", N].dof
        assert float(rows["rir", 25].gain) == pytest.approx(36.0, abs=0.05)

    def test_fig12(self):
        rows = _rows("fig12")
        assert rows["rir", 25].config.M == 26
        assert float(rows["bdria", 25].gain) == pytest.approx(100.0, abs=0.05)
        for N in range(5, 26):
            assert rows["rir", N].dof < rows["bdria", N].dof

    def test_fig14(self):
        rows = _rows("fig14")
        for N, g in [(36, 33.3), (48, 50.0), (54, 60.0)]:
            assert float(rows["bdria", N].gain) == pytest.approx(g, abs=0.05)

    def test_fig13_quoted_gains_locations(self):
        # closed-form RIR against a TDMA baseline of N lands on the three
        # quoted percentages at N = 48, 54 and 58
        rows = _rows("fig13")
        for N, g in [(48, 20.0), (54, 14.3), (58, 10.3)]:
            assert float(rows["rir", N].gain) == pytest.approx(g, abs=0.05)

    def test_fig14_constant_between_critical_points(self):
        # between two divisibility points with equal phi_bar the DoF is flat
        rows = _rows("fig14")
        assert len({rows["bdria", N].dof for N in range(37, 48)}) == 1

    def test_bdria_dominates_rir(self):
        for name in ("fig10", "fig11", "fig12"):
            rows = _rows(name)
            for N in range(5, 26):
                assert rows["bdria", N].dof >= rows["rir", N].dof
                assert rows["rir", N].dof >= rows["tdma", N].dof

    def test_csv(self, tmp_path):
        path = tmp_path / "s.csv"
        write_sweep_csv(run_sweep(PRESETS["fig10"]), path)
        rows = list(csv.DictReader(path.open()))
        assert len(rows) == 21 * 3
        end = [r for r in rows if r["N"] == "25"]
        assert {r["scheme"]: r["gain_vs_tdma_pct"] for r in end} == {"tdma": "0.0", "rir": "24.8", "bdria": "56.0"}


class TestSweepSpec:
    def test_fixed_m_range_checked(self):
        with pytest.raises(InvalidConfigError):
            SweepSpec("fixed_M", 2, 3, (30, 71), M=72)

    def test_unknown_mode(self):
        with pytest.raises(InvalidConfigError):
            SweepSpec("random", 2, 3, (5, 6), rho=2)

    def test_inapplicable_rows_blank(self):
        spec = SweepSpec("fixed_rho", 2, 3, (5, 5), rho=Fraction(5, 2), schemes=("rir",))
        (row,) = run_sweep(spec)
        assert row.dof is None and row.cells()[-2:] == ["", ""]
