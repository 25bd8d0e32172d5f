import json

import numpy as np
import pytest

from stablefield import diagnostics as dg
from stablefield.classification import ray
from stablefield.lattice import Window
from stablefield.markov import MarkovFamily, two_state_lazy
from stablefield.simulate import FieldSample, frechet_cdf, simulate_max_stable
from stablefield.spectral import MAX_STABLE, SUM_STABLE, Combination
from stablefield.zoo import make_example, make_reference


class TestVerdict:
    def test_vanishes(self):
        assert dg.verdict([0.1, 0.004, 0.003, 0.002], 0.005) == dg.VANISHES

    def test_vanish_needs_monotone_tail(self):
        assert dg.verdict([0.001, 0.002, 0.003], 0.005) == dg.INCONCLUSIVE

    def test_persists(self):
        assert dg.verdict([0.5, 0.26, 0.25, 0.25], 0.005) == dg.PERSISTS

    def test_persist_factor(self):
        # 0.02 is four tolerances: below the analytic bar, above the empirical one
        assert dg.verdict([0.02, 0.02, 0.02], 0.005) == dg.INCONCLUSIVE
        assert dg.verdict([0.02, 0.02, 0.02], 0.005, persist_factor=2.0) == dg.PERSISTS
        s = dg.DiagnosticSeries("x", [1, 2, 3], [0.02, 0.02, 0.02], 0.005, persist_factor=2.0)
        assert s.verdict == dg.PERSISTS

    def test_drifting_is_inconclusive(self):
        assert dg.verdict([0.4, 0.2, 0.1], 0.005) == dg.INCONCLUSIVE
        assert dg.verdict([], 0.005) == dg.INCONCLUSIVE

    def test_combine(self):
        assert dg.combine_verdicts([dg.VANISHES, dg.VANISHES]) == dg.VANISHES
        assert dg.combine_verdicts([dg.VANISHES, dg.PERSISTS]) == dg.PERSISTS
        assert dg.combine_verdicts([dg.VANISHES, dg.INCONCLUSIVE]) == dg.INCONCLUSIVE
        assert dg.combine_verdicts([]) == dg.INCONCLUSIVE


class TestSeries:
    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            dg.DiagnosticSeries("x", [4, 2], [0.1, 0.2], 0.005)

    def test_limit_estimate(self):
        s = dg.DiagnosticSeries("x", [1, 2], [0.3, 0.26], 0.005)
        assert s.limit_estimate == 0.26
        s.limit = 0.25
        assert s.limit_estimate == 0.25

    def test_csv(self, tmp_path):
        s = dg.DiagnosticSeries("x", [4, 8, 16], [0.1, 0.01, 1 / 3], 0.005, se=[0.1, 0.1, 0.1])
        s.to_csv(tmp_path / "x.csv")
        lines = (tmp_path / "x.csv").read_text().splitlines()
        assert lines[0] == "T,value,se"
        assert float(lines[3].split(",")[1]) == 1 / 3
        rec = json.loads((tmp_path / "x.csv.verdict.json").read_text())
        assert rec["verdict"] == s.verdict and rec["final"] == 1 / 3


class TestAverages:
    def test_product_cyclic_exact(self):
        h = lambda t: (t[0] % 3) + 10 * (t[1] % 4)  # noqa: E731
        s = dg.ergodic_average(h, [6, 12], d=2)
        np.testing.assert_allclose(s.values, 1 + 10 * 1.5, atol=1e-12)

    def test_alternating_is_zero(self):
        s = dg.ergodic_average(lambda t: (-1) ** (t[0] + t[1]), [1, 2, 5, 8], d=2)
        assert np.all(s.values == 0.0)

    def test_input_forms(self):
        win = Window(3, 1)
        arr = np.arange(win.size, dtype=float)
        mapping = {tuple(t): float(k) for k, t in enumerate(win.indices.tolist())}
        a = dg.ergodic_average(arr, [1, 3])
        b = dg.ergodic_average(mapping, [1, 3])
        np.testing.assert_array_equal(a.values, b.values)
        with pytest.raises(ValueError):
            dg.ergodic_average(arr[:-1], [1, 3])
        with pytest.raises(TypeError):
            dg.ergodic_average("h", [1])

    def test_ladder_checked(self):
        with pytest.raises(ValueError):
            dg.ergodic_average(lambda t: 0.0, [4, 2])

    def test_kvn_perfect_squares(self):
        # density of squares in (-T, T] is (floor(sqrt T) + 1) / 2T
        T = 65536
        win = Window(T, 1)
        t = win.indices[:, 0]
        root = np.floor(np.sqrt(np.maximum(t, 0)) + 0.5).astype(int)
        h = ((t >= 0) & (root * root == t)).astype(float)
        ok, s = dg.kvn_filter(h, T)
        assert ok
        assert s.final == pytest.approx(257 / (2 * T), rel=1e-12)
        np.testing.assert_allclose(s.extra["exceptional_density"], s.values)

    def test_kvn_even_persists(self):
        T = 1024
        t = Window(T, 1).indices[:, 0]
        ok, s = dg.kvn_filter((t % 2 == 0).astype(float), T)
        assert not ok and s.final == 0.5

    def test_kvn_checks(self):
        with pytest.raises(ValueError):
            dg.kvn_filter(-np.ones(8), 4)
        with pytest.raises(ValueError):
            dg.kvn_filter(2 * np.ones(8), 4, M=1.0)


class TestAnalytic:
    def test_cyclic_max_ergodicity(self):
        fam, _ = make_reference("cyclic_positive")
        s = dg.max_ergodicity(fam)
        np.testing.assert_allclose(s.values, 0.25, atol=1e-15)
        assert s.verdict == dg.PERSISTS

    def test_moving_max_ergodicity(self):
        fam, _ = make_reference("zshift_null_moving")
        s = dg.max_ergodicity(fam, T_list=[4, 16, 64, 256])
        np.testing.assert_allclose(s.values, 1 / (2 * np.array([4, 16, 64, 256])), rtol=1e-14)
        assert s.verdict == dg.VANISHES

    def test_normalized_combination(self):
        fam, _ = make_reference("identity_nonergodic", alpha=1.7)
        s = dg.max_ergodicity(fam, Combination.of((0.5, (0,)), (2.0, (3,))), T_list=[4, 8, 16])
        np.testing.assert_allclose(s.values, 1.0)

    def test_max_only(self):
        fam, _ = make_reference("cyclic_positive", kind=SUM_STABLE)
        with pytest.raises(ValueError):
            dg.max_ergodicity(fam)

    def test_gross_moving(self):
        fam, _ = make_reference("zshift_null_moving", alpha=1.5, kind=SUM_STABLE)
        s = dg.gross_weak_mixing(fam, T_list=[4, 16, 64, 256])
        np.testing.assert_allclose(s.values, 1 / (2 * np.array([4, 16, 64, 256])), rtol=1e-14)

    def test_gross_identity(self):
        fam, _ = make_reference("identity_nonergodic", alpha=0.7, kind=SUM_STABLE)
        s = dg.gross_weak_mixing(fam, T_list=[4, 8, 16], sequences=[ray((1,), 1)], N=8)
        assert s.verdict == dg.PERSISTS
        assert np.all(s.extra["mixing"]["n^1*(1)"].values == 1.0)

    @pytest.mark.parametrize("K", [(0.0, 1.0), (1.0, np.inf), (2.0, 1.0)])
    def test_gross_needs_compact_K(self, K):
        fam, _ = make_reference("identity_nonergodic", kind=SUM_STABLE)
        with pytest.raises(ValueError):
            dg.gross_weak_mixing(fam, K=K)

    def test_gross_empty_base(self):
        fam, _ = make_reference("identity_nonergodic", kind=SUM_STABLE)
        with pytest.raises(ValueError, match="K"):
            dg.gross_weak_mixing(fam, K=(3.0, 4.0))

    def test_default_combinations(self):
        assert len(dg.default_combinations(1)) == 5
        combos = dg.default_combinations(2, seed=3)
        assert len(combos) == 7
        assert combos == dg.default_combinations(2, seed=3)
        assert all(0.5 <= c <= 2.0 for combo in combos[4:] for c in combo.coefs)

    def test_battery_skips_unsupported(self):
        fam, _ = make_example("local_time", d=1, kind=MAX_STABLE)
        v, series = dg.max_ergodicity_battery(fam, T_list=[4, 16, 64])
        assert 0 < len(series) < len(dg.default_combinations(1))

    def test_max_mixing_two_state(self):
        fam = MarkovFamily([two_state_lazy()], 1.0, MAX_STABLE)
        out = dg.max_mixing(fam, [ray((1,), 1)], N=16)
        s = out["n^1*(1)"]
        n = np.arange(1, 17)
        np.testing.assert_allclose(s.values, 0.25 + 0.5 ** (n + 2), rtol=1e-13)
        assert s.limit_estimate == 0.25
        assert s.extra["oracle_at_last"] == pytest.approx(s.final, rel=1e-12)

    def test_max_mixing_horizon(self):
        fam, _ = make_reference("cyclic_positive")
        with pytest.raises(ValueError):
            dg.max_mixing(fam, [ray((1,), 1)], N=4)


class TestEmpirical:
    def test_identity_association_closed_form(self):
        # Y_t = Y_0: cov(1{Y <= x}, 1{Y <= y}) = F(x ^ y) - F(x) F(y)
        fam, _ = make_reference("identity_nonergodic")
        s = simulate_max_stable(fam, Window(1, 1), 5000, seed=11)
        for (x, y, c, se) in dg.association_grid(s, (0,), (1,), quantiles=(0.2, 0.5, 0.8)):
            exact = frechet_cdf(min(x, y), 1.0, 1.0) - frechet_cdf(x, 1.0, 1.0) * frechet_cdf(y, 1.0, 1.0)
            assert abs(c - exact) < 3 * se + 0.01

    def test_indicator_cov_second_order_se(self):
        # IA = IB with p = 1/2: the first-order term is constant, leaving sqrt(pa(1-pa)pb(1-pb))/n
        I = np.tile([0.0, 1.0], 50)
        cov, se = dg._indicator_cov(I, I)
        assert cov == 0.25
        assert se == pytest.approx(0.25 / 100, rel=1e-12)

    def test_degenerate_threshold_warns(self):
        win = Window(1, 1)
        s = FieldSample(MAX_STABLE, 1.0, win, np.arange(20.0).reshape(10, 2), 0, "adaptive")
        with pytest.warns(UserWarning, match="degenerate"):
            dg.association_check(s, [((0,), (1,), 100.0, 5.0)])

    def test_rectangle_event(self):
        win = Window(2, 1)
        s = FieldSample(MAX_STABLE, 1.0, win, np.array([[1.0, 2.0, 3.0, 4.0], [4.0, 3.0, 2.0, 1.0]]), 0, 1)
        ev = dg.RectangleEvent.of(((0,), 2.5), ((1,), 3.5))
        np.testing.assert_array_equal(ev.indicator(s), [1.0, 0.0])
        np.testing.assert_array_equal(ev.indicator(s, (-1,)), [1.0, 0.0])
        np.testing.assert_array_equal(dg.RectangleEvent().indicator(s), [1.0, 1.0])

    def test_cesaro_modes(self):
        fam, _ = make_reference("zshift_null_moving")
        s = simulate_max_stable(fam, Window(16, 1), 2000, seed=0)
        erg = dg.empirical_cesaro(s, mode="ergodic")
        wm = dg.empirical_cesaro(s, mode="weak_mixing")
        assert np.all(wm.values >= erg.values - 1e-15)
        assert erg.verdict == wm.verdict == dg.VANISHES

    def test_cesaro_window_check(self):
        fam, _ = make_reference("zshift_null_moving")
        s = simulate_max_stable(fam, Window(4, 1), 50, seed=0)
        B = dg.RectangleEvent.of(((2,), 1.0))
        with pytest.raises(ValueError, match="leaves"):
            dg.empirical_cesaro(s, B=B, A=B, T_list=[4])
        with pytest.raises(ValueError):
            dg.empirical_cesaro(s, mode="mixing")


def test_default_horizons():
    assert dg.default_horizons(1)[-1] == 256
    assert dg.default_horizons(2)[-1] == 64
    fam, _ = make_example("markov", chains="null")
    assert dg.default_horizons(fam)[-1] == 4 ** 10
