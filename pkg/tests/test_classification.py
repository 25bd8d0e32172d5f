import time
import warnings

import numpy as np
import pytest

from stablefield.classification import (
    SupportDeficiency,
    build_test_function,
    classify,
    default_sequences,
    find_weakly_wandering,
    ray,
    series_test,
)
from stablefield.measure_space import StateSpace, cyclic_action, identity_action, zshift_action
from stablefield.spectral import MAX_STABLE, SpectralFamily, SupportWarning
from stablefield.zoo import make_example, make_reference


def moving(half_width=300):
    act = zshift_action(half_width)
    f0 = np.array([1.0 if k == 0 else 0.0 for k in act.space.states])
    return SpectralFamily(1.0, MAX_STABLE, f0, act, "moving")


class TestSequences:
    def test_counts(self):
        assert len(default_sequences(1, [1])) == 3
        assert len(default_sequences(2, [1, 4])) == 13
        assert default_sequences(1, [4])[0].label == "n^4*(1)"

    def test_ray_terms(self):
        assert ray((1, -2), 2).terms(3) == [(1, -2), (4, -8), (9, -18)]

    def test_bad_powers(self):
        with pytest.raises(ValueError):
            default_sequences(1, [])
        with pytest.raises(ValueError):
            default_sequences(1, [0])


class TestTestFunction:
    def test_window_indicator_warns(self):
        fam = moving(20)
        with pytest.warns(SupportWarning):
            g = build_test_function(fam, [(-1,), (0,), (1,)], [1.0, 1.0, 1.0])
        expect = np.array([1.0 if abs(k) <= 1 else 0.0 for k in fam.space.states])
        np.testing.assert_array_equal(g, expect)

    def test_geometric_weights_full_support(self):
        fam = moving(20)
        T0 = [(k,) for k in range(-20, 21)]
        a = [2.0 ** -abs(k) for k in range(-20, 21)]
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            g = build_test_function(fam, T0, a)
        np.testing.assert_allclose(g, 2.0 ** -np.abs(np.array(fam.space.states)), rtol=1e-15)

    def test_constant_family(self):
        space = StateSpace((0, 1), np.ones(2))
        fam = SpectralFamily(1.5, MAX_STABLE, [2.0, 0.5], identity_action(space))
        g = build_test_function(fam, [(0,), (3,)], [0.25, 0.75])
        np.testing.assert_allclose(g, np.array([2.0, 0.5]) ** 1.5)

    def test_empty_T0(self):
        with pytest.raises(ValueError):
            build_test_function(moving(5), [])

    def test_nonpositive_weight(self):
        with pytest.raises(ValueError):
            build_test_function(moving(5), [(0,)], [0.0])


class TestSeriesTest:
    def test_cycle_positive(self):
        act = cyclic_action(4)
        rep = series_test(act, None, np.ones(4), [ray((1,), 1)], N=64)
        assert rep.global_verdict == "positive"
        assert all(ev.final_sum == 64 for ev in rep.per_state.values())

    def test_zshift_null(self):
        act = zshift_action(300)
        g = 2.0 ** -np.abs(np.array(act.space.states, dtype=float))
        rep = series_test(act, None, g, [ray((1,), 1)], N=64)
        # S_N(k) = sum_n 2^-|k+n| < sum over all of Z = 3
        assert max(ev.final_sum for ev in rep.per_state.values()) < 3.0
        assert rep.per_state[0].final_sum == pytest.approx(1 - 2.0 ** -64, rel=1e-15)
        # states the horizon reaches (the bump of g passes by n = 48) converge
        reached = [k for k in act.space.states if -47 <= k <= 300 - 64]
        assert all(rep.per_state[k].verdict == "null" for k in reached)
        both = series_test(act, None, g, [ray((1,), 1), ray((-1,), 1)], N=64)
        assert both.global_verdict == "null"

    def test_support_deficiency(self):
        with pytest.raises(SupportDeficiency):
            series_test(cyclic_action(4), None, np.array([1.0, 0, 1, 1]), [ray((1,), 1)])

    def test_argument_checks(self):
        with pytest.raises(ValueError):
            series_test(cyclic_action(4), None, np.ones(4), [ray((1,), 1)], N=4)
        with pytest.raises(ValueError):
            series_test(cyclic_action(4), None, np.ones(4), [])

    def test_monotone_in_horizon(self):
        fam, _ = make_reference("cyclic_positive")
        small, large = classify(fam, N=16), classify(fam, N=64)
        for s, ev in small.per_state.items():
            if ev.verdict == "positive":
                assert large.per_state[s].verdict == "positive"

    def test_rescaling_g(self):
        fam = moving()
        act = fam.system()
        g = 2.0 ** -np.abs(np.array(act.space.states, dtype=float))
        seqs = default_sequences(1)
        a = series_test(act, None, g, seqs, 64)
        b = series_test(act, None, 1e6 * g, seqs, 64)
        assert [e.verdict for e in a.per_state.values()] == [e.verdict for e in b.per_state.values()]


# ground truth for the built-in families: (example, params, expected verdict)
GROUND_TRUTH = [
    ("cyclic_positive", {}, "positive"),
    ("zshift_null_moving", {}, "null"),
    ("identity_nonergodic", {}, "positive"),
    ("product_split", {}, "mixed"),
    ("markov", {"chains": "null"}, "null"),
    ("markov", {"chains": "positive"}, "positive"),
    ("markov", {"chains": "null,positive"}, "null"),
    ("local_time", {"d": 1}, "null"),
    ("local_time", {"d": 2}, "null"),
]


@pytest.mark.parametrize("name,params,expected", GROUND_TRUTH)
def test_ground_truth(name, params, expected):
    fam, truth = make_example(name, **params)
    rep = classify(fam)
    assert rep.global_verdict == expected == truth.cls
    assert rep.parts_invariant


def test_deterministic():
    fam, _ = make_example("markov", chains="null")
    a, b = classify(fam), classify(fam)
    assert a.rows() == b.rows()


def test_test_function_independence():
    fam = moving()
    act = fam.system()
    ks = np.abs(np.array(act.space.states, dtype=float))
    g1 = 2.0 ** -ks
    g2 = 1.0 / (1.0 + ks) ** 3
    seqs = default_sequences(1)
    assert series_test(act, None, g1, seqs).global_verdict == series_test(act, None, g2, seqs).global_verdict


class TestWeaklyWandering:
    def test_zshift_found(self):
        res = find_weakly_wandering(zshift_action(300), N=16)
        assert res is not None and len(res.sequence) == 16

    def test_cycle_none(self):
        assert find_weakly_wandering(cyclic_action(4), N=8) is None

    def test_null_markov_found(self):
        fam, _ = make_example("markov", chains="null")
        res = find_weakly_wandering(fam.system(), N=16)
        assert res is not None

    def test_local_time_found(self):
        for d in (1, 2):
            fam, _ = make_example("local_time", d=d)
            assert find_weakly_wandering(fam.system()) is not None

    def test_classify_horizon_cap(self):
        fam, _ = make_example("local_time", d=1)
        with pytest.raises(ValueError, match="horizon"):
            classify(fam, N=64)

    def test_horizon_check(self):
        with pytest.raises(ValueError):
            find_weakly_wandering(cyclic_action(4), N=1)

    def test_fast(self):
        start = time.perf_counter()
        for name, params, _ in GROUND_TRUTH:
            fam, _ = make_example(name, **params)
            find_weakly_wandering(fam.system())
        assert time.perf_counter() - start < 5.0
