"""Acceptance suite: thirteen desk-scale criteria, each with its tolerance and time budget.

Every test prints one ``criterion N: PASS|FAIL`` line; the lines are
repeated in the terminal summary.
"""

import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from stablefield import diagnostics as dg
from stablefield.classification import classify, find_weakly_wandering, ray
from stablefield.lattice import Window
from stablefield.markov import LazyWalk, PathShiftAction, PathTestFunction, two_state_lazy
from stablefield.measure_space import (
    StateSpace,
    cyclic_action,
    disjoint_union_action,
    dual_apply,
    identity_action,
    product_cyclic_action,
    verify_action_laws,
    zshift_action,
)
from stablefield.simulate import ecf, frechet_cdf, ks_frechet, simulate_max_stable, simulate_sum_stable
from stablefield.spectral import MAX_STABLE, SUM_STABLE
from stablefield.zoo import make_example


def finite_actions():
    return {
        "cyclic": cyclic_action(4),
        "zshift_counting": zshift_action(300),
        "zshift_geometric": zshift_action(40, "geometric"),
        "identity": identity_action(StateSpace((0, 1, 2), np.array([1.0, 2.0, 0.5]))),
        "product_cyclic(3,4)": product_cyclic_action((3, 4)),
        "product_split": disjoint_union_action([("cyc", cyclic_action(4, np.full(4, 3.0))),
                                                ("z", zshift_action(300))]),
    }


def path_actions():
    return {
        "path_shift[null]": PathShiftAction([LazyWalk(200)]),
        "path_shift[positive]": PathShiftAction([two_state_lazy()]),
        "path_shift[null,positive]": PathShiftAction([LazyWalk(200), two_state_lazy()]),
    }


# every built-in family, with the kind-independent ground truth of its class
ZOO = [
    ("cyclic_positive", {}),
    ("zshift_null_moving", {}),
    ("identity_nonergodic", {}),
    ("product_split", {}),
    ("markov", {"chains": "null"}),
    ("markov", {"chains": "positive"}),
    ("markov", {"chains": "null,positive"}),
    ("local_time", {"d": 1}),
    ("local_time", {"d": 2}),
]


def label(name, params):
    return name + "".join(f"[{v}]" for v in params.values())


# ---------------------------------------------------------------------------
# 1-4: actions and classification


def test_c01_action_laws(record):
    t0 = time.perf_counter()
    worst, failed = 0.0, []
    for name, act in {**finite_actions(), **path_actions()}.items():
        rep = verify_action_laws(act, sample_budget=10_000, tol=1e-12)
        worst = max(worst, max(rep.checks.values()))
        if not rep.ok:
            failed.append(name)
    dt = time.perf_counter() - t0
    ok = not failed and dt < 1.0
    record(1, ok, f"worst violation {worst:.2e} (tol 1e-12), failures {failed or 'none'}, {dt:.2f}s (limit 1s)")
    assert ok


def _isometry_gap_finite(act, rng, n=100):
    gap = 0.0
    for _ in range(n):
        t = tuple(int(v) for v in rng.integers(-6, 7, act.d))
        idx, _, _ = act.maps(t)
        img = np.zeros(act.space.n, dtype=bool)
        img[idx[idx >= 0]] = True
        f = np.where(img, rng.random(act.space.n), 0.0)
        g = dual_apply(act, t, f, on_escape="zero")
        gap = max(gap, abs(act.space.integrate(g) - act.space.integrate(f)) / max(act.space.integrate(f), 1e-300))
    return gap


def _isometry_gap_paths(act, rng, n=100):
    # f = sum_tau a_tau 1{x(tau) = 0}: ||f||_1 = pi_0 sum a_tau, and the dual keeps it
    pi0 = np.prod([c.pi0 for c in act.chains])
    gap = 0.0
    for _ in range(n):
        k = int(rng.integers(1, 6))
        offs = rng.integers(-10, 11, (k, act.d))
        a = rng.uniform(0.1, 2.0, k)
        g = PathTestFunction(offs, a)
        t = tuple(int(v) for v in rng.integers(-10, 11, act.d))
        vals, _ = act.dual(g, t)
        norm = pi0 * a.sum()
        gap = max(gap, abs(act.space.integrate(vals) - norm) / norm)
    return gap


def test_c02_dual_isometry(record):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    gaps = {name: _isometry_gap_finite(act, rng) for name, act in finite_actions().items()}
    gaps |= {name: _isometry_gap_paths(act, rng) for name, act in path_actions().items()}
    dt = time.perf_counter() - t0
    worst = max(gaps.values())
    ok = worst <= 1e-12 and dt < 1.0
    record(2, ok, f"worst relative L1 gap {worst:.2e} over {len(gaps)} actions x 100 f (tol 1e-12), "
                  f"{dt:.2f}s (limit 1s)")
    assert ok


CLASS_TRUTH = [
    ("cyclic_positive", {}, "positive"),
    ("zshift_null_moving", {}, "null"),
    ("markov", {"chains": "null"}, "null"),
    ("markov", {"chains": "positive"}, "positive"),
    ("identity_nonergodic", {}, "positive"),
]


def test_c03_classification_ground_truth(record):
    t0 = time.perf_counter()
    got, rerun_same = {}, True
    for name, params, _ in CLASS_TRUTH:
        fam, _ = make_example(name, **params)
        rep = classify(fam, N=64)
        got[label(name, params)] = rep.global_verdict
        if name == "markov" and params["chains"] == "null":
            quartic = all(r["best_sequence"].startswith("n^4") for r in rep.rows())
            rerun_same = rerun_same and classify(fam, N=64).rows() == rep.rows()
    dt = time.perf_counter() - t0
    wrong = {label(n, p): (got[label(n, p)], e) for n, p, e in CLASS_TRUTH if got[label(n, p)] != e}
    ok = not wrong and quartic and rerun_same and dt < 10.0
    record(3, ok, f"mismatches {wrong or 'none'}, null chain via n^4: {quartic}, deterministic: {rerun_same}, "
                  f"{dt:.2f}s (limit 10s)")
    assert ok


def test_c04_weakly_wandering_crosscheck(record):
    t0 = time.perf_counter()
    bad = []
    for name, params in ZOO:
        fam, truth = make_example(name, **params)
        if truth.cls not in ("null", "positive"):
            continue
        found = find_weakly_wandering(fam.system()) is not None
        if found != (truth.cls == "null"):
            bad.append(label(name, params))
    dt = time.perf_counter() - t0
    ok = not bad and dt < 5.0
    record(4, ok, f"disagreements {bad or 'none'}, {dt:.2f}s (limit 5s)")
    assert ok


# ---------------------------------------------------------------------------
# 5-7: marginal laws


@pytest.mark.parametrize("alpha", [0.8, 1.0, 1.7])
def test_c05_max_stable_marginals(record, alpha):
    t0 = time.perf_counter()
    fam, _ = make_example("zshift_null_moving", alpha=alpha, kind=MAX_STABLE)
    s = simulate_max_stable(fam, Window(1, 1), 20000, seed=5, mode="adaptive")
    ks = ks_frechet(s.column((0,)), fam.base_scale, alpha)
    dt = time.perf_counter() - t0
    ok = ks < 0.015 and dt < 30.0
    record(5, ok, f"alpha={alpha}: KS {ks:.4f} (limit 0.015), {dt:.2f}s (limit 30s)")
    assert ok


@pytest.mark.parametrize("alpha", [0.8, 1.5])
def test_c06_sum_stable_marginals(record, alpha):
    t0 = time.perf_counter()
    fam, _ = make_example("zshift_null_moving", alpha=alpha, kind=SUM_STABLE)
    s = simulate_sum_stable(fam, Window(1, 1), 20000, seed=6, M=2000)
    x = s.column((0,))
    sa = fam.base_scale
    err = max(abs(ecf(x, th) - np.exp(-abs(th) ** alpha * sa)) for th in (0.5, 1.0, 2.0))
    dt = time.perf_counter() - t0
    ok = err < 0.02 and dt < 60.0
    record(6, ok, f"alpha={alpha}: max ecf error {err:.4f} (limit 0.02), {dt:.2f}s (limit 60s)")
    assert ok


def test_c07_stability_closure(record):
    t0 = time.perf_counter()
    worst_ks, worst_cf = 0.0, 0.0
    for alpha in (0.8, 1.5):
        fam, _ = make_example("zshift_null_moving", alpha=alpha, kind=MAX_STABLE)
        y1 = simulate_max_stable(fam, Window(1, 1), 20000, seed=1).column((0,))
        y2 = simulate_max_stable(fam, Window(1, 1), 20000, seed=2).column((0,))
        worst_ks = max(worst_ks, ks_frechet(np.maximum(y1, y2) / 2 ** (1 / alpha), fam.base_scale, alpha))
        fam, _ = make_example("zshift_null_moving", alpha=alpha, kind=SUM_STABLE)
        x1 = simulate_sum_stable(fam, Window(1, 1), 20000, seed=1).column((0,))
        x2 = simulate_sum_stable(fam, Window(1, 1), 20000, seed=2).column((0,))
        z = (x1 + x2) / 2 ** (1 / alpha)
        worst_cf = max(worst_cf, max(abs(ecf(z, th) - np.exp(-th ** alpha * fam.base_scale))
                                     for th in (0.5, 1.0, 2.0)))
    dt = time.perf_counter() - t0
    ok = worst_ks < 0.02 and worst_cf < 0.02 and dt < 60.0
    record(7, ok, f"max closure KS {worst_ks:.4f}, sum closure ecf gap {worst_cf:.4f} (limits 0.02), "
                  f"{dt:.2f}s (limit 60s)")
    assert ok


# ---------------------------------------------------------------------------
# 8-10: analytic diagnostics


def test_c08_birkhoff_exactness(record):
    t0 = time.perf_counter()
    act = product_cyclic_action((3, 4))
    H = np.random.default_rng(8).normal(size=12)
    win = Window(40, 2)
    orbit = np.array([act.maps(tuple(t))[0][0] for t in win.indices.tolist()])
    h = H[orbit]
    T_list = list(range(1, 41))
    s = dg.ergodic_average(h, T_list, d=2)
    dev = np.abs(s.values - H.mean())
    T = np.array(T_list)
    exact = (2 * T) % 12 == 0
    sup = np.abs(H).max()
    worst_exact = float(dev[exact].max())
    within = bool(np.all(dev[~exact] <= 4 * sup / T[~exact]))
    dt = time.perf_counter() - t0
    ok = worst_exact <= 1e-12 and within and dt < 1.0
    record(8, ok, f"exact-period deviation {worst_exact:.1e} (tol 1e-12), 4 sup|h|/T bound held: {within}, "
                  f"{dt:.2f}s (limit 1s)")
    assert ok


def test_c09_criterion_concordance(record):
    t0 = time.perf_counter()
    bad, runs = [], 0
    for name, params in ZOO:
        for kind in (MAX_STABLE, SUM_STABLE):
            fam, _ = make_example(name, kind=kind, **params)
            cls = classify(fam).global_verdict
            if kind == MAX_STABLE:
                v, _ = dg.max_ergodicity_battery(fam)
            else:
                v = dg.gross_weak_mixing(fam).verdict
            runs += 1
            if (v == dg.VANISHES) != (cls == "null") or v == dg.INCONCLUSIVE:
                bad.append(f"{label(name, params)}/{kind}: {cls} vs {v}")
    dt = time.perf_counter() - t0
    ok = not bad and dt < 30.0
    record(9, ok, f"{runs} family/kind runs, disagreements {bad or 'none'}, {dt:.2f}s (limit 30s)")
    assert ok


def test_c10_markov_headline(record):
    t0 = time.perf_counter()
    fam, _ = make_example("markov", chains="null,positive")
    mix = dg.max_mixing(fam, [ray((1, 0), 1), ray((0, 1), 1)], N=4096)
    e1 = mix["n^1*(1,0)"].final
    e2 = mix["n^1*(0,1)"].final
    c = two_state_lazy()
    limit = LazyWalk(200).pi0 * c.pi0 * np.linalg.matrix_power(c.P, 4096)[0, 0]
    cls = classify(fam).global_verdict
    dt = time.perf_counter() - t0
    ok = e1 < 0.005 and abs(e2 - limit) <= 1e-6 and limit > 0.05 and cls == "null" and dt < 60.0
    record(10, ok, f"e1 final {e1:.6f} (< 0.005), e2 final {e2:.8f} vs matrix-power limit {limit:.8f} "
                   f"(tol 1e-6), classification {cls}, {dt:.2f}s (limit 60s)")
    assert ok


# ---------------------------------------------------------------------------
# 11-13: empirical criteria and reproducibility


def test_c11_association(record):
    t0 = time.perf_counter()
    worst_z, n_cells = np.inf, 0
    for name, params in [("cyclic_positive", {}), ("zshift_null_moving", {}), ("product_split", {}),
                         ("markov", {"chains": "positive"})]:
        fam, _ = make_example(name, **params)
        s = simulate_max_stable(fam, Window(1, 1), 20000, seed=11)
        for x, y, cov, se in dg.association_grid(s, (0,), (1,)):
            worst_z = min(worst_z, cov / se if se > 0 else 0.0)
            n_cells += 1
    fam, _ = make_example("identity_nonergodic")
    s = simulate_max_stable(fam, Window(1, 1), 20000, seed=12)
    worst_cf = 0.0
    for x, y, cov, se in dg.association_grid(s, (0,), (1,)):
        exact = frechet_cdf(min(x, y), 1.0, 1.0) - frechet_cdf(x, 1.0, 1.0) * frechet_cdf(y, 1.0, 1.0)
        worst_cf = max(worst_cf, abs(cov - exact) / se)
    dt = time.perf_counter() - t0
    ok = worst_z >= -3 and worst_cf <= 3 and dt < 60.0
    record(11, ok, f"min cov/SE {worst_z:.2f} over {n_cells} cells (>= -3), closed-form gap "
                   f"{worst_cf:.2f} SE (<= 3), {dt:.2f}s (limit 60s)")
    assert ok


MAX_FAMILIES = [
    ("cyclic_positive", {}, 64),
    ("zshift_null_moving", {}, 64),
    ("identity_nonergodic", {}, 64),
    ("product_split", {}, 64),
    ("markov", {"chains": "null"}, 16),
    ("markov", {"chains": "positive"}, 64),
    ("markov", {"chains": "null,positive"}, 8),
]


def test_c12_cesaro_agreement(record):
    t0 = time.perf_counter()
    verdicts, bad = {}, []
    for name, params, T in MAX_FAMILIES:
        fam, _ = make_example(name, **params)
        s = simulate_max_stable(fam, Window(T, fam.d), 2000, seed=12)
        erg = dg.empirical_cesaro(s, mode="ergodic").verdict
        wm = dg.empirical_cesaro(s, mode="weak_mixing").verdict
        verdicts[label(name, params)] = erg
        if erg != wm:
            bad.append(f"{label(name, params)}: {erg} vs {wm}")
    dt = time.perf_counter() - t0
    ok = not bad and dt < 120.0
    record(12, ok, f"{len(verdicts)} families, disagreements {bad or 'none'}, {dt:.2f}s (limit 120s)")
    assert ok


CLI_CFG = """
family: {{example: {example}}}
alpha: 1.2
kind: {kind}
seed: 13
output_dir: {out}
simulate: {{T: 4, n_paths: 300}}
diagnose: {{n_paths: 600, sample_T: 8}}
"""


def _cli_run(tmp: Path, tag: str, workers: int) -> dict[str, bytes]:
    out = tmp / tag
    tables = {}
    for example, kind in (("zshift_null_moving", MAX_STABLE), ("cyclic_positive", SUM_STABLE)):
        d = out / f"{example}_{kind}"
        cfg = tmp / f"{tag}_{example}_{kind}.yaml"
        cfg.write_text(CLI_CFG.format(example=example, kind=kind, out=d))
        env = {**os.environ, "STABLEFIELD_WORKERS": str(workers)}
        for cmd in ("classify", "simulate", "diagnose"):
            subprocess.run([sys.executable, "-m", "stablefield.cli", cmd, str(cfg)], check=True, env=env,
                           cwd=tmp, capture_output=True)
        tables |= {str(p.relative_to(out)): p.read_bytes() for p in sorted(d.rglob("*.csv"))}
    return tables


def test_c13_reproducibility(record, tmp_path):
    t0 = time.perf_counter()
    a = _cli_run(tmp_path, "first", 1)
    b = _cli_run(tmp_path, "second", 1)
    c = _cli_run(tmp_path, "eight", 8)
    same_repeat = a == b
    same_workers = a == c
    dt = time.perf_counter() - t0
    ok = bool(a) and same_repeat and same_workers and dt < 60.0
    record(13, ok, f"{len(a)} tables, repeat identical: {same_repeat}, workers 1 vs 8 identical: {same_workers}, "
                   f"{dt:.2f}s (limit 60s)")
    assert ok
