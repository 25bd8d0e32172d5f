"""Ergodic averages plus ergodicity, weak-mixing, mixing and association diagnostics.

Analytic diagnostics integrate against a spectral family; empirical ones
read a :class:`~stablefield.simulate.FieldSample`.  Every diagnostic returns
a :class:`DiagnosticSeries` over a horizon ladder with a verdict in
{vanishes, persists, inconclusive}.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .classification import CandidateSequence
from .lattice import Index, Window, add, as_index, zero
from .spectral import MAX_STABLE, BaseFamily, Combination

__all__ = [
    "VANISHES",
    "PERSISTS",
    "INCONCLUSIVE",
    "DiagnosticSeries",
    "verdict",
    "default_horizons",
    "ergodic_average",
    "kvn_filter",
    "gross_weak_mixing",
    "max_ergodicity",
    "max_ergodicity_battery",
    "default_combinations",
    "combine_verdicts",
    "max_mixing",
    "association_check",
    "association_grid",
    "RectangleEvent",
    "empirical_cesaro",
]

VANISHES, PERSISTS, INCONCLUSIVE = "vanishes", "persists", "inconclusive"
ANALYTIC_TOL = 0.005


def verdict(values: Sequence[float], tol: float, flat_rel: float = 0.2, persist_factor: float = 5.0) -> str:
    """Finite-horizon limit call from the tail of a series.

    vanishes: last value < tol and non-increasing over the last three points.
    persists: last value > persist_factor * tol and the last three points
    within flat_rel of the last value.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return INCONCLUSIVE
    tail = v[-3:]
    if tail[-1] < tol and np.all(np.diff(tail) <= 1e-15):
        return VANISHES
    if tail[-1] > persist_factor * tol and (tail.max() - tail.min()) <= flat_rel * tail[-1]:
        return PERSISTS
    return INCONCLUSIVE


@dataclass
class DiagnosticSeries:
    name: str
    horizons: np.ndarray
    values: np.ndarray
    vanish_tol: float
    se: np.ndarray | None = None
    limit: float | None = None
    extra: dict = field(default_factory=dict)
    persist_factor: float = 5.0

    def __post_init__(self):
        self.horizons = np.asarray(self.horizons)
        self.values = np.asarray(self.values, dtype=float)
        if self.horizons.shape != self.values.shape:
            raise ValueError("horizons and values differ in length")
        if self.horizons.size and np.any(np.diff(self.horizons) <= 0):
            raise ValueError("horizons must be strictly increasing")
        if self.se is not None:
            self.se = np.asarray(self.se, dtype=float)

    @property
    def verdict(self) -> str:
        return verdict(self.values, self.vanish_tol, persist_factor=self.persist_factor)

    @property
    def limit_estimate(self) -> float:
        """Oracle limit when attached, otherwise the last value."""
        if self.limit is not None:
            return float(self.limit)
        return float(self.values[-1]) if self.values.size else float("nan")

    @property
    def final(self) -> float:
        return float(self.values[-1])

    def rows(self) -> list[dict]:
        out = []
        for i, (T, v) in enumerate(zip(self.horizons.tolist(), self.values.tolist())):
            row = {"T": T, "value": v}
            if self.se is not None:
                row["se"] = float(self.se[i])
            out.append(row)
        return out

    def record(self) -> dict:
        rec = {"name": self.name, "verdict": self.verdict, "vanish_tol": self.vanish_tol,
               "limit_estimate": self.limit_estimate, "final": self.final if self.values.size else None}
        rec.update({k: v for k, v in self.extra.items() if isinstance(v, (int, float, str, bool, type(None)))})
        return rec

    def to_csv(self, path) -> None:
        """Tabular series plus a JSON verdict record next to it."""
        path = Path(path)
        fields = ["T", "value"] + (["se"] if self.se is not None else [])
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            for row in self.rows():
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        path.with_suffix(path.suffix + ".verdict.json").write_text(
            json.dumps(self.record(), indent=2, sort_keys=True) + "\n")


def combine_verdicts(verdicts: Sequence[str]) -> str:
    """Vanishing needs every test to vanish; one persisting test is enough to persist."""
    verdicts = list(verdicts)
    if verdicts and all(v == VANISHES for v in verdicts):
        return VANISHES
    if any(v == PERSISTS for v in verdicts):
        return PERSISTS
    return INCONCLUSIVE


def default_horizons(family_or_d) -> list[int]:
    if hasattr(family_or_d, "default_horizons"):
        return list(family_or_d.default_horizons)
    d = family_or_d if isinstance(family_or_d, int) else family_or_d.d
    if d == 1:
        return [4, 8, 16, 32, 64, 128, 256]
    if d == 2:
        return [4, 8, 16, 32, 64]
    return [2, 4, 8]


# ---------------------------------------------------------------------------
# averages


def _lattice_values(h, win: Window) -> np.ndarray:
    idx = win.indices
    if isinstance(h, np.ndarray):
        if h.shape != (win.size,):
            raise ValueError(f"array h must hold one value per index of B({win.T}) in window order")
        return h.astype(float)
    if isinstance(h, Mapping):
        missing = [tuple(r) for r in idx.tolist() if tuple(r) not in h]
        if missing:
            raise KeyError(f"h is missing {len(missing)} lattice values, e.g. {missing[0]}")
        return np.array([h[tuple(r)] for r in idx.tolist()], dtype=float)
    if callable(h):
        return np.array([h(tuple(r)) for r in idx.tolist()], dtype=float)
    raise TypeError("h must be an array, a mapping or a callable on lattice indices")


def _box_means(vals: np.ndarray, win: Window, T_list: Sequence[int]) -> np.ndarray:
    out = []
    for T in T_list:
        mask = np.all((win.indices > -T) & (win.indices <= T), axis=1)
        out.append(vals[mask].mean())
    return np.array(out)


def _check_ladder(T_list) -> list[int]:
    T_list = [int(T) for T in T_list]
    if not T_list or any(T < 1 for T in T_list):
        raise ValueError("horizons must be positive integers")
    if any(b <= a for a, b in zip(T_list, T_list[1:])):
        raise ValueError("horizons must be strictly increasing")
    return T_list


def ergodic_average(h, T_list: Sequence[int], d: int = 1, tol: float = ANALYTIC_TOL) -> DiagnosticSeries:
    """A_T h = C(T)^-1 sum_{t in B(T)} h(t) for each T.

    ``h`` is a callable on index tuples, a mapping, or an array over
    ``Window(max T, d)`` in window order.
    """
    T_list = _check_ladder(T_list)
    win = Window(max(T_list), d)
    vals = _lattice_values(h, win)
    return DiagnosticSeries("ergodic_average", np.array(T_list), _box_means(vals, win, T_list), tol)


def kvn_filter(h, T: int, d: int = 1, tail_fraction: float = 0.5, eps: float | None = None,
               M: float | None = None, tol: float = ANALYTIC_TOL) -> tuple[bool, DiagnosticSeries]:
    """Whether A_T h -> 0 for a bounded nonnegative h, with the exceptional set {h > eps}.

    Averages are taken on the dyadic ladder up to T; the verdict uses the
    last ``tail_fraction`` of the ladder.  The density of {t : h(t) > eps}
    in each box is returned in ``extra["exceptional_density"]``.
    """
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    T = int(T)
    ladder = sorted({int(2 ** k) for k in range(int(np.log2(T)) + 1)} | {T})
    ladder = [t for t in ladder if t >= 1]
    win = Window(T, d)
    vals = _lattice_values(h, win)
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ValueError("h must be finite and nonnegative")
    if M is not None and np.any(vals > M):
        raise ValueError(f"h exceeds its declared bound M={M}")
    bound = float(vals.max()) if M is None else float(M)
    eps = 1e-3 * max(bound, 1e-300) if eps is None else float(eps)
    means = _box_means(vals, win, ladder)
    dens = _box_means((vals > eps).astype(float), win, ladder)
    k = max(3, int(np.ceil(tail_fraction * len(ladder))))
    series = DiagnosticSeries("kvn_filter", np.array(ladder), means, tol,
                              extra={"exceptional_density": dens, "eps": eps})
    return verdict(means[-k:], tol) == VANISHES, series


# ---------------------------------------------------------------------------
# analytic criteria


def _scale_norm(family: BaseFamily, fn, indices) -> float:
    return float(family.integrate(fn, indices))


def gross_weak_mixing(family: BaseFamily, K=(0.5, 2.0), eps: float = 0.5, T_list=None,
                      sequences: Sequence[CandidateSequence] | None = None, N: int = 64,
                      tol: float = ANALYTIC_TOL) -> DiagnosticSeries:
    """Cesaro averages of mu{|f_0|^alpha in K, |f_t|^alpha > eps} / mu{|f_0|^alpha in K}.

    With ``sequences`` the raw (non-averaged) values along each sequence are
    added under ``extra["mixing"]``.
    """
    k_lo, k_hi = (float(K[0]), float(K[1]))
    if not (0 < k_lo <= k_hi < np.inf):
        raise ValueError("K must be a compact interval [k_lo, k_hi] with 0 < k_lo <= k_hi < inf")
    if eps <= 0:
        raise ValueError("eps must be positive")
    T_list = _check_ladder(T_list or default_horizons(family))
    a = family.alpha

    def inK(F):
        p = np.abs(F) ** a
        return (p >= k_lo) & (p <= k_hi)

    fn = lambda F: (inK(F[1]) & (np.abs(F[0]) ** a > eps)).astype(float)  # noqa: E731
    z = zero(family.d)
    base = _scale_norm(family, lambda F: inK(F[0]).astype(float), [z])
    if base <= 0:
        raise ValueError("mu{|f_0|^alpha in K} = 0; choose K to meet the values of |f_0|^alpha")
    vals = family.shift_average(fn, [z], [z], T_list) / base
    series = DiagnosticSeries("gross_weak_mixing", np.array(T_list), vals, tol,
                              extra={"K": (k_lo, k_hi), "eps": eps, "normalizer": base})
    if sequences:
        series.extra["mixing"] = {
            s.label: DiagnosticSeries(f"gross_mixing[{s.label}]", np.arange(1, N + 1),
                                      family.shift_values(fn, [z], [z], s.terms(N)) / base, tol)
            for s in sequences}
    return series


def _max_fn(coefs: np.ndarray, k: int, alpha: float):
    def fn(F):
        a = np.max(coefs[:, None] * F[:k], axis=0)
        b = np.max(coefs[:, None] * F[k:], axis=0)
        return np.minimum(a, b) ** alpha
    return fn


def max_ergodicity(family: BaseFamily, g_combo: Combination | None = None, T_list=None,
                   tol: float = ANALYTIC_TOL) -> DiagnosticSeries:
    """C(T)^-1 sum_{t in B(T)} ||U_t g ^ g||_alpha^alpha / ||g||_alpha^alpha for g = max_j a_j f_{tau_j}."""
    if family.kind != MAX_STABLE:
        raise ValueError("max_ergodicity needs a max-stable family")
    T_list = _check_ladder(T_list or default_horizons(family))
    g_combo = g_combo or Combination.of((1.0, zero(family.d)))
    coefs = g_combo.coefs
    if np.any(coefs <= 0):
        raise ValueError("max-linear combinations need positive coefficients")
    taus = g_combo.indices
    a = family.alpha
    norm = _scale_norm(family, lambda F: np.max(coefs[:, None] * F, axis=0) ** a, taus)
    vals = family.shift_average(_max_fn(coefs, len(taus), a), taus, taus, T_list) / norm
    label = " v ".join(f"{c:g}*f{t}" for c, t in g_combo.terms)
    return DiagnosticSeries(f"max_ergodicity[{label}]", np.array(T_list), vals, tol, extra={"g_norm": norm})


def default_combinations(d: int, seed: int = 0, n_random: int = 3) -> list[Combination]:
    """Single-index combinations over B(1) plus seeded random two-index ones."""
    win = Window(1, d)
    combos = [Combination.of((1.0, tuple(t))) for t in win.indices.tolist()]
    rng = np.random.default_rng(seed)
    pool = Window(2, d).indices
    for _ in range(n_random):
        i, j = rng.choice(len(pool), 2, replace=False)
        c = rng.uniform(0.5, 2.0, 2)
        combos.append(Combination.of((float(c[0]), tuple(pool[i])), (float(c[1]), tuple(pool[j]))))
    return combos


def max_ergodicity_battery(family: BaseFamily, T_list=None, combos=None, seed: int = 0,
                           tol: float = ANALYTIC_TOL) -> tuple[str, list[DiagnosticSeries]]:
    """max_ergodicity over the default g set; combinations the family cannot integrate are skipped."""
    combos = combos or default_combinations(family.d, seed)
    out = []
    for c in combos:
        try:
            out.append(max_ergodicity(family, c, T_list, tol))
        except NotImplementedError:
            continue
    return combine_verdicts([s.verdict for s in out]), out


def max_mixing(family: BaseFamily, sequences: Sequence[CandidateSequence], N: int = 64,
               tol: float = ANALYTIC_TOL) -> dict[str, DiagnosticSeries]:
    """||f_{t_n} ^ f_0||_alpha^alpha for n = 1..N along each sequence."""
    if N < 8:
        raise ValueError("N must be >= 8")
    a = family.alpha
    z = zero(family.d)
    fn = lambda F: np.minimum(np.abs(F[0]), np.abs(F[1])) ** a  # noqa: E731
    out = {}
    for s in sequences:
        ts = s.terms(N)
        vals = family.shift_values(fn, [z], [z], ts)
        limit = None
        extra = {"last_term": str(ts[-1])}
        if hasattr(family, "overlap_oracle"):
            extra["oracle_at_last"] = float(family.overlap_oracle(ts[-1]))
        if hasattr(family, "mixing_limit") and len(set(np.sign(v) for v in s.term(1))) <= 2:
            v = s.term(1)
            if all(c >= 0 for c in v):
                limit = family.mixing_limit(v)
        out[s.label] = DiagnosticSeries(f"max_mixing[{s.label}]", np.arange(1, N + 1), vals, tol, limit=limit,
                                        extra=extra)
    return out


# ---------------------------------------------------------------------------
# empirical criteria


def _indicator_cov(IA: np.ndarray, IB: np.ndarray) -> tuple[float, float]:
    n = IA.size
    pa, pb = IA.mean(), IB.mean()
    if n < 2:
        return float(((IA - pa) * (IB - pb)).mean()), float("nan")
    prod = (IA - pa) * (IB - pb)
    # the product of the two mean errors is second order but dominates when the first-order term is degenerate
    var = prod.var(ddof=1) / n + pa * (1 - pa) * pb * (1 - pb) / n ** 2
    return float(prod.mean()), float(np.sqrt(var))


def association_check(sample, pairs) -> list[tuple[float, float]]:
    """Cov(1{Y_t <= x}, 1{Y_u <= y}) with plug-in standard errors.

    ``pairs`` holds tuples ``(t, u, x, y)``.
    """
    out = []
    for t, u, x, y in pairs:
        a = sample.column(as_index(t, sample.window.d))
        b = sample.column(as_index(u, sample.window.d))
        for col, thr, lab in ((a, x, "x"), (b, y, "y")):
            if thr < col.min() or thr >= col.max():
                warnings.warn(f"threshold {lab}={thr} lies outside the sampled range; indicator is degenerate",
                              UserWarning, stacklevel=2)
        out.append(_indicator_cov((a <= x).astype(float), (b <= y).astype(float)))
    return out


def association_grid(sample, t, u, quantiles=(0.1, 0.3, 0.5, 0.7, 0.9)) -> list[tuple[float, float, float, float]]:
    """Covariances over a threshold grid at marginal quantiles: rows (x, y, cov, se)."""
    xs = np.quantile(sample.column(as_index(t, sample.window.d)), quantiles)
    ys = np.quantile(sample.column(as_index(u, sample.window.d)), quantiles)
    pairs = [(t, u, float(x), float(y)) for x in xs for y in ys]
    res = association_check(sample, pairs)
    return [(p[2], p[3], c, s) for p, (c, s) in zip(pairs, res)]


@dataclass(frozen=True)
class RectangleEvent:
    """{X_tau <= x_tau for every (tau, x_tau)}; an empty event is the full space."""

    conditions: tuple[tuple[Index, float], ...] = ()

    @classmethod
    def of(cls, *conds) -> "RectangleEvent":
        return cls(tuple((as_index(t), float(x)) for t, x in conds))

    def indicator(self, sample, shift=None) -> np.ndarray:
        win = sample.window
        out = np.ones(sample.n_paths, dtype=bool)
        for tau, x in self.conditions:
            p = as_index(tau, win.d) if shift is None else add(tau, shift)
            out &= sample.column(p) <= x
        return out.astype(float)

    def offsets(self) -> list[Index]:
        return [t for t, _ in self.conditions]


def empirical_cesaro(sample, A: RectangleEvent | None = None, B: RectangleEvent | None = None, T_list=None,
                     mode: str = "ergodic", se_factor: float = 3.0) -> DiagnosticSeries:
    """Monte Carlo Cesaro averages of P(A n theta_t B) - P(A) P(theta_t B).

    mode="ergodic" averages the signed differences and reports the absolute
    value; mode="weak_mixing" averages their absolute values.  The vanishing
    tolerance is se_factor times the mean per-term standard error; a series
    persists once it exceeds twice that tolerance.
    Default events are A = B = {X_0 <= median of X_0}.
    """
    if mode not in ("ergodic", "weak_mixing"):
        raise ValueError("mode must be 'ergodic' or 'weak_mixing'")
    win = sample.window
    d = win.d
    if A is None or B is None:
        med = float(np.median(sample.column(zero(d))))
        A = A or RectangleEvent.of((zero(d), med))
        B = B or RectangleEvent.of((zero(d), med))
    if T_list is None:
        T_list = [T for T in default_horizons(d) if T <= win.T]
    T_list = _check_ladder(T_list)
    Tmax = max(T_list)
    box = Window(Tmax, d)
    lo, hi = -win.T + 1, win.T
    for off in B.offsets():
        if any(o + (-Tmax + 1) < lo or o + Tmax > hi for o in off):
            raise ValueError(f"event B shifted over B({Tmax}) leaves the sampled window B({win.T})")
    for off in A.offsets():
        if any(o < lo or o > hi for o in off):
            raise ValueError("event A lies outside the sampled window")
    IA = A.indicator(sample)
    n = IA.size
    pa = IA.mean()
    shifts = [tuple(r) for r in box.indices.tolist()]
    IB = np.stack([B.indicator(sample, t) for t in shifts], axis=1) if B.conditions else np.ones((n, len(shifts)))
    pb = IB.mean(axis=0)
    diff = (IA @ IB) / n - pa * pb
    cen = (IA - pa)[:, None] * (IB - pb[None, :])
    se_term = cen.std(axis=0, ddof=1) / np.sqrt(n)
    values, ses = [], []
    for T in T_list:
        mask = np.all((box.indices > -T) & (box.indices <= T), axis=1)
        values.append(abs(diff[mask].mean()) if mode == "ergodic" else np.abs(diff[mask]).mean())
        ses.append(se_term[mask].mean())
    tol = se_factor * float(np.mean(se_term))
    return DiagnosticSeries(f"empirical_cesaro[{mode}]", np.array(T_list), np.array(values), max(tol, 1e-12),
                            se=np.array(ses), extra={"n_paths": n, "p_A": float(pa)}, persist_factor=2.0)
