"""Positive/null classification by series of duals and weakly wandering sets.

For a test function g > 0 the partial sums

    S_N(s) = sum_{n <= N} (hat-phi_{-t_n} g)(s)

diverge on the positive part for every sequence t_n -> infinity and
converge on the null part for some sequence.  Finite horizons only give
evidence, so each state gets a verdict from tail diagnostics of S_N along a
family of candidate sequences.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .lattice import Index, as_index, shell, sup_norm, unit, zero
from .measure_space import FiniteAction
from .spectral import BaseFamily, SupportWarning

__all__ = [
    "CandidateSequence",
    "SequenceEvidence",
    "StateEvidence",
    "ClassificationReport",
    "SupportDeficiency",
    "build_test_function",
    "default_test_function",
    "default_sequences",
    "ray",
    "series_test",
    "classify",
    "find_weakly_wandering",
]

POSITIVE, NULL, INCONCLUSIVE, MIXED = "positive", "null", "inconclusive", "mixed"


class SupportDeficiency(ValueError):
    pass


@dataclass(frozen=True)
class CandidateSequence:
    """Index sequence t_1, t_2, ... given by ``term(n)``; ``greedy`` sequences are built on the fly."""

    label: str
    term: Callable[[int], Index] | None = None
    greedy: bool = False

    def terms(self, N: int) -> list[Index]:
        if self.greedy:
            raise ValueError("greedy sequences depend on the system; see series_test")
        return [self.term(n) for n in range(1, N + 1)]


def ray(v: Sequence[int], p: int) -> CandidateSequence:
    v = tuple(int(x) for x in v)
    label = f"n^{p}*({','.join(map(str, v))})"
    return CandidateSequence(label, lambda n, v=v, p=p: tuple(c * n ** p for c in v))


def default_sequences(d: int, powers: Sequence[int] = (1, 4)) -> list[CandidateSequence]:
    """Rays n^p v for v in {+-e_i, +-(1,...,1)} and each power, plus one greedy sequence."""
    powers = [int(p) for p in powers]
    if not powers or any(p < 1 for p in powers):
        raise ValueError("powers must be a nonempty list of integers >= 1")
    dirs: list[Index] = []
    for i in range(d):
        dirs += [unit(d, i, 1), unit(d, i, -1)]
    for v in ((1,) * d, (-1,) * d):
        if v not in dirs:
            dirs.append(v)
    seqs = [ray(v, p) for p in powers for v in dirs]
    seqs.append(CandidateSequence("greedy", greedy=True))
    return seqs


def build_test_function(family: BaseFamily, T0, a=None):
    """g = sum_{tau in T0} a_tau |f_tau|^alpha; warns about states where g = 0."""
    T0 = [as_index(t, family.d) for t in T0]
    if not T0:
        raise ValueError("T0 is empty")
    if a is not None:
        if isinstance(a, dict):
            a = [a[t] for t in T0]
        a = np.asarray(a, dtype=float)
        if np.any(a <= 0):
            raise ValueError("all weights a_tau must be positive")
    g = family.test_function(T0, a)
    coarse = _coarse_values(family.system(), g)
    bad = [family.system().space.states[k] for k in np.flatnonzero(coarse <= 0)]
    if bad:
        warnings.warn(f"test function vanishes on {len(bad)} states, e.g. {bad[:5]}", SupportWarning, stacklevel=2)
    return g


def default_test_function(family: BaseFamily, max_radius: int | None = None):
    """Smallest box T0 = B(r) (r doubling) whose default-weight g has full support."""
    if hasattr(family, "default_T0"):
        return family.test_function(family.default_T0())
    system = family.system()
    if max_radius is None:
        max_radius = {1: 1024, 2: 64}.get(family.d, 8)
    r = 1
    while True:
        T0 = [tuple(int(v) for v in p) for p in np.ndindex(*([2 * r + 1] * family.d))]
        T0 = [tuple(v - r for v in p) for p in T0]
        g = family.test_function(T0)
        if np.all(_coarse_values(system, g) > 0) or r >= max_radius:
            return g
        r *= 2


def _coarse_values(system, g) -> np.ndarray:
    if isinstance(g, np.ndarray):
        return g
    return system.dual(g, zero(system.d))[0]


@dataclass
class SequenceEvidence:
    label: str
    terms: list[Index]
    partial_sums: np.ndarray
    escapes: int
    usable: bool
    label_kind: str  # converges | diverges | undecided | unusable
    decay_exponent: float = float("nan")


@dataclass
class StateEvidence:
    verdict: str
    evidence: dict[str, SequenceEvidence]
    boundary: bool = False

    @property
    def escape_count(self) -> int:
        return sum(e.escapes for e in self.evidence.values())

    @property
    def best_sequence(self) -> str:
        conv = [e for e in self.evidence.values() if e.label_kind == "converges"]
        pool = conv or [e for e in self.evidence.values() if e.usable] or list(self.evidence.values())
        return min(pool, key=lambda e: e.partial_sums[-1]).label

    @property
    def final_sum(self) -> float:
        return float(self.evidence[self.best_sequence].partial_sums[-1])


@dataclass
class ClassificationReport:
    per_state: dict
    global_verdict: str
    positive_part: set
    null_part: set
    boundary_states: set = field(default_factory=set)
    parts_invariant: bool = True
    params: dict = field(default_factory=dict)

    @property
    def inconclusive_states(self) -> set:
        return {s for s, ev in self.per_state.items() if ev.verdict == INCONCLUSIVE}

    def rows(self) -> list[dict]:
        return [
            dict(state=s, verdict=ev.verdict, best_sequence=ev.best_sequence, final_sum=ev.final_sum,
                 escape_count=ev.escape_count, boundary=ev.boundary)
            for s, ev in self.per_state.items()
        ]

    def summary(self) -> dict:
        counts = {v: 0 for v in (POSITIVE, NULL, INCONCLUSIVE)}
        for ev in self.per_state.values():
            counts[ev.verdict] += 1
        return dict(global_verdict=self.global_verdict, counts=counts, boundary=len(self.boundary_states),
                    parts_invariant=self.parts_invariant, **self.params)


def _decay_exponent(n: np.ndarray, terms: np.ndarray) -> float:
    pos = terms > 0
    if pos.sum() < 8:
        return float("nan")
    x, y = np.log(n[pos]), np.log(terms[pos])
    slope = np.polyfit(x, y, 1)[0]
    return float(-slope)


def _label_sequence(terms: np.ndarray, gs: float, N: int, div_threshold: float, conv_tail_tol: float,
                    decay_cut: float) -> tuple[str, float]:
    q = math.ceil(N / 4)
    S = terms.sum()
    n = np.arange(1, N + 1, dtype=float)
    half = N // 2
    beta = _decay_exponent(n[half:], terms[half:])
    tail = terms[-q:]
    if np.all(tail < conv_tail_tol * gs) or np.all(terms[half:] == 0):
        return "converges", beta
    if np.isfinite(beta) and beta >= decay_cut:
        return "converges", beta
    first = terms[:q].sum()
    if S > div_threshold * gs or (first > 0 and tail.sum() >= 0.25 * first):
        return "diverges", beta
    return "undecided", beta


def _greedy_terms(system, g, N: int, escape_limit: float):
    chosen, vals_all, esc_all = [], [], []
    for n in range(1, N + 1):
        best = None
        for t in shell(system.d, n):
            vals, esc = system.dual(g, t)
            key = (int(esc.sum()), float(vals.mean()))
            if best is None or key < best[0]:
                best = (key, t, vals, esc)
        chosen.append(best[1])
        vals_all.append(best[2])
        esc_all.append(best[3])
    return chosen, np.array(vals_all), np.array(esc_all)


def series_test(action, space, g, sequences: Sequence[CandidateSequence], N: int = 64,
                div_threshold: float = 1e3, conv_tail_tol: float = 1e-8, escape_limit: float = 0.1,
                decay_cut: float = 1.5, boundary_policy: str = "exclude") -> ClassificationReport:
    """Classify every state as positive, null or inconclusive.

    ``action`` is a :class:`FiniteAction` (then ``g`` is an array over the
    states) or any system exposing ``space``, ``d`` and ``dual(g, t)``.
    ``boundary_policy`` decides whether inconclusive states that lost a
    sequence to truncation escapes are left out of the global verdict
    (``"exclude"``) or counted (``"include"``).
    """
    if N < 8:
        raise ValueError("horizon N must be >= 8")
    if not sequences:
        raise ValueError("sequence list is empty")
    if boundary_policy not in ("exclude", "include"):
        raise ValueError("boundary_policy must be 'exclude' or 'include'")
    space = space or action.space
    gs = _coarse_values(action, g)
    if gs.shape != (space.n,):
        raise ValueError("g must have one value per state")
    if np.any(gs <= 0):
        bad = [space.states[k] for k in np.flatnonzero(gs <= 0)]
        raise SupportDeficiency(f"support deficiency: g vanishes on {len(bad)} states, e.g. {bad[:5]}")

    per_seq = []
    for seq in sequences:
        if seq.greedy:
            ts, vals, esc = _greedy_terms(action, g, N, escape_limit)
        else:
            ts = seq.terms(N)
            pairs = [action.dual(g, t) for t in ts]
            vals = np.array([p[0] for p in pairs])
            esc = np.array([p[1] for p in pairs])
        per_seq.append((seq.label, ts, vals, esc))

    per_state = {}
    boundary = set()
    limit = escape_limit * N
    for k, s in enumerate(space.states):
        evidence = {}
        for label, ts, vals, esc in per_seq:
            terms = vals[:, k]
            n_esc = int(esc[:, k].sum())
            usable = n_esc <= limit
            if usable:
                kind, beta = _label_sequence(terms, gs[k], N, div_threshold, conv_tail_tol, decay_cut)
            else:
                kind, beta = "unusable", float("nan")
            evidence[label] = SequenceEvidence(label, ts, np.cumsum(terms), n_esc, usable, kind, beta)
        kinds = [e.label_kind for e in evidence.values()]
        if "converges" in kinds:
            verdict = NULL
        elif all(x == "diverges" for x in kinds):
            verdict = POSITIVE
        else:
            verdict = INCONCLUSIVE
        is_boundary = verdict == INCONCLUSIVE and "unusable" in kinds
        if is_boundary:
            boundary.add(s)
        per_state[s] = StateEvidence(verdict, evidence, is_boundary)

    counted = [ev.verdict for s, ev in per_state.items() if not (boundary_policy == "exclude" and s in boundary)]
    has_pos, has_null = POSITIVE in counted, NULL in counted
    if counted and all(v == POSITIVE for v in counted):
        glob = POSITIVE
    elif counted and all(v == NULL for v in counted):
        glob = NULL
    elif has_pos and has_null:
        glob = MIXED
    else:
        glob = INCONCLUSIVE
    pos = {s for s, ev in per_state.items() if ev.verdict == POSITIVE}
    nul = {s for s, ev in per_state.items() if ev.verdict == NULL}
    ignore = np.array([ev.verdict == INCONCLUSIVE for ev in per_state.values()])
    mask = np.array([s in pos for s in space.states])
    if isinstance(action, FiniteAction):
        invariant = action.is_invariant(mask, ignore)[0]
    else:
        invariant = action.is_invariant(mask[~ignore] if ignore.any() else mask)[0]
    params = dict(N=N, div_threshold=div_threshold, conv_tail_tol=conv_tail_tol, escape_limit=escape_limit,
                  decay_cut=decay_cut, boundary_policy=boundary_policy,
                  sequences=[s.label for s in sequences])
    return ClassificationReport(per_state, glob, pos, nul, boundary, invariant, params)


def classify(family: BaseFamily, N: int | None = None, powers: Sequence[int] | None = None, g=None,
             **kw) -> ClassificationReport:
    """series_test on the family's system with default test function and sequences.

    ``N`` defaults to 64, or to the horizon a family realizes when it fixes one.
    """
    cap = getattr(family, "max_horizon", None)
    if N is None:
        N = 64 if cap is None else cap
    if cap is not None and N > cap:
        raise ValueError(f"{family.name} is realized up to horizon {cap}; rebuild it with N >= {N}")
    if powers is None:
        powers = getattr(family, "default_powers", (1, 4))
    system = family.system()
    g = default_test_function(family) if g is None else g
    return series_test(system, system.space, g, default_sequences(family.d, powers), N, **kw)


@dataclass
class WanderingResult:
    W: tuple
    sequence: list[Index]


def _candidate_indices(d: int, N: int, powers=(1, 2, 4), max_n: int | None = None) -> list[Index]:
    max_n = max_n or 8 * N
    seen, out = set(), []
    for seq in default_sequences(d, powers)[:-1]:
        for n in range(1, max_n + 1):
            t = seq.term(n)
            if t not in seen:
                seen.add(t)
                out.append(t)
    out.sort(key=lambda t: (sup_norm(t), t))
    return [zero(d)] + out


def find_weakly_wandering(action, space=None, N: int = 16, max_set_size: int = 4, tol: float | None = None,
                          candidates: Sequence[Index] | None = None) -> WanderingResult | None:
    """Greedy search for W and t_1, t_2, ... with pairwise (almost) disjoint preimages.

    On finite actions disjointness is exact (tol = 0).  Path-shift systems
    accept overlaps up to ``tol * mu(W)`` (default 1e-2).
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    cands = list(candidates) if candidates is not None else _candidate_indices(action.d, N)
    if hasattr(action, "find_weakly_wandering"):
        res = action.find_weakly_wandering(cands, N, 1e-2 if tol is None else tol)
        return None if res is None else WanderingResult(*res)
    tol = 0.0 if tol is None else tol
    space = space or action.space
    n = space.n
    weights = space.weights
    pre = {}
    for t in cands:
        idx, _, _ = action.maps(tuple(-v for v in t))
        pre[t] = idx  # phi_{-t}(s) for each s, so phi_t^{-1}(W) = idx[W]
    for size in range(1, max_set_size + 1):
        for k0 in range(n):
            W = [k0]
            nxt = k0
            for _ in range(size - 1):
                idx, _, _ = action.maps(unit(action.d, 0))
                nxt = int(idx[nxt])
                if nxt < 0 or nxt in W:
                    break
                W.append(nxt)
            if len(W) < size:
                continue
            W = np.array(W)
            muW = float(weights[W].sum())
            used = np.zeros(n, dtype=bool)
            covered = np.zeros(n)
            chosen = []
            for t in cands:
                img = pre[t][W]
                if np.any(img < 0):
                    continue
                overlap = float(weights[img][covered[img] > 0].sum())
                if overlap > tol * muW:
                    continue
                covered[img] += 1
                used[img] = True
                chosen.append(t)
                if len(chosen) >= N:
                    return WanderingResult(tuple(space.states[k] for k in W), chosen)
    return None
