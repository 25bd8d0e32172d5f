"""Spectral families f_t(s) = c_t(s) w(t,s)^{1/alpha} f_0(phi_t s) and their scales."""

from __future__ import annotations

import functools
import itertools
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .lattice import DimensionMismatch, Index, Window, add, as_index, zero
from .measure_space import FiniteAction, StateSpace, TruncationEscape

__all__ = [
    "SUM_STABLE",
    "MAX_STABLE",
    "Combination",
    "MaxLinearCombination",
    "BaseFamily",
    "SpectralFamily",
    "SupportWarning",
    "InvarianceViolation",
    "eval_spectral",
    "scale",
    "check_full_support",
    "split_family",
    "default_weights",
    "validate_alpha",
]

SUM_STABLE = "sum-stable"
MAX_STABLE = "max-stable"


class SupportWarning(UserWarning):
    pass


class InvarianceViolation(ValueError):
    pass


def validate_alpha(alpha: float, kind: str) -> float:
    alpha = float(alpha)
    if kind == SUM_STABLE:
        if not 0 < alpha < 2:
            raise ValueError(f"sum-stable families need 0 < alpha < 2, got {alpha}")
    elif kind == MAX_STABLE:
        if not alpha > 0:
            raise ValueError(f"max-stable families need alpha > 0, got {alpha}")
    else:
        raise ValueError(f"unknown kind {kind!r}; expected {SUM_STABLE!r} or {MAX_STABLE!r}")
    return alpha


@dataclass(frozen=True)
class Combination:
    """Finite combination sum_j b_j X_{tau_j} (or the max-linear analog)."""

    terms: tuple[tuple[float, Index], ...]

    def __post_init__(self):
        terms = tuple((float(c), as_index(t)) for c, t in self.terms)
        if not terms:
            raise ValueError("a combination needs at least one term")
        if len({len(t) for _, t in terms}) != 1:
            raise DimensionMismatch("combination indices differ in dimension")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def of(cls, *pairs) -> "Combination":
        return cls(tuple(pairs))

    @property
    def coefs(self) -> np.ndarray:
        return np.array([c for c, _ in self.terms])

    @property
    def indices(self) -> list[Index]:
        return [t for _, t in self.terms]

    def shifted(self, h) -> "Combination":
        h = as_index(h, len(self.terms[0][1]))
        return Combination(tuple((c, add(t, h)) for c, t in self.terms))


MaxLinearCombination = Combination


def default_weights(T0: Sequence[Index]) -> np.ndarray:
    """a_tau proportional to 2^-|tau|_1, normalized to sum 1."""
    norms = np.array([sum(abs(v) for v in t) for t in T0], dtype=float)
    a = np.exp2(-(norms - norms.min()))
    return a / a.sum()


class BaseFamily:
    """Common interface of spectral families.

    ``integrate(fn, indices)`` returns the integral over S of
    ``fn(F)`` where ``F[j]`` holds the values of ``f_{indices[j]}``; ``fn``
    must vanish at the zero vector.
    """

    alpha: float
    kind: str
    d: int
    name: str = "family"

    def integrate(self, fn: Callable[[np.ndarray], np.ndarray], indices: Sequence[Index]) -> float:
        raise NotImplementedError

    def shift_values(self, fn, moving: Sequence[Index], fixed: Sequence[Index], ts) -> np.ndarray:
        """Integrals of fn over (f_{m+t} for m in moving, f_u for u in fixed), one per t."""
        out = np.empty(len(ts))
        for i, t in enumerate(ts):
            t = as_index(t, self.d)
            out[i] = self.integrate(fn, [add(m, t) for m in moving] + list(fixed))
        return out

    def shift_average(self, fn, moving, fixed, T_list: Sequence[int]) -> np.ndarray:
        """Box averages C(T)^-1 sum_{t in B(T)} of :meth:`shift_values`, one per T."""
        T_list = [int(T) for T in T_list]
        win = Window(max(T_list), self.d)
        vals = self.shift_values(fn, moving, fixed, [tuple(r) for r in win.indices])
        out = []
        for T in T_list:
            mask = np.all((win.indices > -T) & (win.indices <= T), axis=1)
            out.append(vals[mask].mean())
        return np.array(out)

    @property
    def base_scale(self) -> float:
        """sigma_0^alpha = integral of |f_0|^alpha."""
        return self.integrate(lambda F: np.abs(F[0]) ** self.alpha, [zero(self.d)])

    def system(self):
        raise NotImplementedError(f"{type(self).__name__} has no classification system")

    def test_function(self, T0, a=None):
        raise NotImplementedError

    def sampler(self, window: Window):
        raise NotImplementedError(f"simulation is not available for {type(self).__name__}")

    def describe(self) -> dict:
        return {"name": self.name, "kind": self.kind, "alpha": self.alpha, "d": self.d}


class SpectralFamily(BaseFamily):
    """A family in action form on a finite (truncated) space."""

    def __init__(self, alpha: float, kind: str, f0, action: FiniteAction, name: str = "family"):
        self.kind = kind
        self.alpha = validate_alpha(alpha, kind)
        self.action = action
        self.space: StateSpace = action.space
        self.d = action.d
        self.name = name
        f0 = np.asarray(f0, dtype=float)
        if f0.shape != (self.space.n,):
            raise ValueError("f0 needs one value per state")
        if not np.all(np.isfinite(f0)):
            raise ValueError("f0 must be finite")
        if kind == MAX_STABLE:
            if np.any(f0 < 0):
                raise ValueError("max-stable families need f0 >= 0")
            if any(np.any(s.c[s.idx >= 0] != 1) for pair in action._gen for s in pair):
                raise ValueError("max-stable families carry no sign cocycle")
        f0.setflags(write=False)
        self.f0 = f0

    def __repr__(self):
        return f"SpectralFamily({self.name!r}, {self.kind}, alpha={self.alpha}, d={self.d}, n={self.space.n})"

    @functools.lru_cache(maxsize=4096)
    def _values(self, t: Index) -> tuple[np.ndarray, np.ndarray]:
        idx, w, c = self.action.maps(t)
        esc = idx < 0
        safe = np.where(esc, 0, idx)
        vals = np.where(esc, 0.0, c * np.nan_to_num(w) ** (1.0 / self.alpha) * self.f0[safe])
        vals.setflags(write=False)
        return vals, esc

    def values(self, t, on_escape: str = "zero") -> np.ndarray:
        """f_t over all states.  Escaping states read f_0 outside the truncation.

        With ``on_escape="zero"`` those values are 0, which is exact when f_0
        vanishes off the truncated space; ``"raise"`` reports the first one.
        """
        t = as_index(t, self.d)
        vals, esc = self._values(t)
        if on_escape == "raise" and esc.any():
            raise TruncationEscape(t, self.space.states[int(np.flatnonzero(esc)[0])])
        return vals

    def escapes(self, t) -> np.ndarray:
        return self._values(as_index(t, self.d))[1]

    def integrate(self, fn, indices):
        F = np.stack([self.values(t) for t in indices])
        vals = np.asarray(fn(F), dtype=float)
        return float(np.dot(vals, self.space.weights))

    def restrict(self, mask: np.ndarray, name: str | None = None) -> "SpectralFamily":
        mask = np.asarray(mask, dtype=bool)
        return SpectralFamily(self.alpha, self.kind, self.f0[mask], self.action.restrict(mask),
                              name or self.name)

    def system(self) -> FiniteAction:
        return self.action

    def test_function(self, T0, a=None) -> np.ndarray:
        T0 = [as_index(t, self.d) for t in T0]
        a = default_weights(T0) if a is None else np.asarray(a, dtype=float)
        g = np.zeros(self.space.n)
        for coef, t in zip(a, T0):
            g += coef * np.abs(self.values(t)) ** self.alpha
        return g

    def sampler(self, window: Window):
        from .simulate import TableSampler

        table = np.stack([self.values(tuple(t)) for t in window.indices], axis=1)
        return TableSampler(table, self.space.weights)


def eval_spectral(family: BaseFamily, t, s) -> float:
    """c_t(s) w(t,s)^{1/alpha} f_0(phi_t s); raises on truncation escape."""
    if hasattr(family, "eval_spectral"):
        return family.eval_spectral(t, s)
    t = as_index(t, family.d)
    k = family.space.index(s)
    vals, esc = family._values(t)
    if esc[k]:
        raise TruncationEscape(t, s)
    return float(vals[k])


def scale(family: BaseFamily, combo: Combination) -> float:
    """Scale coefficient of the combination.

    Max-stable: sigma^alpha = integral of (max_j a_j f_{tau_j})^alpha.
    Sum-stable: sigma^alpha = integral of |sum_j b_j f_{tau_j}|^alpha.
    """
    coefs = combo.coefs
    alpha = family.alpha
    if family.kind == MAX_STABLE:
        if np.any(coefs <= 0):
            raise ValueError("max-linear combinations need positive coefficients")
        fn = lambda F: np.max(coefs[:, None] * F, axis=0) ** alpha  # noqa: E731
    else:
        fn = lambda F: np.abs(np.tensordot(coefs, F, axes=1)) ** alpha  # noqa: E731
    return float(family.integrate(fn, combo.indices)) ** (1.0 / alpha)


def check_full_support(family: SpectralFamily, window) -> tuple[bool, list]:
    """Whether every state has f_t(s) != 0 for some t in the window."""
    window = list(window.indices if isinstance(window, Window) else window)
    if not window:
        raise ValueError("window is empty")
    covered = np.zeros(family.space.n, dtype=bool)
    for t in window:
        covered |= family.values(tuple(int(v) for v in t)) != 0
    uncovered = [family.space.states[k] for k in np.flatnonzero(~covered)]
    return not uncovered, uncovered


def split_family(family: SpectralFamily, report, boundary: str | None = None
                 ) -> tuple[SpectralFamily | None, SpectralFamily | None]:
    """Restrict a family to the estimated positive and null parts of a report.

    Inconclusive states are an error unless they are truncation-boundary
    states and ``boundary`` names the part ("positive" or "null") they join;
    they are then ignored by the invariance check.
    """
    if boundary not in (None, "positive", "null"):
        raise ValueError("boundary must be None, 'positive' or 'null'")
    states = family.space.states
    if set(report.per_state) != set(states):
        raise ValueError("report was produced for a different state space")
    verdicts = [report.per_state[s].verdict for s in states]
    edge = np.array([v == "inconclusive" and s in report.boundary_states for s, v in zip(states, verdicts)])
    inconclusive = [s for s, v, e in zip(states, verdicts, edge) if v == "inconclusive" and not (e and boundary)]
    if inconclusive:
        raise ValueError(f"{len(inconclusive)} inconclusive states, e.g. {inconclusive[:3]}")
    pos = np.array([v == "positive" for v in verdicts]) | (edge & (boundary == "positive"))
    out = []
    for mask, label in ((pos, "positive"), (~pos, "null")):
        if not mask.any():
            out.append(None)
            continue
        ok, _ = family.action.is_invariant(mask, ignore=edge)
        if not ok:
            raise InvarianceViolation(f"the {label} part is not invariant under the action")
        out.append(family.restrict(mask, f"{family.name}[{label}]"))
    return out[0], out[1]


def _nonempty_subsets(k: int):
    for r in range(1, k + 1):
        yield from itertools.combinations(range(k), r)


def _warn_support(states, g):
    bad = [states[k] for k in np.flatnonzero(np.asarray(g) <= 0)]
    if bad:
        warnings.warn(f"test function vanishes on {len(bad)} states, e.g. {bad[:5]}", SupportWarning, stacklevel=3)
    return bad
