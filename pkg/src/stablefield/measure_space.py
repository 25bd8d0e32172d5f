"""Finite measure spaces, nonsingular Z^d-actions and the dual operator.

Built-in actions are generated by d commuting one-step maps.  Every
``phi_t`` is obtained by composing generator steps (with repeated squaring
for long moves), and the Radon-Nikodym weight ``w(t, s)`` and the sign
cocycle ``c_t(s)`` are accumulated along the same composition, so the
cocycle identities hold by construction.  User supplied actions are checked
with :func:`verify_action_laws`.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence

import numpy as np

from .lattice import DimensionMismatch, Index, add, as_index, unit, zero

__all__ = [
    "StateSpace",
    "FiniteAction",
    "TruncationEscape",
    "DimensionMismatch",
    "LawReport",
    "dual_apply",
    "verify_action_laws",
    "verify_invariant_density",
    "cyclic_action",
    "zshift_action",
    "identity_action",
    "product_cyclic_action",
    "disjoint_union_action",
]


class TruncationEscape(LookupError):
    """A point map left the finite truncation of a countable space."""

    def __init__(self, t, state, message: str | None = None):
        self.t = t
        self.state = state
        super().__init__(message or f"phi_{t} maps state {state!r} outside the truncated space")


@dataclass(frozen=True, eq=False)
class StateSpace:
    states: tuple
    weights: np.ndarray
    total_mass_finite: bool = True
    truncation_note: str | None = None
    _lookup: dict = field(init=False, repr=False)

    def __post_init__(self):
        states = tuple(self.states)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if len(states) != w.size:
            raise ValueError("states and weights differ in length")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("state weights must be strictly positive and finite")
        lookup = {s: i for i, s in enumerate(states)}
        if len(lookup) != len(states):
            raise ValueError("duplicate state identifiers")
        w.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_lookup", lookup)

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def index(self, s: Hashable) -> int:
        try:
            return self._lookup[s]
        except KeyError:
            raise TruncationEscape(None, s, f"state {s!r} is not in the space") from None

    def __contains__(self, s) -> bool:
        return s in self._lookup

    def restrict(self, mask: np.ndarray) -> "StateSpace":
        mask = np.asarray(mask, dtype=bool)
        return StateSpace(
            tuple(s for s, keep in zip(self.states, mask) if keep),
            self.weights[mask],
            self.total_mass_finite,
            self.truncation_note,
        )

    def integrate(self, f) -> float:
        return float(np.dot(np.asarray(f, dtype=float), self.weights))


@dataclass(frozen=True)
class _Step:
    idx: np.ndarray  # image index, -1 on escape
    w: np.ndarray
    c: np.ndarray


def _compose(first: _Step, then: _Step) -> _Step:
    """Maps for t+h given maps for h (``first``) and t (``then``)."""
    ok = first.idx >= 0
    safe = np.where(ok, first.idx, 0)
    idx = np.where(ok, then.idx[safe], -1)
    w = np.where(ok, first.w * then.w[safe], np.nan)
    c = np.where(ok, first.c * then.c[safe], 0)
    idx = np.where(idx >= 0, idx, -1)
    w = np.where(idx >= 0, w, np.nan)
    c = np.where(idx >= 0, c, 0)
    return _Step(idx, w, c.astype(np.int8))


class FiniteAction:
    """A Z^d action on a finite space generated by d commuting bijections.

    ``forward[i][k]`` is the index of ``phi_{e_i}(state k)``, or -1 when the
    step leaves the truncation.  ``step_weight[i][k]`` is ``w(e_i, state k)``
    and ``step_sign[i][k]`` the value of the sign cocycle ``c_{e_i}``.
    """

    def __init__(
        self,
        space: StateSpace,
        forward: Sequence[np.ndarray],
        step_weight: Sequence[np.ndarray] | None = None,
        step_sign: Sequence[np.ndarray] | None = None,
        name: str = "action",
    ):
        self.space = space
        self.name = name
        self.d = len(forward)
        if self.d < 1:
            raise ValueError("an action needs at least one generator")
        n = space.n
        self._gen: list[tuple[_Step, _Step]] = []
        for i, fwd in enumerate(forward):
            fwd = np.asarray(fwd, dtype=np.int64)
            if fwd.shape != (n,):
                raise ValueError(f"generator {i} has the wrong shape")
            w = np.ones(n) if step_weight is None else np.asarray(step_weight[i], dtype=float)
            c = np.ones(n, dtype=np.int8) if step_sign is None else np.asarray(step_sign[i], dtype=np.int8)
            valid = fwd >= 0
            if np.any(fwd >= n) or len(set(fwd[valid].tolist())) != int(valid.sum()):
                raise ValueError(f"generator {i} is not injective on the space")
            if np.any(w[valid] <= 0) or not np.all(np.isfinite(w[valid])):
                raise ValueError(f"generator {i} has non-positive weights")
            if np.any(np.abs(c) != 1):
                raise ValueError("sign cocycle values must be +1 or -1")
            bwd = np.full(n, -1, dtype=np.int64)
            bwd[fwd[valid]] = np.flatnonzero(valid)
            bok = bwd >= 0
            safe = np.where(bok, bwd, 0)
            wb = np.where(bok, 1.0 / w[safe], np.nan)
            cb = np.where(bok, c[safe], 0).astype(np.int8)
            fw = np.where(valid, w, np.nan)
            fc = np.where(valid, c, 0).astype(np.int8)
            self._gen.append((_Step(fwd, fw, fc), _Step(bwd, wb, cb)))
        self._identity = _Step(np.arange(n), np.ones(n), np.ones(n, dtype=np.int8))

    def __repr__(self):
        return f"FiniteAction({self.name!r}, d={self.d}, n={self.space.n})"

    def _axis_power(self, axis: int, k: int) -> _Step:
        if k == 0:
            return self._identity
        return self._axis_power_cached(axis, k)

    @functools.lru_cache(maxsize=4096)
    def _axis_power_cached(self, axis: int, k: int) -> _Step:
        base = self._gen[axis][0 if k > 0 else 1]
        m = abs(k)
        result = self._identity
        # steps along one axis commute with themselves, so squaring is exact
        while m:
            if m & 1:
                result = _compose(result, base)
            m >>= 1
            if m:
                base = _compose(base, base)
        return result

    @functools.lru_cache(maxsize=8192)
    def _maps(self, t: Index) -> _Step:
        out = self._identity
        for axis, k in enumerate(t):
            if k:
                out = _compose(out, self._axis_power(axis, k))
        return out

    def maps(self, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(image index, w(t, .), c_t(.)) over all states; -1/nan/0 on escape."""
        t = as_index(t, self.d)
        m = self._maps(t)
        return m.idx, m.w, m.c

    def apply(self, t, s):
        t = as_index(t, self.d)
        k = self.space.index(s)
        j = self._maps(t).idx[k]
        if j < 0:
            raise TruncationEscape(t, s)
        return self.space.states[j]

    def rn_weight(self, t, s) -> float:
        t = as_index(t, self.d)
        k = self.space.index(s)
        m = self._maps(t)
        if m.idx[k] < 0:
            raise TruncationEscape(t, s)
        return float(m.w[k])

    def sign(self, t, s) -> int:
        t = as_index(t, self.d)
        k = self.space.index(s)
        m = self._maps(t)
        if m.idx[k] < 0:
            raise TruncationEscape(t, s)
        return int(m.c[k])

    def dual(self, g: np.ndarray, t) -> tuple[np.ndarray, np.ndarray]:
        """``w(t,s) g(phi_t s)`` over all states, escapes set to 0 and flagged."""
        idx, w, _ = self.maps(t)
        esc = idx < 0
        vals = np.where(esc, 0.0, np.nan_to_num(w) * np.asarray(g, dtype=float)[np.where(esc, 0, idx)])
        return vals, esc

    def is_invariant(self, mask: np.ndarray, ignore: np.ndarray | None = None) -> tuple[bool, int]:
        """Whether ``phi_{e_i}`` maps the set onto itself for every generator.

        Pairs touching an ``ignore`` state are skipped.  Returns (invariant,
        number of escaping states ignored)."""
        mask = np.asarray(mask, dtype=bool)
        ignore = np.zeros(mask.size, dtype=bool) if ignore is None else np.asarray(ignore, dtype=bool)
        escapes = 0
        for fwd, bwd in self._gen:
            for step in (fwd, bwd):
                ok = step.idx >= 0
                escapes += int(np.count_nonzero(~ok & mask))
                src = np.flatnonzero(ok & ~ignore)
                dst = step.idx[src]
                keep = ~ignore[dst]
                if np.any(mask[src[keep]] != mask[dst[keep]]):
                    return False, escapes
        return True, escapes

    def restrict(self, mask: np.ndarray, name: str | None = None) -> "FiniteAction":
        """Action restricted to an invariant subset (leaving it counts as escape)."""
        mask = np.asarray(mask, dtype=bool)
        new_index = np.full(self.space.n, -1, dtype=np.int64)
        new_index[mask] = np.arange(int(mask.sum()))
        forward, weight, sign = [], [], []
        for fwd, _ in self._gen:
            f = fwd.idx[mask]
            f = np.where(f >= 0, new_index[np.where(f >= 0, f, 0)], -1)
            forward.append(f)
            weight.append(np.where(f >= 0, fwd.w[mask], 1.0))
            sign.append(np.where(f >= 0, fwd.c[mask], 1))
        return FiniteAction(self.space.restrict(mask), forward, weight, sign, name or self.name)

    def generators(self) -> list[Index]:
        return [unit(self.d, i, s) for i in range(self.d) for s in (1, -1)]


def dual_apply(action: FiniteAction, t, f, space: StateSpace | None = None, on_escape: str = "raise") -> np.ndarray:
    """Return g with g(s) = w(t, s) * f(phi_t(s)).

    ``on_escape="raise"`` raises :class:`TruncationEscape` naming the first
    state whose image leaves the truncation; ``"zero"`` treats f as vanishing
    outside the truncated space.
    """
    space = space or action.space
    t = as_index(t, action.d) if not isinstance(t, (int, np.integer)) or action.d == 1 else None
    if t is None:
        raise DimensionMismatch(f"scalar index given for a {action.d}-dimensional action")
    f = np.asarray(f, dtype=float)
    if f.shape != (space.n,):
        raise ValueError("f must have one value per state")
    if not np.all(np.isfinite(f)):
        raise ValueError("f must be finite")
    vals, esc = action.dual(f, t)
    if on_escape == "raise" and esc.any():
        k = int(np.flatnonzero(esc)[0])
        raise TruncationEscape(t, space.states[k])
    return vals


@dataclass
class LawReport:
    checks: dict[str, float]
    tol: float
    n_triples: int
    boundary_states: list = field(default_factory=list)

    @property
    def passed(self) -> dict[str, bool]:
        return {k: v <= self.tol for k, v in self.checks.items()}

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def __str__(self):
        rows = [f"{k:<18} {'pass' if v <= self.tol else 'FAIL'}  worst={v:.3g}" for k, v in self.checks.items()]
        return "\n".join(rows)


def _random_index(rng, d: int, radius: int) -> Index:
    return tuple(int(v) for v in rng.integers(-radius, radius + 1, size=d))


def verify_action_laws(action, space=None, sample_budget: int = 10_000, tol: float = 1e-12,
                       radius: int = 6, seed: int = 0) -> LawReport:
    """Check identity, group law, w(0)=1, cocycle identities and measure transport.

    Triples (t, h, s) are drawn at random with ``|t|, |h| <= radius``; every
    generator direction is always included.  Violations are report content.
    States whose images escape the truncation are skipped and listed.
    """
    if sample_budget < 1:
        raise ValueError("sample_budget must be >= 1")
    if hasattr(action, "law_report"):
        return action.law_report(sample_budget=sample_budget, tol=tol, radius=radius, seed=seed)
    space = space or action.space
    rng = np.random.default_rng(seed)
    d = action.d
    n = space.n
    worst = dict(identity=0.0, group_law=0.0, w_zero=0.0, cocycle_w=0.0, cocycle_sign=0.0, transport=0.0)
    boundary: set[int] = set()

    idx0, w0, c0 = action.maps(zero(d))
    worst["identity"] = float(np.count_nonzero(idx0 != np.arange(n)))
    worst["w_zero"] = float(np.max(np.abs(w0 - 1.0))) if n else 0.0
    worst["identity"] = max(worst["identity"], float(np.count_nonzero(c0 != 1)))

    gens = action.generators()
    pairs = [(g1, g2) for g1 in gens for g2 in gens]
    n_random = max(1, sample_budget // max(1, min(n, 64)))
    pairs += [(_random_index(rng, d, radius), _random_index(rng, d, radius)) for _ in range(n_random)]
    states_per_pair = max(1, sample_budget // len(pairs))
    n_triples = 0
    for t, h in pairs:
        ks = rng.integers(0, n, size=min(n, states_per_pair)) if n else np.array([], dtype=int)
        it, wt, ct = action.maps(t)
        ih, wh, ch = action.maps(h)
        ith, wth, cth = action.maps(add(t, h))
        for k in ks:
            j = ih[k]
            if j < 0 or it[j] < 0 or ith[k] < 0:
                boundary.add(int(k))
                continue
            n_triples += 1
            worst["group_law"] = max(worst["group_law"], float(ith[k] != it[j]))
            worst["cocycle_w"] = max(worst["cocycle_w"], abs(wth[k] - wh[k] * wt[j]))
            worst["cocycle_sign"] = max(worst["cocycle_sign"], float(cth[k] != ch[k] * ct[j]))
        # measure transport on functions supported inside the image of phi_t
        f = rng.random(n)
        ok = it >= 0
        img = np.zeros(n, dtype=bool)
        img[it[ok]] = True
        f = np.where(img, f, 0.0)
        lhs = float(np.sum(np.where(ok, f[np.where(ok, it, 0)] * np.nan_to_num(wt), 0.0) * space.weights))
        rhs = float(np.sum(f * space.weights))
        worst["transport"] = max(worst["transport"], abs(lhs - rhs))
    return LawReport(worst, tol, n_triples, sorted(space.states[k] for k in boundary))


def verify_invariant_density(action: FiniteAction, space: StateSpace | None, rho, generators: Sequence,
                             tol: float = 1e-12) -> tuple[bool, float]:
    """Whether ``rho`` is a fixed point of the dual operator for each generator."""
    if not generators:
        raise ValueError("generator list is empty")
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0) or not np.any(rho > 0):
        raise ValueError("rho must be nonnegative and not identically zero")
    if hasattr(action, "invariant_residual"):
        resid = action.invariant_residual(rho, generators)
        return resid <= tol, resid
    space = space or action.space
    resid = 0.0
    for t in generators:
        vals, esc = action.dual(rho, as_index(t, action.d))
        diff = np.abs(vals - rho)[~esc]
        if diff.size:
            resid = max(resid, float(diff.max()))
    return resid <= tol, resid


# ---------------------------------------------------------------------------
# built-in actions


def cyclic_action(m: int, weights=None) -> FiniteAction:
    """Rotation s -> s+1 mod m on Z_m."""
    space = StateSpace(tuple(range(m)), np.ones(m) if weights is None else weights)
    if weights is not None and not np.allclose(weights, weights[0]):
        raise ValueError("rotation only preserves uniform weights")
    return FiniteAction(space, [(np.arange(m) + 1) % m], name=f"cyclic({m})")


def zshift_action(half_width: int, measure: str | Callable[[int], float] = "counting") -> FiniteAction:
    """Shift k -> k+1 on Z truncated to [-half_width, half_width].

    ``measure`` is ``"counting"``, ``"geometric"`` (mu(k) = 2^-|k|) or a
    callable giving mu(k).
    """
    ks = np.arange(-half_width, half_width + 1)
    if measure == "counting":
        mu = np.ones(ks.size)
    elif measure == "geometric":
        mu = np.ldexp(1.0, -np.abs(ks))
    else:
        mu = np.array([float(measure(int(k))) for k in ks])
    fwd = np.arange(1, ks.size + 1)
    fwd[-1] = -1
    w = np.ones(ks.size)
    w[:-1] = mu[1:] / mu[:-1]
    note = f"Z truncated to [{-half_width}, {half_width}]"
    space = StateSpace(tuple(int(k) for k in ks), mu, total_mass_finite=(measure != "counting"), truncation_note=note)
    return FiniteAction(space, [fwd], [w], name=f"zshift({half_width}, {measure if isinstance(measure, str) else 'custom'})")


def identity_action(space: StateSpace, d: int = 1) -> FiniteAction:
    n = space.n
    return FiniteAction(space, [np.arange(n)] * d, name="identity")


def product_cyclic_action(periods: Sequence[int]) -> FiniteAction:
    """Z^d acting on Z_{m_1} x ... x Z_{m_d}, axis i rotating coordinate i."""
    periods = tuple(int(m) for m in periods)
    grids = np.stack(np.meshgrid(*[np.arange(m) for m in periods], indexing="ij"), -1).reshape(-1, len(periods))
    states = tuple(tuple(int(v) for v in row) for row in grids)
    n = len(states)
    space = StateSpace(states, np.full(n, 1.0 / n))
    lookup = {s: k for k, s in enumerate(states)}
    forward = []
    for axis, m in enumerate(periods):
        fwd = np.empty(n, dtype=np.int64)
        for k, s in enumerate(states):
            nxt = list(s)
            nxt[axis] = (nxt[axis] + 1) % m
            fwd[k] = lookup[tuple(nxt)]
        forward.append(fwd)
    return FiniteAction(space, forward, name=f"product_cyclic{periods}")


def disjoint_union_action(parts: Sequence[tuple[str, FiniteAction]]) -> FiniteAction:
    """Action on the tagged disjoint union of several spaces."""
    d = parts[0][1].d
    states, weights = [], []
    offset = 0
    forward = [[] for _ in range(d)]
    wts = [[] for _ in range(d)]
    sgn = [[] for _ in range(d)]
    finite = True
    for tag, act in parts:
        if act.d != d:
            raise DimensionMismatch("all parts need the same dimension")
        states += [(tag, s) for s in act.space.states]
        weights.append(act.space.weights)
        finite = finite and act.space.total_mass_finite
        for axis in range(d):
            fwd = act._gen[axis][0]
            forward[axis].append(np.where(fwd.idx >= 0, fwd.idx + offset, -1))
            wts[axis].append(np.where(fwd.idx >= 0, fwd.w, 1.0))
            sgn[axis].append(np.where(fwd.idx >= 0, fwd.c, 1))
        offset += act.space.n
    space = StateSpace(tuple(states), np.concatenate(weights), total_mass_finite=finite,
                       truncation_note="disjoint union")
    return FiniteAction(space, [np.concatenate(f) for f in forward], [np.concatenate(w) for w in wts],
                        [np.concatenate(c) for c in sgn], name="+".join(tag for tag, _ in parts))
