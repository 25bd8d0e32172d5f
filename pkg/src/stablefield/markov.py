"""Markov-chain path-shift fields.

Each coordinate l carries a recurrent chain on Z with invariant measure
pi^(l); the state space is the product of two-sided path spaces with the
shift-invariant measure built from pi and the forward/reversed kernels, and
Z^d acts by the coordinatewise shift.  The kernel is f(x) = 1{x_l(0) = 0
for all l}, so every integral needed downstream reduces to the measures

    m(B) = prod_l pi_0^(l) prod_i p^(l)_00(gap_i)

of cylinders {x_l(s) = 0 for s in B_l}, where the gaps are between
consecutive sorted times.  Integrals of functions of several f_t are sums
over on/off patterns obtained from m by inclusion-exclusion.
"""

from __future__ import annotations

import functools
import itertools
from typing import Sequence

import numpy as np
from scipy import special

from .lattice import DimensionMismatch, Index, Window, as_index, unit
from .measure_space import LawReport, StateSpace, TruncationEscape
from .spectral import MAX_STABLE, BaseFamily, default_weights, validate_alpha

__all__ = [
    "central_binomial",
    "MarkovChainSpec",
    "LazyWalk",
    "FiniteChain",
    "two_state_lazy",
    "IndicatorFamily",
    "PathTestFunction",
    "PathShiftAction",
    "MarkovFamily",
    "make_markov_field",
]


_CB_TABLE_SIZE = 1 << 19
_CB_TABLE: np.ndarray | None = None


def central_binomial(m) -> np.ndarray:
    """C(2m, m) / 4^m: exact ratio-recursion table below 2^19, asymptotic series above."""
    global _CB_TABLE
    m = np.asarray(m, dtype=np.int64)
    if _CB_TABLE is None:
        k = np.arange(1, _CB_TABLE_SIZE + 1, dtype=float)
        _CB_TABLE = np.concatenate([[1.0], np.cumprod((2 * k - 1) / (2 * k))])
    if np.any(m < 0):
        raise ValueError("negative lag")
    small = m <= _CB_TABLE_SIZE
    out = _CB_TABLE[np.where(small, m, 0)]
    if not small.all():
        x = m[~small].astype(float)
        out[~small] = (1 - 1 / (8 * x) + 1 / (128 * x ** 2) + 5 / (1024 * x ** 3)) / np.sqrt(np.pi * x)
    return out


class MarkovChainSpec:
    """A recurrent chain on a set of integer labels that contains 0."""

    name: str
    recurrence: str  # "positive" or "null"
    labels: np.ndarray  # coarse states used for classification
    pi: np.ndarray  # invariant measure on ``labels``
    P: np.ndarray  # transition matrix on ``labels`` (truncated for countable chains)

    @property
    def pi0(self) -> float:
        return float(self.pi[self.zero_pos])

    @property
    def zero_pos(self) -> int:
        return int(np.flatnonzero(self.labels == 0)[0])

    @property
    def finite_mass(self) -> bool:
        return self.recurrence == "positive"

    def p00(self, m) -> np.ndarray:
        raise NotImplementedError

    def p00_cumsum(self, n) -> np.ndarray:
        """sum_{k < n} p00(k) from a cached prefix table."""
        n = np.asarray(n, dtype=np.int64)
        top = int(n.max()) if n.size else 0
        table = getattr(self, "_p00_cum", None)
        if table is None or table.size <= top:
            size = top + top // 2 + 1024
            table = np.concatenate([[0.0], np.cumsum(self.p00(np.arange(size)))])
            self._p00_cum = table
        return table[n]

    def to_zero(self, m) -> np.ndarray:
        """Matrix [i, j] = P(x(m_i) = 0 | x(0) = labels[j]) for m_i >= 0."""
        raise NotImplementedError

    def from_zero(self, m) -> np.ndarray:
        """Matrix [i, j] = p_{0, labels[j]}(m_i)."""
        raise NotImplementedError

    def cond_zero(self, lags) -> np.ndarray:
        """P(x(lag) = 0 | x(0) = j) for signed lags; negative lags use the reversed chain."""
        lags = np.asarray(lags, dtype=np.int64).ravel()
        cache = self.__dict__.setdefault("_cond_cache", {})
        new = np.unique(lags[[int(g) not in cache for g in lags]]) if lags.size else lags
        if new.size:
            rows = np.empty((new.size, self.labels.size))
            pos = new >= 0
            if pos.any():
                rows[pos] = self.to_zero(new[pos])
            if (~pos).any():
                rows[~pos] = self.pi0 * self.from_zero(-new[~pos]) / self.pi[None, :]
            cache.update(zip(new.tolist(), rows))
        if not lags.size:
            return np.empty((0, self.labels.size))
        return np.stack([cache[int(g)] for g in lags])

    def interior_residual(self) -> float:
        """max |pi P - pi| over states away from the truncation boundary."""
        r = np.abs(self.pi @ self.P - self.pi)
        return float(r[self._interior].max()) if self._interior.any() else 0.0

    @property
    def _interior(self) -> np.ndarray:
        return np.ones(self.labels.size, dtype=bool)

    # sampling -------------------------------------------------------------
    def walk(self, start: np.ndarray, u: np.ndarray, reverse: bool = False) -> np.ndarray:
        """Paths (k, n+1) from label positions ``start`` driven by uniforms u (k, n)."""
        raise NotImplementedError

    def stationary_start(self, u: np.ndarray) -> np.ndarray:
        if not self.finite_mass:
            raise ValueError("a null-recurrent chain has no stationary law")
        cum = np.cumsum(self.pi / self.pi.sum())
        return np.minimum(np.searchsorted(cum, u, side="right"), cum.size - 1)

    def describe(self) -> dict:
        return {"name": self.name, "recurrence": self.recurrence, "n_states": int(self.labels.size)}


class LazyWalk(MarkovChainSpec):
    """Lazy symmetric walk: steps -1, 0, +1 with probabilities 1/4, 1/2, 1/4.

    Null recurrent and aperiodic with counting measure invariant.  Return
    probabilities use the exact law of the untruncated walk,
    p_{j0}(m) = C(2m, m-j) / 4^m.  The truncation to [-R, R] (holding at
    the ends, so counting measure stays invariant) fixes the coarse states
    and drives path sampling.
    """

    recurrence = "null"

    def __init__(self, R: int = 200):
        if R < 1:
            raise ValueError("truncation radius must be >= 1")
        self.R = int(R)
        self.name = f"lazy_walk(R={R})"
        self.labels = np.arange(-R, R + 1)
        self.pi = np.ones(self.labels.size)
        n = self.labels.size
        P = np.zeros((n, n))
        i = np.arange(n)
        P[i, i] = 0.5
        P[i[1:], i[:-1]] = 0.25
        P[i[:-1], i[1:]] = 0.25
        P[0, 0] += 0.25
        P[-1, -1] += 0.25
        self.P = P

    @property
    def _interior(self):
        return np.abs(self.labels) < self.R

    def p00(self, m):
        """C(2m, m) / 4^m."""
        return central_binomial(m)

    def to_zero(self, m):
        m = np.asarray(m, dtype=np.int64)[:, None]
        k = m - self.labels[None, :]
        ok = (k >= 0) & (k <= 2 * m)
        kk = np.where(ok, k, 0)
        logp = special.gammaln(2 * m + 1) - special.gammaln(kk + 1) - special.gammaln(2 * m - kk + 1) - 2 * m * np.log(2.0)
        return np.where(ok, np.exp(logp), 0.0)

    def from_zero(self, m):
        return self.to_zero(m)

    def walk(self, start, u, reverse=False):
        steps = (u > 0.75).astype(np.int64) - (u < 0.25).astype(np.int64)
        x = np.empty((u.shape[0], u.shape[1] + 1), dtype=np.int64)
        x[:, 0] = self.labels[start]
        np.cumsum(steps, axis=1, out=x[:, 1:])
        x[:, 1:] += x[:, :1]
        if np.abs(x).max(initial=0) > self.R:
            # fall back to exact holding at the ends
            y = self.labels[start].copy()
            x[:, 0] = y
            for k in range(steps.shape[1]):
                y = np.clip(y + steps[:, k], -self.R, self.R)
                x[:, k + 1] = y
        return x + self.R  # label positions


class FiniteChain(MarkovChainSpec):
    """Irreducible aperiodic chain on finitely many integer labels."""

    recurrence = "positive"

    def __init__(self, P, labels=None, name: str = "finite_chain"):
        P = np.array(P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("transition matrix must be square")
        if np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("transition matrix must be row-stochastic")
        n = P.shape[0]
        self.labels = np.arange(n) if labels is None else np.asarray(labels, dtype=np.int64)
        if 0 not in self.labels:
            raise ValueError("the chain needs a state labelled 0")
        self.P = P
        self.name = name
        vals, vecs = np.linalg.eig(P.T)
        k = int(np.argmin(np.abs(vals - 1)))
        pi = np.real(vecs[:, k])
        pi = pi / pi.sum()
        if np.any(pi <= 0):
            raise ValueError("chain is not irreducible")
        self.pi = pi
        lam, V = np.linalg.eig(P)
        Vinv = np.linalg.inv(V)
        self._eig = None
        if np.allclose(V @ np.diag(lam) @ Vinv, P, atol=1e-13) and np.all(np.abs(lam) <= 1 + 1e-12):
            self._eig = (lam, V, Vinv)
        self.Phat = (P.T * pi[None, :]) / pi[:, None]
        self._cum = np.cumsum(P, axis=1)
        self._cumhat = np.cumsum(self.Phat, axis=1)

    def _power_entries(self, m, col: int | None = None, row: int | None = None):
        m = np.asarray(m, dtype=np.int64)
        if self._eig is not None:
            lam, V, Vinv = self._eig
            powers = lam[None, :] ** m[:, None]
            if col is not None:
                out = (powers * Vinv[:, col][None, :]) @ V.T
            else:
                out = (powers * V[row][None, :]) @ Vinv
            return np.real(out)
        rows = [np.linalg.matrix_power(self.P, int(k)) for k in m]
        return np.array([r[:, col] if col is not None else r[row] for r in rows])

    _P00_TABLE_MAX = 1 << 20

    def p00(self, m):
        """[P^m]_00 from a cached table (grown by doubling); very long lags are evaluated directly."""
        z = self.zero_pos
        m = np.asarray(m, dtype=np.int64)
        far = m >= self._P00_TABLE_MAX
        if far.any():
            out = np.empty(m.shape)
            out[far] = self._power_entries(m[far].ravel(), row=z)[:, z]
            out[~far] = self.p00(m[~far])
            return out
        top = int(m.max()) if m.size else 0
        table = getattr(self, "_p00_table", None)
        if table is None or table.size <= top:
            size = min(max(2 * top, 1024), self._P00_TABLE_MAX) + 1
            if self._eig is not None:
                lam, V, Vinv = self._eig
                coef = V[z, :] * Vinv[:, z]
                table = np.empty(size)
                for start in range(0, size, 1 << 16):
                    k = np.arange(start, min(size, start + (1 << 16)))
                    table[start:start + k.size] = np.real(lam[None, :] ** k[:, None] @ coef)
            else:
                table = self._power_entries(np.arange(size), row=z)[:, z]
            self._p00_table = table
        return table[m]

    def to_zero(self, m):
        return self._power_entries(m, col=self.zero_pos)

    def from_zero(self, m):
        return self._power_entries(m, row=self.zero_pos)

    def walk(self, start, u, reverse=False):
        cum = self._cumhat if reverse else self._cum
        x = np.empty((u.shape[0], u.shape[1] + 1), dtype=np.int64)
        x[:, 0] = start
        y = np.asarray(start)
        last = cum.shape[1] - 1
        for k in range(u.shape[1]):
            y = np.minimum((u[:, k, None] >= cum[y]).sum(axis=1), last)
            x[:, k + 1] = y
        return x


def two_state_lazy() -> FiniteChain:
    """P = [[3/4, 1/4], [1/4, 3/4]] on {0, 1}; pi = (1/2, 1/2), p00(n) = 1/2 + 2^-(n+1)."""
    return FiniteChain([[0.75, 0.25], [0.25, 0.75]], name="two_state_lazy")


# ---------------------------------------------------------------------------


class IndicatorFamily(BaseFamily):
    """Families with f_t = indicator of a set A_t, sign cocycle 1.

    Subclasses provide :meth:`joint_measure`, the measure of
    A_{p_1} n ... n A_{p_k} for a batch of index tuples.
    """

    def joint_measure(self, points: np.ndarray) -> np.ndarray:
        """points has shape (n, k, d); returns n measures."""
        raise NotImplementedError

    @staticmethod
    def _patterns(k: int):
        masks = np.arange(1, 2 ** k)
        bits = ((masks[:, None] >> np.arange(k)[None, :]) & 1).astype(float)
        # Moebius matrix: nu(A) = sum_{B >= A} (-1)^{|B|-|A|} m(B)
        sup = (masks[None, :] & masks[:, None]) == masks[:, None]
        sign = (-1.0) ** (bits.sum(1)[None, :] - bits.sum(1)[:, None])
        return masks, bits, np.where(sup, sign, 0.0)

    def _combine(self, fn, k: int, mB: np.ndarray) -> np.ndarray:
        """mB has shape (2^k - 1, n); returns n integrals."""
        masks, bits, mob = self._patterns(k)
        if abs(float(np.asarray(fn(np.zeros((k, 1))))[0])) > 0:
            raise ValueError("integrand must vanish when every kernel is 0")
        nu = mob @ mB
        vals = np.asarray(fn(bits.T), dtype=float)
        return vals @ nu

    def integrate(self, fn, indices):
        pts = np.array([as_index(t, self.d) for t in indices], dtype=np.int64)
        k = len(pts)
        masks, bits, _ = self._patterns(k)
        mB = np.array([self.joint_measure(pts[bits[i].astype(bool)][None])[0] for i in range(len(masks))])
        return float(self._combine(fn, k, mB[:, None])[0])

    def shift_values(self, fn, moving, fixed, ts):
        moving = np.array([as_index(t, self.d) for t in moving], dtype=np.int64).reshape(-1, self.d)
        fixed = np.array([as_index(t, self.d) for t in fixed], dtype=np.int64).reshape(-1, self.d)
        ts = np.array([as_index(t, self.d) for t in ts], dtype=np.int64).reshape(-1, self.d)
        k = len(moving) + len(fixed)
        masks, bits, _ = self._patterns(k)
        mB = np.empty((len(masks), len(ts)))
        for i in range(len(masks)):
            sel = bits[i].astype(bool)
            mv, fx = moving[sel[: len(moving)]], fixed[sel[len(moving):]]
            pts = np.concatenate([mv[None, :, :] + ts[:, None, :],
                                  np.broadcast_to(fx[None], (len(ts),) + fx.shape)], axis=1)
            mB[i] = self.joint_measure(pts)
        return self._combine(fn, k, mB)

    def measure_of_f0(self) -> float:
        return float(self.joint_measure(np.zeros((1, 1, self.d), dtype=np.int64))[0])


class PathTestFunction:
    """g = sum_tau a_tau f_tau, optionally stored in product form per axis."""

    def __init__(self, offsets, weights, factors=None):
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=float)
        self.factors = factors  # list of (offsets_l, weights_l) or None

    @classmethod
    def build(cls, T0, a, d: int) -> "PathTestFunction":
        T0 = [as_index(t, d) for t in T0]
        if not T0:
            raise ValueError("T0 is empty")
        factors = None
        if a is None:
            a = default_weights(T0)
            axes = [sorted({t[l] for t in T0}) for l in range(d)]
            if len(set(T0)) == int(np.prod([len(ax) for ax in axes])):
                factors = []
                for ax in axes:
                    ax = np.array(ax)
                    w = np.exp2(-np.abs(ax).astype(float))
                    factors.append((ax, w / w.sum()))
        a = np.asarray(a, dtype=float)
        if a.shape != (len(T0),) or np.any(a <= 0):
            raise ValueError("weights must be positive, one per element of T0")
        return cls(np.array(T0), a, factors)


class PathShiftAction:
    """The coordinatewise shift on a product of two-sided path spaces.

    The shift preserves the path measure, so w = 1 and c = 1.  For
    classification the relevant statistic is the conditional expectation of
    a dual given the chain states at time 0; :meth:`dual` returns it on the
    coarse state space of (x_1(0), ..., x_d(0)).
    """

    def __init__(self, chains: Sequence[MarkovChainSpec]):
        self.chains = list(chains)
        self.d = len(self.chains)
        self.name = "path_shift[" + ",".join(c.name for c in self.chains) + "]"
        labels = [c.labels for c in self.chains]
        if self.d == 1:
            states = tuple(int(v) for v in labels[0])
        else:
            states = tuple(tuple(int(v) for v in s) for s in itertools.product(*labels))
        w = functools.reduce(np.multiply.outer, [c.pi for c in self.chains]).reshape(-1)
        self.space = StateSpace(states, w, all(c.finite_mass for c in self.chains),
                                "chain states at time 0 (coarse path states)")

    def __repr__(self):
        return f"PathShiftAction({self.name}, d={self.d})"

    def generators(self):
        return [unit(self.d, i, s) for i in range(self.d) for s in (1, -1)]

    def dual(self, g: PathTestFunction, t):
        t = as_index(t, self.d)
        if g.factors is not None:
            vec = None
            cache = g.__dict__.setdefault("_cache", {})
            for l, (offs, wts) in enumerate(g.factors):
                key = (id(self.chains[l]), l, t[l])
                if key not in cache:
                    cache[key] = wts @ self.chains[l].cond_zero(offs + t[l])
                q = cache[key]
                vec = q if vec is None else np.multiply.outer(vec, q)
            vals = np.asarray(vec).reshape(-1)
        else:
            vals = np.zeros(self.space.n)
            for a, tau in zip(g.weights, g.offsets):
                vec = None
                for l in range(self.d):
                    q = self.chains[l].cond_zero([tau[l] + t[l]])[0]
                    vec = q if vec is None else np.multiply.outer(vec, q)
                vals += a * np.asarray(vec).reshape(-1)
        return vals, np.zeros(self.space.n, dtype=bool)

    def is_invariant(self, mask):
        # the chains are irreducible, so only trivial sets of time-0 states are invariant
        mask = np.asarray(mask, dtype=bool)
        return bool(mask.all() or not mask.any()), 0

    def law_report(self, sample_budget=10_000, tol=1e-12, radius=6, seed=0) -> LawReport:
        """Index arithmetic of the shift plus exact invariance of cylinder measures."""
        rng = np.random.default_rng(seed)
        worst = dict(identity=0.0, group_law=0.0, w_zero=0.0, cocycle_w=0.0, cocycle_sign=0.0, transport=0.0)
        L = 4 * radius
        n = max(1, sample_budget // 64)
        for _ in range(n):
            t = rng.integers(-radius, radius + 1, self.d)
            h = rng.integers(-radius, radius + 1, self.d)
            paths = [rng.integers(-3, 4, 2 * L + 1) for _ in range(self.d)]
            shifted = lambda p, s: [np.roll(q, -int(v)) for q, v in zip(p, s)]  # noqa: E731
            a = shifted(shifted(paths, h), t)
            b = shifted(paths, t + h)
            inner = slice(2 * radius + 1, 2 * L + 1 - 2 * radius - 1)
            worst["group_law"] = max(worst["group_law"], float(any(np.any(x[inner] != y[inner]) for x, y in zip(a, b))))
            worst["identity"] = max(worst["identity"], float(any(np.any(x != y) for x, y in zip(shifted(paths, [0] * self.d), paths))))
            # transport: mu(A shifted by t) = mu(A) for random cylinders
            k = int(rng.integers(1, 4))
            pts = rng.integers(-radius, radius + 1, (1, k, self.d))
            m0 = self._cylinder(pts)
            m1 = self._cylinder(pts + t[None, None, :])
            worst["transport"] = max(worst["transport"], float(abs(m1 - m0)[0]))
        resid = max(c.interior_residual() for c in self.chains)
        worst["transport"] = max(worst["transport"], resid)
        return LawReport(worst, tol, n * 2)

    def _cylinder(self, pts):
        out = np.ones(pts.shape[0])
        for l, c in enumerate(self.chains):
            times = np.sort(pts[:, :, l], axis=1)
            out *= c.pi0 * np.prod(c.p00(np.diff(times, axis=1)), axis=1)
        return out

    def find_weakly_wandering(self, candidates: Sequence[Index], N: int, tol: float = 1e-2):
        """Greedy translates of W = {x(0) = 0} overlapping by at most tol * mu(W)."""
        muW = float(self._cylinder(np.zeros((1, 1, self.d), dtype=np.int64))[0])
        chosen: list[Index] = []
        for t in candidates:
            t = as_index(t, self.d)
            if chosen:
                pts = np.array([[t, s] for s in chosen], dtype=np.int64)
                if np.any(self._cylinder(pts) > tol * muW):
                    continue
            chosen.append(t)
            if len(chosen) >= N:
                return ("x(0)=0",), chosen
        return None

    def invariant_residual(self, rho, generators) -> float:
        """Residual of rho P^|t| = rho for a density on a single chain's states."""
        if self.d != 1:
            raise DimensionMismatch("invariant densities are checked per chain")
        c = self.chains[0]
        rho = np.asarray(rho, dtype=float)
        res = 0.0
        for t in generators:
            k = abs(as_index(t, 1)[0])
            r = np.abs(rho @ np.linalg.matrix_power(c.P, k) - rho)
            res = max(res, float(r[c._interior].max()))
        return res


class MarkovFamily(IndicatorFamily):
    """f_t(x) = 1{x_l(t_l) = 0 for every l} on the product path space."""

    def __init__(self, chains: Sequence[MarkovChainSpec], alpha: float, kind: str, L: int = 64,
                 name: str | None = None):
        chains = list(chains)
        if not chains:
            raise ValueError("need at least one chain")
        for c in chains:
            if c.recurrence not in ("positive", "null"):
                raise ValueError(f"chain {c.name} is not recurrent; its spectral mass escapes")
        self.chains = chains
        self.kind = kind
        self.alpha = validate_alpha(alpha, kind)
        self.d = len(chains)
        self.L = int(L)
        self.action = PathShiftAction(chains)
        self.name = name or "markov[" + ",".join(c.recurrence for c in chains) + "]"

    def __repr__(self):
        return f"MarkovFamily({self.name!r}, {self.kind}, alpha={self.alpha})"

    def joint_measure(self, points):
        return self.action._cylinder(np.asarray(points, dtype=np.int64))

    def _axis_average(self, l, mv, fx, T_list):
        """Box averages over t in (-T, T] of the chain-l factor of m(mv + t, fx)."""
        c = self.chains[l]
        mv, fx = np.sort(mv), np.sort(fx)
        inner = lambda x: np.prod(c.p00(np.diff(x))) if x.size > 1 else 1.0  # noqa: E731
        if not (mv.size and fx.size):
            return np.full(len(T_list), c.pi0 * inner(mv if mv.size else fx))
        # t <= b: every moving time precedes the fixed ones and one gap b - t moves with t;
        # t >= a: the reverse with gap t - a; in between the times interleave
        const = c.pi0 * inner(mv) * inner(fx)
        b, a = int(fx[0] - mv[-1]), int(fx[-1] - mv[0])
        start = max(a, b + 1)
        band = np.arange(b + 1, start)
        if band.size:
            times = np.sort(np.concatenate([mv[None, :] + band[:, None],
                                            np.broadcast_to(fx[None, :], (band.size, fx.size))], axis=1), axis=1)
            band_cum = np.concatenate([[0.0], np.cumsum(c.pi0 * np.prod(c.p00(np.diff(times, axis=1)), axis=1))])
        out = []
        for T in T_list:
            lo, hi = -T + 1, T
            total = 0.0
            if lo <= min(hi, b):
                total += const * (c.p00_cumsum(b - lo + 1) - c.p00_cumsum(b - min(hi, b)))
            if max(lo, start) <= hi:
                total += const * (c.p00_cumsum(hi - a + 1) - c.p00_cumsum(max(lo, start) - a))
            i0, i1 = max(lo, b + 1), min(hi, start - 1)
            if i0 <= i1:
                total += band_cum[i1 - b] - band_cum[i0 - b - 1]
            out.append(total / (2 * T))
        return np.array(out)

    def shift_average(self, fn, moving, fixed, T_list):
        """Exact box averages; the cylinder measures factor over the chains."""
        T_list = [int(T) for T in T_list]
        moving = np.array([as_index(t, self.d) for t in moving], dtype=np.int64).reshape(-1, self.d)
        fixed = np.array([as_index(t, self.d) for t in fixed], dtype=np.int64).reshape(-1, self.d)
        k = len(moving) + len(fixed)
        masks, bits, _ = self._patterns(k)
        mB = np.empty((len(masks), len(T_list)))
        for i in range(len(masks)):
            sel = bits[i].astype(bool)
            mv, fx = moving[sel[: len(moving)]], fixed[sel[len(moving):]]
            prod = np.ones(len(T_list))
            for l in range(self.d):
                prod *= self._axis_average(l, mv[:, l], fx[:, l], T_list)
            mB[i] = prod
        return self._combine(fn, k, mB)

    def eval_spectral(self, t, s) -> float:
        """s is a tuple of d integer arrays holding x_l(-L..L)."""
        t = as_index(t, self.d)
        if len(s) != self.d:
            raise DimensionMismatch("path tuple has the wrong number of chains")
        for v in t:
            if abs(v) > self.L:
                raise TruncationEscape(t, "path", f"time {t} outside the path window [-{self.L}, {self.L}]")
        return float(all(np.asarray(p)[v + self.L] == 0 for p, v in zip(s, t)))

    def system(self) -> PathShiftAction:
        return self.action

    @property
    def default_horizons(self) -> list[int]:
        # null chains return like n^-1/2, so Cesaro averages need long boxes
        return [4 ** k for k in range(1, 11)]

    def default_T0(self) -> list[Index]:
        axes = [np.arange(-c.R, c.R + 1) if isinstance(c, LazyWalk) else np.arange(-4, 5) for c in self.chains]
        return [tuple(int(v) for v in p) for p in itertools.product(*axes)]

    def test_function(self, T0=None, a=None) -> PathTestFunction:
        return PathTestFunction.build(self.default_T0() if T0 is None else T0, a, self.d)

    def overlap_oracle(self, t) -> float:
        """prod_l pi_0 [P_l^|t_l|]_00 by explicit matrix powers."""
        t = as_index(t, self.d)
        out = 1.0
        for c, v in zip(self.chains, t):
            Pk = np.linalg.matrix_power(c.P, abs(v))
            out *= c.pi0 * Pk[c.zero_pos, c.zero_pos]
        return out

    def mixing_limit(self, direction) -> float:
        """lim_n ||f_{n v} ^ f_0|| along a direction with nonnegative entries."""
        v = as_index(direction, self.d)
        out = 1.0
        for c, k in zip(self.chains, v):
            if k == 0:
                out *= c.pi0
            elif c.recurrence == "null":
                return 0.0
            else:
                out *= c.pi0 * c.pi0 / c.pi.sum()
        return out

    def sampler(self, window: Window):
        from .simulate import MarkovSampler

        return MarkovSampler(self.chains, window)


def make_markov_field(chains: Sequence[MarkovChainSpec], alpha: float, kind: str = MAX_STABLE, L: int = 64):
    """Markov path-shift family plus an overlap oracle by matrix powers."""
    fam = MarkovFamily(chains, alpha, kind, L)
    return fam, fam.overlap_oracle
