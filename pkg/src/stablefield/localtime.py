"""Discrete analog of the Brownian-sheet local-time field.

A random-walk sheet W_u = sum_{s <= u} xi_s (xi_s = +-1 iid, u in Z_+^d)
replaces the Brownian sheet and visit counts replace local time.  The
rectangular increment of l(x, u) = #{s <= u : W_s = x} at t is
Delta l(x, t) = 1{W_{t+1} = x}, so the kernel is f_t(w, x) = 1{W_{t+1}(w) = x}
with control measure (walk law) x (counting measure on levels).

This is an analog only: nothing here claims distributional fidelity to the
continuous construction.

Sheets are realized at the lattice points a computation needs.  Cell sums
over the grid spanned by those coordinates are binomial, so the sheet is
exact at every realized point.  Level probabilities are estimated by the
Monte Carlo mean over realizations of P(W_p = x | W_q), where q is the
previous grid point; the conditional law is binomial, which keeps the
estimate unbiased with much smaller variance than raw indicators.
"""

from __future__ import annotations

import itertools
import warnings
from typing import Sequence

import numpy as np
from scipy import special

from .lattice import Index, as_index, shell, unit, zero
from .markov import IndicatorFamily, PathTestFunction, central_binomial
from .measure_space import StateSpace
from .spectral import SUM_STABLE, default_weights, validate_alpha

__all__ = ["LocalTimeFamily", "LocalTimeSystem", "zero_sum_probability", "level_probability"]


def _log_binom(n, k):
    return special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)


def level_probability(n_steps, x) -> np.ndarray:
    """P(sum of n iid +-1 steps equals x), broadcasting over n and x."""
    n = np.asarray(n_steps, dtype=np.int64)
    x = np.asarray(x, dtype=np.int64)
    n, x = np.broadcast_arrays(n, x)
    twice_k = n + x
    ok = (np.abs(x) <= n) & (twice_k % 2 == 0)
    k = np.where(ok, twice_k // 2, 0)
    nn = np.where(ok, n, 0)
    return np.where(ok, np.exp(_log_binom(nn, k) - nn * np.log(2.0)), 0.0)


def zero_sum_probability(n_steps) -> np.ndarray:
    """P(n iid +-1 steps sum to 0) = C(n, n/2) / 2^n for even n, else 0."""
    n = np.asarray(n_steps, dtype=np.int64)
    ok = (n >= 0) & (n % 2 == 0)
    return np.where(ok, central_binomial(np.where(ok, n // 2, 0)), 0.0)


class LocalTimeSystem:
    """Coarse view for classification: states are levels x with counting measure."""

    def __init__(self, family: "LocalTimeFamily"):
        self.family = family
        self.d = family.d
        self.space = family.level_space

    def generators(self):
        return [unit(self.d, i, s) for i in range(self.d) for s in (1, -1)]

    def dual(self, g: PathTestFunction, t):
        """Monte Carlo mean of sum_tau a_tau Delta l(x, tau + t) per level x."""
        t = np.array(as_index(t, self.d))
        pts = g.offsets + t[None, :] + 1
        n = self.space.n
        if np.any(pts < 1):
            return np.zeros(n), np.ones(n, dtype=bool)
        vals = self.family.level_means(pts)
        return g.weights @ vals, np.zeros(n, dtype=bool)

    def is_invariant(self, mask):
        mask = np.asarray(mask, dtype=bool)
        return bool(mask.all() or not mask.any()), 0

    def find_weakly_wandering(self, candidates: Sequence[Index], N: int, tol: float = 1e-2):
        """Greedy translates of W = {f_0 = 1} (measure 1) overlapping by at most tol."""
        chosen: list[Index] = []
        for t in candidates:
            t = as_index(t, self.d)
            if chosen:
                pts = np.array([[t, s] for s in chosen], dtype=np.int64)
                if np.any(self.family.joint_measure(pts) > tol):
                    continue
            chosen.append(t)
            if len(chosen) >= N:
                return ("f_0=1",), chosen
        return None


class LocalTimeFamily(IndicatorFamily):
    """f_t(w, x) = 1{W_{t+1}(w) = x} on (walk sheets) x (levels)."""

    def __init__(self, d: int = 1, alpha: float = 1.0, kind: str = SUM_STABLE, level_range=None,
                 walk_horizon: int | None = None, L: int = 16, n_walks: int = 1000, seed: int = 0,
                 N: int = 16, T0_radius: int | None = None, increments: str = "symmetric"):
        if d < 1:
            raise ValueError("d must be >= 1")
        if increments not in ("symmetric", "deterministic"):
            raise ValueError("increments must be 'symmetric' or 'deterministic'")
        self.d = int(d)
        self.kind = kind
        self.alpha = validate_alpha(alpha, kind)
        self.name = f"local_time_analog(d={d})"
        r = T0_radius if T0_radius is not None else (15 if self.d == 1 else 3)
        if level_range is None:
            level_range = (-(r + 1), r + 1)
        lo, hi = int(level_range[0]), int(level_range[1])
        if lo > hi:
            raise ValueError("level_range must be (low, high) with low <= high")
        self.levels = np.arange(lo, hi + 1)
        self.level_space = StateSpace(tuple(int(x) for x in self.levels), np.ones(self.levels.size), False,
                                      "levels of the walk sheet, counting measure")
        self.n_walks = int(n_walks)
        self.seed = int(seed)
        self.N = int(N)
        self.L = int(L)
        self.increments = increments
        self.min_increment = 64
        self.power = max(1, 4 // self.d)
        self.T0 = [tuple(p) for p in itertools.product(range(r + 1), repeat=self.d)]
        pts = self._required_points()
        self.max_coordinate = int(pts.max())
        if walk_horizon is not None and walk_horizon < self.max_coordinate:
            raise ValueError(f"walk_horizon {walk_horizon} is below the largest needed time {self.max_coordinate}")
        self.walk_horizon = walk_horizon or self.max_coordinate
        self._build(pts)

    @property
    def default_horizons(self) -> list[int]:
        return [4 ** k for k in range(1, 10)] if self.d == 1 else [4 ** k for k in range(1, 7)]

    @property
    def max_horizon(self) -> int:
        return self.N

    @property
    def default_powers(self) -> tuple[int, ...]:
        return (self.power,)

    def _required_points(self) -> np.ndarray:
        ts = {zero(self.d)}
        dirs = [unit(self.d, i) for i in range(self.d)] + [(1,) * self.d]
        for n in range(1, self.N + 1):
            for v in dirs:
                for p in {1, self.power}:
                    ts.add(tuple(c * n ** p for c in v))
            ts.update(t for t in shell(self.d, n) if min(t) >= 0)
        for t in range(-self.L, self.L + 1):
            ts.add((abs(t),) * self.d)
        offs = np.array(self.T0)
        tt = np.array(sorted(ts))
        pts = (offs[None, :, :] + tt[:, None, :] + 1).reshape(-1, self.d)
        return np.unique(pts, axis=0)

    def _build(self, pts: np.ndarray):
        coords = [np.unique(np.concatenate([[0], pts[:, l]])) for l in range(self.d)]
        self._coords = coords
        sizes = [np.diff(c) for c in coords]
        cell = sizes[0]
        for s in sizes[1:]:
            cell = np.multiply.outer(cell, s)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed)))
        if self.increments == "symmetric":
            B = rng.binomial(cell[None, ...].astype(np.int64), 0.5, size=(self.n_walks,) + cell.shape)
            sums = 2 * B - cell[None, ...]
        else:
            sums = np.broadcast_to(cell[None, ...], (self.n_walks,) + cell.shape).astype(np.int64)
        W = sums
        for ax in range(1, self.d + 1):
            W = np.cumsum(W, axis=ax)
        pad = [(0, 0)] + [(1, 0)] * self.d
        self._W = np.pad(W, pad)  # W at grid coordinates including 0
        self._cache: dict[tuple, np.ndarray] = {}
        reach = max(max(t) for t in self.T0) + 1
        if self.increments == "symmetric" and (self.levels[0] > -reach or self.levels[-1] < reach):
            warnings.warn(f"level_range [{self.levels[0]}, {self.levels[-1]}] does not cover the levels "
                          f"[-{reach}, {reach}] reachable at the test-function points", UserWarning, stacklevel=3)

    def _grid_index(self, p: Sequence[int]) -> tuple:
        idx = []
        for l, v in enumerate(p):
            k = int(np.searchsorted(self._coords[l], v))
            if k >= self._coords[l].size or self._coords[l][k] != v:
                raise KeyError(f"sheet point {tuple(p)} was not realized; enlarge N or T0")
            idx.append(k)
        return tuple(idx)

    def level_means(self, pts: np.ndarray) -> np.ndarray:
        """Matrix [i, x] = Monte Carlo estimate of P(W_{pts[i]} = x)."""
        out = np.empty((len(pts), self.levels.size))
        for i, p in enumerate(pts):
            key = tuple(int(v) for v in p)
            if key not in self._cache:
                gi = self._grid_index(key)
                here_size = int(np.prod([self._coords[l][k] for l, k in enumerate(gi)]))
                # step back along the grid diagonal until the increment has
                # at least min_increment steps (or the origin is reached)
                back = 1
                while True:
                    prev = tuple(max(k - back, 0) for k in gi)
                    prev_size = int(np.prod([self._coords[l][k] for l, k in enumerate(prev)]))
                    if here_size - prev_size >= self.min_increment or prev_size == 0:
                        break
                    back += 1
                base = self._W[(slice(None),) + prev]
                n_inc = here_size - prev_size
                if self.increments == "symmetric":
                    probs = level_probability(n_inc, self.levels[None, :] - base[:, None])
                else:
                    probs = (self.levels[None, :] == (base + n_inc)[:, None]).astype(float)
                self._cache[key] = probs.mean(axis=0)
            out[i] = self._cache[key]
        return out

    def exact_level_probability(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.int64)
        n = np.prod(pts, axis=1)
        if self.increments == "deterministic":
            return (self.levels[None, :] == n[:, None]).astype(float)
        return level_probability(n[:, None], self.levels[None, :])

    def system(self) -> LocalTimeSystem:
        return LocalTimeSystem(self)

    def default_T0(self) -> list[Index]:
        return list(self.T0)

    def test_function(self, T0=None, a=None) -> PathTestFunction:
        T0 = self.default_T0() if T0 is None else [as_index(t, self.d) for t in T0]
        if any(min(t) < 0 for t in T0):
            raise ValueError("T0 must lie in Z_+^d for the sheet analog")
        a = default_weights(T0) if a is None else np.asarray(a, dtype=float)
        return PathTestFunction(np.array(T0), a)

    def _lag_probability(self, u: np.ndarray) -> np.ndarray:
        """P(W_{p+1} = W_{q+1}) for the pair translated into Z_+^d, a function of u = p - q.

        With the translation, p' = u^+ and q' = u^-; the difference of the two
        sheet values sums +-1 over the symmetric difference of [1, p'+1] and
        [1, q'+1], of size prod(u^+ + 1) + prod(u^- + 1) - 2.
        """
        up = np.maximum(u, 0) + 1
        un = np.maximum(-u, 0) + 1
        sym = np.prod(up, axis=-1) + np.prod(un, axis=-1) - 2
        if self.increments == "deterministic":
            return (sym == 0).astype(float)
        return zero_sum_probability(sym)

    def joint_measure(self, points):
        """mu(f_p = f_q = 1) = P(W_{p+1} = W_{q+1}) summed over all levels (untruncated).

        Index tuples are translated into Z_+^d before evaluation, the
        extension in law of a field given on the orthant.
        """
        points = np.asarray(points, dtype=np.int64)
        k = points.shape[1]
        if k == 1:
            return np.ones(points.shape[0])
        if k != 2:
            raise NotImplementedError("the sheet analog supports integrals of at most two kernels")
        return self._lag_probability(points[:, 0, :] - points[:, 1, :])

    def _prob(self, sym: np.ndarray) -> np.ndarray:
        if self.increments == "deterministic":
            return (np.asarray(sym) == 0).astype(float)
        return zero_sum_probability(sym)

    def _lag_box_sums(self, c, T_list) -> np.ndarray:
        """sum of the d = 2 pair measure over u = t + c, t in B(T), for each T.

        Where u_1 u_2 <= 0 the measure is P(|u_1| + |u_2|), summed with a 1-d
        cumulative table; where u_1 u_2 >= 0 it is P((|u_1|+1)(|u_2|+1) - 1),
        which vanishes unless both |u_i| are even, summed with a 2-d prefix
        table on the even grid.
        """
        Tm = max(T_list)
        R = Tm + int(np.abs(c).max()) + 1
        F = np.concatenate([[0.0], np.cumsum(self._prob(np.arange(2 * R + 2)))])  # F[n] = sum_{s < n} P(s)
        ev = np.arange(0, R + 1, 2)
        G = self._prob((ev[:, None] + 1) * (ev[None, :] + 1) - 1)
        G = np.pad(G.cumsum(0).cumsum(1), ((1, 0), (1, 0)))

        def same(x0, x1, y0, y1):
            if x0 > x1 or y0 > y1:
                return 0.0
            i0, i1, j0, j1 = (x0 + 1) // 2, x1 // 2, (y0 + 1) // 2, y1 // 2
            if i0 > i1 or j0 > j1:
                return 0.0
            return G[i1 + 1, j1 + 1] - G[i0, j1 + 1] - G[i1 + 1, j0] + G[i0, j0]

        def mixed(x0, x1, y0, y1):
            if x0 > x1 or y0 > y1:
                return 0.0
            x = np.arange(x0, x1 + 1)
            return float((F[x + y1 + 1] - F[x + y0]).sum())

        out = []
        for T in T_list:
            (a1, b1), (a2, b2) = [(-T + 1 + int(ci), T + int(ci)) for ci in c]
            pos1, neg1 = (max(a1, 0), b1), (max(-b1, 1), -a1)
            pos2, neg2 = (max(a2, 0), b2), (max(-b2, 1), -a2)
            out.append(same(*pos1, *pos2) + same(*neg1, *neg2) + mixed(*pos1, *neg2) + mixed(*neg1, *pos2))
        return np.array(out)

    def shift_average(self, fn, moving, fixed, T_list):
        """Box averages; in d = 2 the pair measure is summed in closed form over quadrants."""
        moving = [as_index(t, self.d) for t in moving]
        fixed = [as_index(t, self.d) for t in fixed]
        if len(moving) + len(fixed) > 2:
            raise NotImplementedError("the sheet analog supports integrals of at most two kernels")
        if self.d != 2 or len(moving) != 1 or len(fixed) != 1:
            return super().shift_average(fn, moving, fixed, T_list)
        T_list = [int(T) for T in T_list]
        c = np.subtract(moving[0], fixed[0])
        masks, bits, _ = self._patterns(2)
        mB = np.ones((len(masks), len(T_list)))
        mB[bits.sum(1) == 2] = self._lag_box_sums(c, T_list) / np.array([4.0 * T * T for T in T_list])
        return self._combine(fn, 2, mB)

    def gaussian_weighted_sum(self, g: PathTestFunction, ts: Sequence[Index]) -> np.ndarray:
        """Cumulative sum over n of sum_x e^{-x^2/2} (dual at t_n)(x)."""
        sysm = self.system()
        wts = np.exp(-self.levels.astype(float) ** 2 / 2)
        return np.cumsum([wts @ sysm.dual(g, t)[0] for t in ts])

    @staticmethod
    def ceiling(N: int) -> float:
        n = np.arange(1, N + 1, dtype=float)
        return float(np.sum(1 / np.sqrt(1 + n ** 4)))
