"""Monte Carlo field samples from the extremal and LePage series representations.

Atoms S_i are drawn from a proposal Q on the union of the supports of f_t
over the window, carrying the density rho = d mu / d Q so that

    Y_t = sup_i Gamma_i^{-1/alpha} rho(S_i)^{1/alpha} f_t(S_i)
    X_t = C_alpha^{1/alpha} sum_i eps_i Gamma_i^{-1/alpha} rho(S_i)^{1/alpha} f_t(S_i)

Every path owns a counter-based stream derived from (seed, path index), so
samples do not depend on how paths are split across workers.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special, stats

from .lattice import Window
from .spectral import MAX_STABLE, SUM_STABLE, BaseFamily

__all__ = [
    "rng_stream",
    "stable_constant",
    "FieldSample",
    "TableSampler",
    "MarkovSampler",
    "simulate_max_stable",
    "simulate_sum_stable",
    "ecf",
    "frechet_cdf",
    "ks_frechet",
    "worker_count",
]

WORKERS_ENV = "STABLEFIELD_WORKERS"


def worker_count(workers: int | None = None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, int(workers))


def rng_stream(seed: int, path_index: int) -> np.random.Generator:
    """Independent reproducible stream for one path (Philox keyed by a spawned seed sequence)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.Philox(ss))


def stable_constant(alpha: float) -> float:
    """C_alpha of the LePage series: (1-alpha)/(Gamma(2-alpha) cos(pi alpha/2)), 2/pi at alpha = 1."""
    if not 0 < alpha < 2:
        raise ValueError("C_alpha is defined for 0 < alpha < 2")
    if abs(alpha - 1) < 1e-12:
        return 2 / math.pi
    return (1 - alpha) / (special.gamma(2 - alpha) * math.cos(math.pi * alpha / 2))


def frechet_cdf(x, sigma_alpha: float, alpha: float):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(x > 0, np.exp(-sigma_alpha * np.power(np.maximum(x, 1e-300), -alpha)), 0.0)


def ks_frechet(values, sigma_alpha: float, alpha: float) -> float:
    return float(stats.kstest(np.asarray(values), lambda x: frechet_cdf(x, sigma_alpha, alpha)).statistic)


def ecf(values, theta: float) -> float:
    """Real part of the empirical characteristic function (the law is symmetric)."""
    return float(np.mean(np.cos(theta * np.asarray(values))))


# ---------------------------------------------------------------------------
# atom samplers


class TableSampler:
    """Atoms from mu restricted to the states touched by the window."""

    def __init__(self, table: np.ndarray, weights: np.ndarray, escapes: int = 0):
        touched = np.any(table != 0, axis=1)
        if not touched.any():
            raise ValueError("every f_t vanishes on the window")
        self.table = np.ascontiguousarray(table[touched])
        w = np.asarray(weights, dtype=float)[touched]
        self.mass = float(w.sum())
        self.cum = np.cumsum(w / self.mass)
        self.cum[-1] = 1.0
        self.probs = w / self.mass
        self.rho_max = self.mass
        self.f_max = float(np.abs(self.table).max())
        self.escapes = int(escapes)
        self.live = np.any(self.table != 0, axis=0)
        rows, cols = np.nonzero(self.table)
        self._indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=self.table.shape[0]))])
        self._cols = cols
        self._nz = self.table[rows, cols]

    def draw(self, rng: np.random.Generator, k: int):
        return (np.searchsorted(self.cum, rng.random(k), side="right").clip(0, self.cum.size - 1),)

    def evaluate(self, atoms):
        idx = atoms[0]
        return self.table[idx], np.full(idx.size, self.mass)

    def max_into(self, Y, owner, atoms, scale, inv):
        """Y[owner_i, t] = max(Y[owner_i, t], scale_i rho_i^{1/alpha} f_t(S_i)) using the sparse table."""
        idx = atoms[0]
        starts = self._indptr[idx]
        counts = self._indptr[idx + 1] - starts
        rep = np.repeat(np.arange(idx.size), counts)
        pos = np.arange(counts.sum()) + np.repeat(starts - (np.cumsum(counts) - counts), counts)
        w = scale * self.mass ** inv
        np.maximum.at(Y.reshape(-1), owner[rep] * Y.shape[1] + self._cols[pos], w[rep] * self._nz[pos])

    def second_moment(self, alpha: float) -> np.ndarray:
        """E_Q[rho^{2/alpha} f_t f_t'] over the window."""
        F = self.table * np.sqrt(self.probs)[:, None]
        return self.mass ** (2 / alpha) * (F.T @ F)

    def describe(self) -> dict:
        return {"sampler": "table", "support_states": int(self.table.shape[0]), "mass": self.mass}


class MarkovSampler:
    """Path atoms for Markov path-shift families.

    With only positive chains the path measure is a probability and atoms
    are stationary paths.  Otherwise an anchor time a is drawn uniformly in
    the window, x_l(a_l) = 0 is imposed and the chains run forward and
    backward from there; the density of mu against this proposal on the
    union of supports is C(T) prod_l pi_0^(l) / prod_l N_l(x), N_l being the
    number of visits of chain l to 0 inside the window.
    """

    def __init__(self, chains, window: Window):
        self.chains = list(chains)
        self.window = window
        self.n = 2 * window.T
        self.direct = all(c.finite_mass for c in self.chains)
        self.pi0 = float(np.prod([c.pi0 for c in self.chains]))
        if self.direct:
            self.rho_max = float(np.prod([c.pi.sum() for c in self.chains]))
        else:
            self.rho_max = window.size * self.pi0
        self.f_max = 1.0
        self.escapes = 0
        self.live = np.ones(window.size, dtype=bool)
        self.mass = float("inf") if not self.direct else self.rho_max

    def draw(self, rng, k):
        out = []
        for c in self.chains:
            if self.direct:
                out += [rng.random(k), rng.random((k, self.n - 1))]
            else:
                out += [rng.integers(0, self.n, k), rng.random((k, self.n - 1)), rng.random((k, self.n - 1))]
        return tuple(out)

    def _paths(self, atoms):
        paths, j = [], 0
        for c in self.chains:
            if self.direct:
                start = c.stationary_start(atoms[j])
                paths.append(c.walk(start, atoms[j + 1]))
                j += 2
            else:
                a, uf, ub = atoms[j], atoms[j + 1], atoms[j + 2]
                z = np.full(a.size, c.zero_pos)
                fwd = c.walk(z, uf)
                bwd = c.walk(z, ub, reverse=True)
                lag = np.arange(self.n)[None, :] - a[:, None]
                rows = np.arange(a.size)[:, None]
                paths.append(np.where(lag >= 0, fwd[rows, np.maximum(lag, 0)], bwd[rows, np.maximum(-lag, 0)]))
                j += 3
        return paths

    def evaluate(self, atoms):
        paths = self._paths(atoms)
        ind = [(c.labels[p] == 0).astype(float) for c, p in zip(self.chains, paths)]
        vals = ind[0]
        for extra in ind[1:]:
            vals = (vals[:, :, None] * extra[:, None, :]).reshape(vals.shape[0], -1)
        if self.direct:
            rho = np.full(vals.shape[0], self.rho_max)
        else:
            visits = np.prod([i.sum(axis=1) for i in ind], axis=0)
            rho = self.window.size * self.pi0 / visits
        return vals, rho

    def max_into(self, Y, owner, atoms, scale, inv):
        vals, rho = self.evaluate(atoms)
        contrib = (scale * rho ** inv)[:, None] * vals
        starts = np.flatnonzero(np.concatenate([[True], owner[1:] != owner[:-1]]))
        rows = owner[starts]
        Y[rows] = np.maximum(Y[rows], np.maximum.reduceat(contrib, starts, axis=0))

    def second_moment(self, alpha):
        return None

    def describe(self) -> dict:
        return {"sampler": "markov_direct" if self.direct else "markov_anchored",
                "chains": [c.name for c in self.chains]}


# ---------------------------------------------------------------------------


@dataclass
class FieldSample:
    kind: str
    alpha: float
    window: Window
    paths: np.ndarray
    seed: int
    truncation: int | str
    escape_count: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.paths.ndim != 2 or self.paths.shape[1] != self.window.size:
            raise ValueError("paths must have shape (n_paths, C(T))")

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    def column(self, t) -> np.ndarray:
        return self.paths[:, self.window.position(t)]

    def to_csv(self, path) -> None:
        """Rows ``path,t_1,...,t_d,value``; metadata goes to a JSON sidecar."""
        path = Path(path)
        d = self.window.d
        n, C = self.paths.shape
        header = "path," + ",".join(f"t_{i + 1}" for i in range(d)) + ",value"
        pid = np.repeat(np.arange(n), C)
        idx = np.tile(self.window.indices, (n, 1))
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for i in range(0, n * C, 65536):
                sl = slice(i, min(n * C, i + 65536))
                block = [f"{p}," + ",".join(map(str, row)) + f",{v!r}"
                         for p, row, v in zip(pid[sl].tolist(), idx[sl].tolist(), self.paths.reshape(-1)[sl].tolist())]
                fh.write("\n".join(block) + "\n")
        meta = dict(kind=self.kind, alpha=self.alpha, T=self.window.T, d=d, n_paths=n, seed=self.seed,
                    truncation=self.truncation, escape_count=self.escape_count, **self.metadata)
        path.with_suffix(path.suffix + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _chunks(n: int, size: int):
    return [(i, min(n, i + size)) for i in range(0, n, size)]


def _run_chunks(fn, n_paths: int, chunk: int, workers: int):
    spans = _chunks(n_paths, chunk)
    if workers <= 1 or len(spans) == 1:
        parts = [fn(a, b) for a, b in spans]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda ab: fn(*ab), spans))
    return np.concatenate(parts, axis=0)


def _concat(atom_list):
    return tuple(np.concatenate([a[j] for a in atom_list], axis=0) for j in range(len(atom_list[0])))


def simulate_max_stable(family: BaseFamily, window: Window, n_paths: int, seed: int, mode="adaptive",
                        batch: int = 32, workers: int | None = None, max_atoms: int = 1_000_000,
                        chunk: int = 1024) -> FieldSample:
    """Y_t = sup_i Gamma_i^{-1/alpha} rho_i^{1/alpha} f_t(S_i) over the window.

    ``mode="adaptive"`` stops a path once no later atom can beat the running
    minimum over the window, which makes the window law exact.  An integer
    mode uses exactly that many atoms and records the largest contribution
    the dropped tail could still make.
    """
    if family.kind != MAX_STABLE:
        raise ValueError("simulate_max_stable needs a max-stable family")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    adaptive = mode == "adaptive"
    if not adaptive:
        M = int(mode)
        if M < 1:
            raise ValueError("M must be >= 1")
    sampler = family.sampler(window)
    if not adaptive and not np.isfinite(getattr(sampler, "mass", 1.0)) and not hasattr(sampler, "rho_max"):
        raise ValueError("infinite mass")
    alpha = family.alpha
    inv = 1.0 / alpha
    bound = (sampler.rho_max ** inv) * sampler.f_max
    live = sampler.live
    C = window.size
    tail_bounds = np.zeros(n_paths)

    def run(a, b):
        k = b - a
        rngs = [rng_stream(seed, i) for i in range(a, b)]
        Y = np.zeros((k, C))
        gam = np.zeros(k)
        used = np.zeros(k, dtype=np.int64)
        rounds = 0
        active = np.ones(k, dtype=bool)
        while active.any():
            ids = np.flatnonzero(active)
            # batches double each round; atoms past the stopping point cannot change Y
            size = min(batch << rounds, 4096)
            sizes = [size if adaptive else min(size, M - int(used[i])) for i in ids]
            gam_rows, atoms = [], []
            for i, m in zip(ids, sizes):
                g = gam[i] + np.cumsum(rngs[i].standard_exponential(m))
                gam_rows.append(g)
                atoms.append(sampler.draw(rngs[i], m))
            owner = np.repeat(ids, sizes)
            sampler.max_into(Y, owner, _concat(atoms), np.concatenate(gam_rows) ** -inv, inv)
            for i, m, g in zip(ids, sizes, gam_rows):
                gam[i] = g[-1]
                used[i] += m
                nxt = gam[i] ** -inv * bound
                if adaptive:
                    floor = Y[i][live].min() if live.any() else 0.0
                    if (floor > 0 and nxt < floor) or used[i] >= max_atoms:
                        active[i] = False
                elif used[i] >= M:
                    tail_bounds[a + i] = nxt
                    active[i] = False
            rounds += 1
        return Y

    paths = _run_chunks(run, n_paths, chunk, worker_count(workers))
    meta = dict(family=family.name, sigma0_alpha=float(family.base_scale), mode="adaptive" if adaptive else "fixed",
                sampler=sampler.describe())
    if not adaptive:
        meta["truncation_bound"] = float(tail_bounds.max())
    return FieldSample(MAX_STABLE, alpha, window, paths, int(seed), "adaptive" if adaptive else M,
                       getattr(sampler, "escapes", 0), meta)


def simulate_sum_stable(family: BaseFamily, window: Window, n_paths: int, seed: int, M: int = 2000,
                        compensate: bool = True, workers: int | None = None, chunk: int = 256) -> FieldSample:
    """LePage series with M atoms plus a Gaussian stand-in for the dropped tail.

    The tail sum_{i > M} eps_i Gamma_i^{-1/alpha} W_i has covariance close to
    C_alpha^{2/alpha} Gamma_M^{1-2/alpha} / (2/alpha - 1) E[W W^T]; it is
    replaced by a Gaussian vector with that covariance when the sampler can
    supply the second moment.
    """
    if family.kind != SUM_STABLE:
        raise ValueError("simulate_sum_stable needs a sum-stable family")
    alpha = family.alpha
    if not 0 < alpha < 2:
        raise ValueError("alpha must lie in (0, 2)")
    if M < 10:
        raise ValueError("M must be >= 10")
    sampler = family.sampler(window)
    c_alpha = stable_constant(alpha)
    inv = 1.0 / alpha
    K = sampler.second_moment(alpha) if compensate else None
    root = None
    if K is not None:
        vals, vecs = np.linalg.eigh(K)
        root = vecs * np.sqrt(np.clip(vals, 0, None))[None, :]
    C = window.size

    def run(a, b):
        k = b - a
        gams, signs, atoms, z = [], [], [], []
        for i in range(a, b):
            rng = rng_stream(seed, i)
            gams.append(np.cumsum(rng.standard_exponential(M)))
            signs.append(rng.choice(np.array([-1.0, 1.0]), M))
            atoms.append(sampler.draw(rng, M))
            if root is not None:
                z.append(rng.standard_normal(C))
        vals, rho = sampler.evaluate(_concat(atoms))
        coef = (np.concatenate(signs) * np.concatenate(gams) ** -inv * rho ** inv)[:, None] * vals
        X = c_alpha ** inv * coef.reshape(k, M, C).sum(axis=1)
        if root is not None:
            gm = np.array([g[-1] for g in gams])
            tail_var = c_alpha ** (2 * inv) * gm ** (1 - 2 * inv) / (2 * inv - 1)
            X += np.sqrt(tail_var)[:, None] * (np.array(z) @ root.T)
        return X

    paths = _run_chunks(run, n_paths, chunk, worker_count(workers))
    meta = dict(family=family.name, sigma0_alpha=float(family.base_scale), C_alpha=c_alpha,
                tail_compensation=root is not None, bias_order=f"M^(1-2/alpha) = {M ** (1 - 2 * inv):.3g}",
                sampler=sampler.describe())
    return FieldSample(SUM_STABLE, alpha, window, paths, int(seed), int(M), getattr(sampler, "escapes", 0), meta)
