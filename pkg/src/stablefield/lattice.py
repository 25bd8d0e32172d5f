"""Lattice indices and the averaging boxes B(T) = (-T, T]^d."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

Index = tuple[int, ...]


class DimensionMismatch(ValueError):
    pass


def as_index(t, d: int | None = None) -> Index:
    """Coerce an int or sequence of ints to a lattice index tuple."""
    if isinstance(t, (int, np.integer)):
        out = (int(t),)
    else:
        out = tuple(int(v) for v in t)
    if d is not None and len(out) != d:
        raise DimensionMismatch(f"index {out} has dimension {len(out)}, expected {d}")
    return out


def zero(d: int) -> Index:
    return (0,) * d


def add(u: Sequence[int], v: Sequence[int]) -> Index:
    return tuple(a + b for a, b in zip(u, v))


def neg(u: Sequence[int]) -> Index:
    return tuple(-a for a in u)


def sup_norm(t: Sequence[int]) -> int:
    return max((abs(v) for v in t), default=0)


def unit(d: int, axis: int, sign: int = 1) -> Index:
    e = [0] * d
    e[axis] = sign
    return tuple(e)


@dataclass(frozen=True)
class Window:
    """The box B(T) = (-T, T]^d with C(T) = (2T)^d lattice points."""

    T: int
    d: int
    indices: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.T < 1 or self.d < 1:
            raise ValueError("Window needs T >= 1 and d >= 1")
        axis = np.arange(-self.T + 1, self.T + 1)
        grid = np.stack(np.meshgrid(*([axis] * self.d), indexing="ij"), axis=-1)
        pts = grid.reshape(-1, self.d)
        pts.setflags(write=False)
        object.__setattr__(self, "indices", pts)

    @property
    def size(self) -> int:
        return (2 * self.T) ** self.d

    def __iter__(self):
        return (tuple(int(v) for v in row) for row in self.indices)

    def __len__(self) -> int:
        return self.size

    def position(self, t: Sequence[int]) -> int:
        """Row of ``t`` in :attr:`indices` (C order)."""
        t = as_index(t, self.d)
        pos = 0
        for v in t:
            if not -self.T < v <= self.T:
                raise KeyError(f"{t} outside B({self.T})")
            pos = pos * (2 * self.T) + (v + self.T - 1)
        return pos


def shell(d: int, r: int) -> list[Index]:
    """Lattice points with sup-norm exactly ``r``, in lexicographic order."""
    if r == 0:
        return [zero(d)]
    pts = []
    for t in itertools.product(range(-r, r + 1), repeat=d):
        if sup_norm(t) == r:
            pts.append(t)
    return pts


def box_average(values: Iterable[float], d: int, T: int) -> float:
    vals = np.fromiter(values, dtype=float)
    if vals.size != (2 * T) ** d:
        raise ValueError("wrong number of values for B(T)")
    return float(vals.mean())
