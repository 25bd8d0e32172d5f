"""Built-in reference families with declared ground truth."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .markov import LazyWalk, MarkovFamily, two_state_lazy
from .measure_space import (
    StateSpace,
    cyclic_action,
    disjoint_union_action,
    identity_action,
    zshift_action,
)
from .spectral import MAX_STABLE, BaseFamily, SpectralFamily

__all__ = ["Truth", "make_reference", "make_example", "EXAMPLES", "REFERENCE_KINDS", "list_examples"]


@dataclass(frozen=True)
class Truth:
    cls: str  # positive | null | mixed
    ergodic: bool
    weakly_mixing: bool
    mixing: bool

    def as_dict(self) -> dict:
        return asdict(self)


REFERENCE_KINDS = ("cyclic_positive", "zshift_null_moving", "identity_nonergodic", "product_split")


def _cyclic(alpha, kind, m=4, weight=1.0):
    act = cyclic_action(m, np.full(m, float(weight)))
    f0 = np.zeros(m)
    f0[0] = 1.0
    return SpectralFamily(alpha, kind, f0, act, f"cyclic_positive(m={m})"), Truth("positive", False, False, False)


def _zshift(alpha, kind, width=1, half_width=300):
    act = zshift_action(half_width, "counting")
    f0 = np.array([1.0 if 0 <= k < width else 0.0 for k in act.space.states])
    return (SpectralFamily(alpha, kind, f0, act, f"zshift_null_moving(width={width})"),
            Truth("null", True, True, True))


def _identity(alpha, kind, n_states=1):
    space = StateSpace(tuple(range(n_states)), np.ones(n_states))
    act = identity_action(space, 1)
    return SpectralFamily(alpha, kind, np.ones(n_states), act, "identity_nonergodic"), Truth("positive", False, False, False)


def _product_split(alpha, kind, m=4, cyclic_weight=3.0, half_width=300):
    cyc = cyclic_action(m, np.full(m, float(cyclic_weight)))
    z = zshift_action(half_width, "counting")
    act = disjoint_union_action([("cyc", cyc), ("z", z)])
    f0 = np.array([1.0 if s in (("cyc", 0), ("z", 0)) else 0.0 for s in act.space.states])
    return SpectralFamily(alpha, kind, f0, act, "product_split"), Truth("mixed", False, False, False)


_BUILDERS: dict[str, Callable] = {
    "cyclic_positive": _cyclic,
    "zshift_null_moving": _zshift,
    "identity_nonergodic": _identity,
    "product_split": _product_split,
}


def make_reference(kindred: str, params: dict | None = None, alpha: float = 1.0, kind: str = MAX_STABLE):
    """Reference family plus its ground-truth record."""
    if kindred not in _BUILDERS:
        raise KeyError(f"unknown reference kind {kindred!r}; choose from {sorted(_BUILDERS)}")
    params = dict(params or {})
    try:
        return _BUILDERS[kindred](alpha, kind, **params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {kindred}: {exc}") from None


def _markov(alpha, kind, chains="null", R=200, L=64):
    names = [c.strip() for c in chains.split(",")] if isinstance(chains, str) else list(chains)
    specs = []
    for c in names:
        if c == "null":
            specs.append(LazyWalk(R))
        elif c == "positive":
            specs.append(two_state_lazy())
        else:
            raise ValueError(f"chain must be 'null' or 'positive', got {c!r}")
    fam = MarkovFamily(specs, alpha, kind, L)
    is_null = any(c == "null" for c in names)
    all_null = all(c == "null" for c in names)
    truth = Truth("null" if is_null else "positive", is_null, is_null, all_null)
    return fam, truth


def _local_time(alpha, kind, d=1, **kw):
    from .localtime import LocalTimeFamily

    return LocalTimeFamily(d=d, alpha=alpha, kind=kind, **kw), Truth("null", True, True, True)


EXAMPLES = {
    "cyclic_positive": lambda a, k, **p: make_reference("cyclic_positive", p, a, k),
    "zshift_null_moving": lambda a, k, **p: make_reference("zshift_null_moving", p, a, k),
    "identity_nonergodic": lambda a, k, **p: make_reference("identity_nonergodic", p, a, k),
    "product_split": lambda a, k, **p: make_reference("product_split", p, a, k),
    "markov": _markov,
    "local_time": _local_time,
}


def make_example(name: str, alpha: float = 1.0, kind: str = MAX_STABLE, **params) -> tuple[BaseFamily, Truth]:
    if name not in EXAMPLES:
        raise KeyError(f"unknown example {name!r}; choose from {sorted(EXAMPLES)}")
    return EXAMPLES[name](alpha, kind, **params)


def list_examples() -> list[str]:
    return sorted(EXAMPLES)
