"""Experiment configuration: YAML text validated against a closed schema.

Every violation is reported with the path to the offending key; unknown
keys come with a spelling suggestion.  ``alpha``, ``kind`` and ``seed`` have
no defaults.
"""

from __future__ import annotations

import difflib
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .spectral import MAX_STABLE, SUM_STABLE

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "load_config", "build_family"]


class ConfigError(ValueError):
    """All schema violations found in one config."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid config:\n" + "\n".join(f"  - {e}" for e in self.errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TableFamily(_Strict):
    states: list[Any]
    weights: list[float]
    f0: list[float]
    forward: list[list[int]] = Field(description="one index map per lattice axis; -1 leaves the truncation")
    step_weight: list[list[float]] | None = None
    step_sign: list[list[int]] | None = None


class FamilyConfig(_Strict):
    example: str | None = None
    params: dict[str, Any] = Field(default_factory=dict)
    table: TableFamily | None = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.example is None) == (self.table is None):
            raise ValueError("give exactly one of 'example' or 'table'")
        if self.table is not None and self.params:
            raise ValueError("'params' only applies to built-in examples")
        return self


class ClassifyConfig(_Strict):
    N: int | None = Field(None, ge=8, description="series horizon; default 64 or the family's own")
    powers: list[int] | None = None
    div_threshold: float = Field(1e3, gt=0)
    conv_tail_tol: float = Field(1e-8, gt=0)


class SimulateConfig(_Strict):
    T: int = Field(1, ge=1)
    n_paths: int = Field(1000, ge=1)
    mode: Literal["adaptive", "fixed"] = "adaptive"
    M: int = Field(2000, ge=10)
    compensate: bool = True


class DiagnoseConfig(_Strict):
    horizons: list[int] | None = None
    K: tuple[float, float] = (0.5, 2.0)
    eps: float = Field(0.5, gt=0)
    N: int = Field(64, ge=8)
    directions: list[list[int]] | None = None
    empirical: bool = True
    sample_T: int = Field(16, ge=1)
    n_paths: int = Field(2000, ge=2)
    expectation: Literal["vanishes", "persists"] | None = None


class ReportConfig(_Strict):
    inputs: list[str] = Field(min_length=1)


class ExperimentConfig(_Strict):
    family: FamilyConfig
    alpha: float
    kind: Literal["sum-stable", "max-stable"]
    seed: int = Field(ge=0)
    output_dir: str = "out"
    classify: ClassifyConfig = Field(default_factory=ClassifyConfig)
    simulate: SimulateConfig = Field(default_factory=SimulateConfig)
    diagnose: DiagnoseConfig = Field(default_factory=DiagnoseConfig)
    report: ReportConfig | None = None


def _fields_at(model: type[BaseModel], loc: tuple) -> list[str]:
    """Field names of the (sub)model that owns the location ``loc``."""
    cur: Any = model
    for part in loc:
        if not (isinstance(cur, type) and issubclass(cur, BaseModel)):
            return []
        f = cur.model_fields.get(part)
        if f is None:
            return []
        ann = f.annotation
        args = getattr(ann, "__args__", ())
        nxt = [a for a in (ann, *args) if isinstance(a, type) and issubclass(a, BaseModel)]
        cur = nxt[0] if nxt else None
    if isinstance(cur, type) and issubclass(cur, BaseModel):
        return list(cur.model_fields)
    return []


def _format(err: dict) -> str:
    loc = tuple(err["loc"])
    path = ".".join(str(p) for p in loc) or "<root>"
    if err["type"] == "extra_forbidden":
        known = _fields_at(ExperimentConfig, loc[:-1])
        close = difflib.get_close_matches(str(loc[-1]), known, n=1)
        hint = f"; did you mean '{close[0]}'?" if close else ""
        return f"{path}: unknown key{hint}"
    if err["type"] == "missing":
        return f"{path}: required key is missing"
    return f"{path}: {err['msg']}"


def _alpha_errors(data: dict) -> list[str]:
    alpha, kind = data.get("alpha"), data.get("kind")
    if not isinstance(alpha, (int, float)) or isinstance(alpha, bool):
        return []
    if kind == SUM_STABLE and not 0 < alpha < 2:
        return [f"alpha: sum-stable families need 0 < alpha < 2, got {alpha}"]
    if kind == MAX_STABLE and not alpha > 0:
        return [f"alpha: max-stable families need alpha > 0, got {alpha}"]
    return []


def parse_config(text: str) -> ExperimentConfig:
    """Validate YAML config text; raises :class:`ConfigError` listing every violation."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"<root>: not valid YAML ({exc})"]) from None
    if not isinstance(data, dict):
        raise ConfigError(["<root>: expected a mapping of keys to values"])
    errors = []
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        errors = [_format(e) for e in exc.errors()]
        cfg = None
    errors += _alpha_errors(data)
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def build_family(cfg: ExperimentConfig):
    """Family declared by the config plus its ground truth (None for explicit tables)."""
    from .measure_space import FiniteAction, StateSpace
    from .spectral import SpectralFamily
    from .zoo import make_example

    fam = cfg.family
    if fam.example is not None:
        return make_example(fam.example, alpha=cfg.alpha, kind=cfg.kind, **fam.params)
    t = fam.table
    states = tuple(tuple(s) if isinstance(s, list) else s for s in t.states)
    space = StateSpace(states, t.weights)
    action = FiniteAction(space, t.forward, t.step_weight, t.step_sign, name="table")
    return SpectralFamily(cfg.alpha, cfg.kind, t.f0, action, "table"), None
