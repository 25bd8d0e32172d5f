"""Command line front end: ``stablefield {classify,simulate,diagnose,report,example} ...``.

Exit codes: 0 success, 1 error, 2 when a diagnosed verdict contradicts the
config's ``diagnose.expectation``.  A manifest is written on every run.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path
from typing import Sequence

import yaml


from . import diagnostics as dg
from .classification import classify, find_weakly_wandering, ray
from .config import ConfigError, ExperimentConfig, build_family, load_config
from .io import Manifest, read_table, write_json, write_table
from .lattice import Window, unit, zero
from .simulate import simulate_max_stable, simulate_sum_stable
from .spectral import MAX_STABLE
from .zoo import list_examples

EXIT_OK, EXIT_ERROR, EXIT_EXPECTATION = 0, 1, 2


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name.replace("-", "m")).strip("_")


def _directions(cfg: ExperimentConfig, d: int) -> list:
    if cfg.diagnose.directions:
        dirs = [tuple(v) for v in cfg.diagnose.directions]
        if any(len(v) != d for v in dirs):
            raise ValueError(f"diagnose.directions must have {d} entries each")
        return dirs
    dirs = [unit(d, i) for i in range(d)]
    return dirs + ([(1,) * d] if d > 1 else [])


# ---------------------------------------------------------------------------
# pipelines


def run_classify(cfg: ExperimentConfig, family, truth, out: Path, manifest: Manifest) -> dict:
    c = cfg.classify
    rep = classify(family, N=c.N, powers=c.powers, div_threshold=c.div_threshold, conv_tail_tol=c.conv_tail_tol)
    rows = rep.rows()
    manifest.add(write_table(out / "classification.csv", rows,
                             ["state", "verdict", "best_sequence", "final_sum", "escape_count", "boundary"]))
    ww = find_weakly_wandering(family.system())
    summary = rep.summary()
    summary["weakly_wandering"] = None if ww is None else {"W": [str(s) for s in ww.W],
                                                           "sequence": [list(t) for t in ww.sequence]}
    summary["family"] = family.name
    if truth is not None:
        summary["declared_truth"] = truth.as_dict()
    manifest.add(write_json(out / "classification.json", summary))
    return summary


def _simulate(cfg: ExperimentConfig, family, T: int, n_paths: int):
    win = Window(T, family.d)
    s = cfg.simulate
    if family.kind == MAX_STABLE:
        return simulate_max_stable(family, win, n_paths, cfg.seed, "adaptive" if s.mode == "adaptive" else s.M)
    return simulate_sum_stable(family, win, n_paths, cfg.seed, M=s.M, compensate=s.compensate)


def run_simulate(cfg: ExperimentConfig, family, out: Path, manifest: Manifest):
    sample = _simulate(cfg, family, cfg.simulate.T, cfg.simulate.n_paths)
    path = out / "sample.csv"
    sample.to_csv(path)
    manifest.add(path)
    manifest.add(str(path) + ".meta.json")
    return sample


def _write_series(series, out: Path, manifest: Manifest, rows: list):
    sdir = out / "series"
    sdir.mkdir(exist_ok=True)
    path = sdir / f"{_safe(series.name)}.csv"
    series.to_csv(path)
    manifest.add(path)
    rows.append(dict(name=series.name, verdict=series.verdict, final=series.final,
                     limit_estimate=series.limit_estimate, vanish_tol=series.vanish_tol))


def run_diagnose(cfg: ExperimentConfig, family, out: Path, manifest: Manifest) -> str:
    """Full criterion battery; returns the ergodicity verdict."""
    dcfg = cfg.diagnose
    rows: list[dict] = []
    seqs = [ray(v, 1) for v in _directions(cfg, family.d)]
    if family.kind == MAX_STABLE:
        primary, battery = dg.max_ergodicity_battery(family, dcfg.horizons, seed=cfg.seed)
        for s in battery:
            _write_series(s, out, manifest, rows)
        for s in dg.max_mixing(family, seqs, dcfg.N).values():
            _write_series(s, out, manifest, rows)
    else:
        g = dg.gross_weak_mixing(family, dcfg.K, dcfg.eps, dcfg.horizons, seqs, dcfg.N)
        primary = g.verdict
        _write_series(g, out, manifest, rows)
        for s in g.extra.get("mixing", {}).values():
            _write_series(s, out, manifest, rows)
    if dcfg.empirical:
        sample = _simulate(cfg, family, dcfg.sample_T, dcfg.n_paths)
        for mode in ("ergodic", "weak_mixing"):
            _write_series(dg.empirical_cesaro(sample, mode=mode), out, manifest, rows)
        if family.kind == MAX_STABLE:
            grid = dg.association_grid(sample, zero(family.d), unit(family.d, 0))
            manifest.add(write_table(out / "association.csv",
                                     [dict(x=x, y=y, cov=c, se=se, ok=c >= -3 * se) for x, y, c, se in grid],
                                     ["x", "y", "cov", "se", "ok"]))
    rows.append(dict(name="ergodicity", verdict=primary))
    manifest.add(write_table(out / "diagnose.csv", rows, ["name", "verdict", "final", "limit_estimate", "vanish_tol"]))
    return primary


def run_report(cfg: ExperimentConfig, out: Path, manifest: Manifest):
    rows = []
    for src in cfg.report.inputs:
        src = Path(src)
        if not src.is_dir():
            raise FileNotFoundError(f"report input {src} is not a directory")
        cls = src / "classification.json"
        if cls.exists():
            rows.append(dict(source=str(src), name="classification",
                             verdict=json.loads(cls.read_text())["global_verdict"]))
        diag = src / "diagnose.csv"
        if diag.exists():
            for r in read_table(diag):
                rows.append(dict(source=str(src), **r))
    if not rows:
        raise FileNotFoundError("no classification.json or diagnose.csv found in the report inputs")
    manifest.add(write_table(out / "report.csv", rows,
                             ["source", "name", "verdict", "final", "limit_estimate", "vanish_tol"]))


# ---------------------------------------------------------------------------


def _coerce(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return {"true": True, "false": False}.get(v.lower(), v)


def example_config(name: str, tokens: Sequence[str], out: str) -> dict:
    """Config dict for ``example run``: alpha 1, max-stable, seed 0 unless given as key=value."""
    params, top = {}, {"alpha": 1.0, "kind": MAX_STABLE, "seed": 0}
    for tok in tokens:
        if "=" in tok:
            k, v = tok.split("=", 1)
            if k in top:
                top[k] = _coerce(v)
            else:
                params[k] = _coerce(v)
        elif name == "markov":
            params["chains"] = tok
        else:
            raise ValueError(f"cannot interpret argument {tok!r}; use key=value")
    if name == "markov" and "d" in params:
        d = params.pop("d")
        chains = str(params.get("chains", "null")).split(",")
        if len(chains) != d:
            raise ValueError(f"d={d} but {len(chains)} chains were given")
    return {"family": {"example": name, "params": params}, "output_dir": out,
            "diagnose": {"empirical": False, "N": 4096 if name == "markov" else 64}, **top}


def _execute(command: str, cfg: ExperimentConfig, manifest: Manifest) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if command == "report":
        if cfg.report is None:
            raise ValueError("the report command needs a 'report' section")
        run_report(cfg, out, manifest)
        return EXIT_OK
    family, truth = build_family(cfg)
    if command in ("classify", "example"):
        summary = run_classify(cfg, family, truth, out, manifest)
        print(f"classification: {summary['global_verdict']}")
    if command == "simulate":
        sample = run_simulate(cfg, family, out, manifest)
        print(f"simulated {sample.n_paths} paths on B({cfg.simulate.T})")
    if command in ("diagnose", "example"):
        verdict = run_diagnose(cfg, family, out, manifest)
        print(f"ergodicity diagnostic: {verdict}")
        exp = cfg.diagnose.expectation
        if exp is not None and verdict != exp and dg.INCONCLUSIVE not in (verdict, exp):
            print(f"expected '{exp}' but the diagnostic {verdict}", file=sys.stderr)
            return EXIT_EXPECTATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stablefield", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("classify", "positive/null classification"), ("simulate", "draw field samples"),
                           ("diagnose", "ergodicity, mixing and association diagnostics"),
                           ("report", "bundle earlier outputs into one table")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config", help="YAML experiment config")
    ex = sub.add_parser("example", help="built-in examples")
    exsub = ex.add_subparsers(dest="action", required=True)
    ls = exsub.add_parser("list", help="list example names")
    ls.add_argument("--out", default=None, help="also write the manifest here")
    run = exsub.add_parser("run", help="classify and diagnose one example")
    run.add_argument("name")
    run.add_argument("params", nargs="*", help="key=value parameters (alpha, kind, seed or example parameters)")
    run.add_argument("--out", default="out", help="output directory")
    return p


def _raw_output_dir(path) -> str | None:
    """output_dir of a config that may not validate, so failed runs still leave a manifest there."""
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError):
        return None
    out = data.get("output_dir") if isinstance(data, dict) else None
    return out if isinstance(out, str) else None


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = "out"
    manifest = Manifest(args.command, getattr(args, "config", None), None)
    try:
        if args.command == "example":
            if args.action == "list":
                for name in list_examples():
                    print(name)
                if args.out:
                    out_dir = args.out
                    manifest.write(out_dir, EXIT_OK)
                return EXIT_OK
            data = example_config(args.name, args.params, args.out)
            out_dir = args.out
            cfg = ExperimentConfig.model_validate(data)
            command = "example"
        else:
            out_dir = _raw_output_dir(args.config) or out_dir
            cfg = load_config(args.config)
            out_dir = cfg.output_dir
            command = args.command
        manifest.data["config"] = cfg.model_dump(mode="json")
        manifest.data["seed"] = cfg.seed
        code = _execute(command, cfg, manifest)
        manifest.write(out_dir, code)
        return code
    except (ConfigError, OSError, ValueError, KeyError, NotImplementedError) as exc:
        msg = str(exc) if not isinstance(exc, KeyError) else str(exc.args[0])
        print(f"error: {msg}", file=sys.stderr)
        try:
            manifest.write(out_dir, EXIT_ERROR, msg)
        except OSError:
            pass
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
