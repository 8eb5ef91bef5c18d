"""Command-line experiment runner.

Subcommands: ``catalog``, ``check-assumptions``, ``biconjugate``,
``cutoff-demo``, ``recover`` and ``gap-probe``. Configurations are JSON
files validated against ``CONFIG_SCHEMA``; outputs are CSV tables and JSON
manifests written to ``--out``.

Exit codes: 0 success, 2 validation error, 3 failed assumption check under
``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .convex_transform import SampledFunctionND, biconjugate, check_convexity
from .cutoff import cutoff_for, verify_product_bound
from .domain import build_covering, domain_from_json
from .fields import AffineField, AnalyticField, GridFunction, TensorGrid, ZeroField, random_trig_field
from .integrand import CATALOG, _jsonable, check_assumptions, integrand_from_json
from .targets import c1_bump, power_singularity, smooth_bump

CONFIG_VERSION = 1

_FIELD_SPEC = {
    "type": "object",
    "required": ["kind"],
    "properties": {"kind": {"enum": ["zero", "affine", "radial", "sampled", "c1_bump",
                                     "power_singularity", "smooth_bump"]}},
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["version"],
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "seed": {"type": "integer", "minimum": 0},
        "integrand": {
            "type": "object",
            "required": ["label"],
            "properties": {"label": {"type": "string"}, "params": {"type": "object"},
                           "constraint": {"type": "object", "required": ["kind"]}},
        },
        "domain": {"type": "object", "required": ["type"]},
        "datum": _FIELD_SPEC,
        "target": _FIELD_SPEC,
        "schedules": {
            "type": "object",
            "properties": {"k_max": {"type": "integer", "minimum": 1}, "k_min": {"type": "integer", "minimum": 1},
                           "t_rule": {"enum": ["triangle", "full", "diagonal"]},
                           "j_max": {"type": "integer", "minimum": 1}},
        },
        "recovery": {"type": "object", "properties": {"h": {"type": "number", "exclusiveMinimum": 0},
                                                      "n_shells": {"type": "integer", "minimum": 4},
                                                      "extra_interior": {"type": "array"}}},
        "function": {"type": "object", "required": ["axes", "values"]},
        "cutoff": {"type": "object", "properties": {
            "d": {"enum": [2, 3]}, "R": {"type": "number", "exclusiveMinimum": 0},
            "delta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            "p": {"type": "number", "minimum": 1}, "q": {"type": "number"},
            "n_fields": {"type": "integer", "minimum": 1}, "n_shells": {"type": "integer", "minimum": 4}}},
        "gap": {"type": "object", "properties": {"hs": {"type": "array", "items": {"type": "number"}},
                                                 "grid_h": {"type": "number", "exclusiveMinimum": 0}}},
        "assumptions": {"type": "object", "properties": {"M": {"type": "array", "items": {"type": "number"}}}},
    },
}

REQUIRED = {
    "check-assumptions": ["integrand", "domain"],
    "biconjugate": ["function"],
    "cutoff-demo": [],
    "recover": ["integrand", "domain", "datum", "target"],
    "gap-probe": ["integrand", "domain", "datum"],
}


class ValidationError(Exception):
    pass


def load_config(path, command: str) -> dict:
    if path is None:
        cfg = {"version": CONFIG_VERSION}
    else:
        try:
            cfg = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config: {exc}") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ValidationError(f"config invalid: {exc.message}") from exc
    missing = [k for k in REQUIRED[command] if k not in cfg]
    if missing:
        raise ValidationError(f"config for {command} lacks {', '.join(missing)}")
    return cfg


def field_from_json(spec: dict, d: int = 2):
    kind = spec["kind"]
    if kind == "zero":
        return ZeroField(d, spec.get("m", 1))
    if kind == "affine":
        return AffineField(spec["A"], spec.get("b"))
    if kind == "radial":
        center = np.asarray(spec.get("center", [0.0] * d), float)
        r_mid = spec["r_split"]
        a, b = spec["inner"], spec["outer"]
        return AnalyticField(lambda X: np.where(np.linalg.norm(X - center, axis=1) < r_mid, a, b),
                             lambda X: np.zeros((len(X), 1, d)), d)
    if kind == "sampled":
        G = spec["grid"]
        grid = TensorGrid(tuple(G["lo"]), tuple(G["hi"]), float(G["h"]))
        return GridFunction.from_values(grid, np.asarray(spec["values"], float)).as_field()
    if kind == "c1_bump":
        return c1_bump(spec.get("c", 1.0), spec.get("center", [0.0] * d), spec.get("radius", 0.5))
    if kind == "power_singularity":
        return power_singularity(spec.get("c", 1.0), spec.get("x0", [0.0] * d), spec.get("beta", 0.2),
                                 spec.get("radius", 1.0))
    if kind == "smooth_bump":
        return smooth_bump(spec.get("c", 1.0), spec.get("radius", 1.0), d)
    raise ValidationError(f"unknown field kind {kind!r}")


def _integrand(cfg):
    try:
        return integrand_from_json(cfg["integrand"], d=cfg.get("domain", {}).get("d", 2))
    except KeyError as exc:
        raise ValidationError(str(exc.args[0]) if exc.args else "unknown integrand label") from exc
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def _domain(cfg):
    try:
        return domain_from_json(cfg["domain"])
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"domain: {exc}") from exc


def _write_json(path, data):
    Path(path).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True))


# --------------------------------------------------------------------------
# subcommands


def cmd_catalog(cfg, args, out):
    lines = []
    for label, info in CATALOG.items():
        lines.append(f"{label}: {info['params']}")
        lines.extend(f"  constraint: {c}" for c in info["constraints"])
    print("\n".join(lines))
    return 0


def cmd_check_assumptions(cfg, args, out):
    W = _integrand(cfg)
    dom = _domain(cfg)
    M = cfg.get("assumptions", {}).get("M", [2.0, 8.0])
    rep = check_assumptions(W, dom, M_list=M, seed=args.seed)
    _write_json(out / "assumptions.json", rep)
    for k, v in rep["reports"].items():
        ok = v["passed"] if isinstance(v, dict) else all(x["passed"] for x in v)
        print(f"{k}: {'pass' if ok else 'FAIL'}")
    for M_, C in rep["fitted_C_M"].items():
        print(f"fitted C_M (M={M_}): {C:.6g}")
    if args.strict and not rep["passed"]:
        return 3
    return 0


def cmd_biconjugate(cfg, args, out):
    try:
        f = SampledFunctionND.from_json(cfg["function"])
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"function: {exc}") from exc
    fb = biconjugate(f if f.ndim > 1 else f.to_1d())
    vals = np.asarray(fb.values).ravel()
    pts = f.points()
    with open(out / "biconjugate.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(f.ndim)] + ["f", "f_biconjugate"])
        for p_, a, b in zip(pts, np.asarray(f.values).ravel(), vals):
            w.writerow([repr(float(c)) for c in p_] + [repr(float(a)), repr(float(b))])
    rep = check_convexity(fb, seed=args.seed)
    _write_json(out / "biconjugate.json", {"convexity_of_result": rep.__dict__, "ndim": f.ndim})
    print(f"biconjugate written ({len(vals)} nodes); convex: {rep.is_convex}")
    return 0


def cmd_cutoff_demo(cfg, args, out):
    c = {"d": 2, "R": 1.0, "delta": 0.25, "p": 2.0, "n_fields": 2, "n_shells": 256}
    c.update(cfg.get("cutoff", {}))
    rng = np.random.default_rng(args.seed)
    d = int(c["d"])
    us = [random_trig_field(d, 1, rng) for _ in range(int(c["n_fields"]))]
    center = np.zeros(d)
    eta = cutoff_for(us, center, c["R"], c["delta"], c["p"], n_shells=int(c["n_shells"]))
    eta.write_csv(out / "cutoff_radial.csv")
    p = c["p"]
    if p > d - 1:
        q_default = float("inf")
    elif p < d - 1:
        q_default = (d - 1) * p / (d - 1 - p)
    else:
        q_default = 2 * p
    q = c.get("q", q_default)
    pb = verify_product_bound(eta, us, p, q)
    _write_json(out / "cutoff.json", {"config": c, "seed": args.seed, "invariants": eta.invariants(),
                                      "U_measure": eta.U_measure, "threshold_C": eta.C_threshold,
                                      "product_bound": pb.to_json()})
    print(f"|U| = {eta.U_measure:.6g} (guarantee {c['delta'] * c['R'] / 2:.6g}); "
          f"measured product-bound constant {pb.C_measured:.6g}")
    return 0


def _recovery_inputs(cfg, seed):
    from .recovery import RecoveryConfig

    W = _integrand(cfg)
    dom = _domain(cfg)
    d = dom.dim
    g = field_from_json(cfg["datum"], d)
    rc = cfg.get("recovery", {})
    sch = dict(cfg.get("schedules", {}))
    rcfg = RecoveryConfig(seed=seed, n_shells=rc.get("n_shells", 64), **sch)
    extra = rc.get("extra_interior", [list(getattr(dom, "center", np.zeros(d)))])
    cov = build_covering(dom, extra_interior=[tuple(e) for e in extra])
    return W, dom, g, rcfg, cov, rc.get("h", 2.0 ** -6)


def cmd_recover(cfg, args, out):
    from .recovery import convergence_study

    W, dom, g, rcfg, cov, h = _recovery_inputs(cfg, args.seed)
    if args.strict:
        rep = check_assumptions(W, dom, seed=args.seed)
        _write_json(out / "assumptions.json", rep)
        if not rep["passed"]:
            print("assumption check failed", file=sys.stderr)
            return 3
    v = field_from_json(cfg["target"], dom.dim)
    try:
        study = convergence_study(W, v, g, cov, rcfg, h, manifest_extra={"config": cfg, "threads": args.threads})
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    study.write_csv(out / "recovery.csv")
    study.write_manifest(out / "manifest.json")
    last = study.final_row()
    print(f"{len(study.rows)} rows; final (k={last.k}, t={last.t}): energy {last.energy:.8g} "
          f"vs target {study.target_energy:.8g}, sobolev_error {last.sobolev_error:.4g}")
    return 0


def cmd_gap_probe(cfg, args, out):
    from .gap_solver import gap_probe
    from .recovery import RecoveryConfig

    W, dom, g, rcfg, cov, h = _recovery_inputs(cfg, args.seed)
    rep_a = check_assumptions(W, dom, seed=args.seed)
    gcfg = cfg.get("gap", {})
    rep = gap_probe(W, dom, g, hs=tuple(gcfg.get("hs", [1 / 8, 1 / 16, 1 / 32])),
                    recovery_config=RecoveryConfig(**{**rcfg.to_json(), "k_max": min(rcfg.k_max, 6)}),
                    grid_h=gcfg.get("grid_h", 2.0 ** -6), assumptions=rep_a, covering=cov)
    rep.write_json(out / "gap_report.json")
    with open(out / "gap_refine.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h", "energy", "certificate"])
        for row in zip(rep.refine["hs"], rep.refine["energies"], rep.refine["certificates"]):
            w.writerow([repr(x) for x in row])
    print(f"A = {rep.A:.10g}, B = {rep.B:.10g}, gap_indicator = {rep.gap_indicator:.3e}, "
          f"bars = {rep.bar_A:.3e} + {rep.bar_B:.3e}; assumptions {'pass' if rep_a['passed'] else 'FAIL'}")
    if args.strict and not rep_a["passed"]:
        return 3
    return 0


COMMANDS = {
    "catalog": cmd_catalog,
    "check-assumptions": cmd_check_assumptions,
    "biconjugate": cmd_biconjugate,
    "cutoff-demo": cmd_cutoff_demo,
    "recover": cmd_recover,
    "gap-probe": cmd_gap_probe,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lavrentiev", description="Recovery sequences and gap probes "
                                 "for integral functionals with (p,q)-growth.")
    ap.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="JSON experiment configuration")
    common.add_argument("--out", type=str, default=".", help="output directory")
    common.add_argument("--strict", action="store_true", help="exit 3 if an assumption check fails")
    common.add_argument("--threads", type=int, default=1, help="cap on worker threads")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(max(1, args.threads)))
    try:
        cfg = load_config(args.config, args.command) if args.command != "catalog" else {"version": CONFIG_VERSION}
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args, out)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
