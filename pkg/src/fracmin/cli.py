"""Command-line front end.

    fracmin energy --set E.cellset.json --window ball:0,0:0.5 --s 0.5
    fracmin minimize --boundary half_space:0,1:0 --window ball:0,0:0.6 --s 0.5 --out min.cellset.json
    fracmin experiment s-to-1-limit --shape square --s 0.8,0.9,0.95

The primary artifact (a JSON report, or the main CSV of an experiment) goes to
stdout; the run manifest goes to stderr and, with ``--out``, next to the
outputs. Exit status: 0 ok, 1 numeric failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .energy import Window, localized_energy
from .experiments import DEFAULTS as EXPERIMENT_DEFAULTS
from .experiments import RUNNERS, interface_point, run_experiment
from .extension import phi_profile, solve_extension
from .geometry import density_ratio, flat_order_sequence, flatness, nonlocal_mean_curvature
from .grid import CellSet, GridDomain, load_cellset, parse_exterior, rasterize, save_cellset
from .kernel import DEFAULT_QUAD_TOL, KernelTable
from .mincut import DEFAULT_SCALE, build_cut_problem, minimize
from .modulus import Modulus
from .perturbation import build_perturbation, check_inclusions, euler_lagrange_residual
from .reporting import csv_text, dumps


class UsageError(Exception):
    pass


# builtin defaults; a --config file overrides them and explicit flags override both
BASE_DEFAULTS = {"seed": 0, "threads": 1, "capacity_scale": DEFAULT_SCALE, "quad_tol": DEFAULT_QUAD_TOL, "s": 0.5}
COMMAND_DEFAULTS = {
    "energy": {"window": "all"},
    "minimize": {"window": "all", "cells": 32, "half_width": 1.0, "dim": 2},
    "curvature": {},
    "flatness": {"r": 0.25},
    "density": {"radii": "0.125,0.25"},
    "perturb": {"R": 1.0, "eps": 0.05},
    "extension": {"M": 24, "pad": 0},
    "experiment": {},
}


def _vec(text) -> np.ndarray:
    if isinstance(text, (list, tuple)):
        return np.asarray(text, float)
    return np.array([float(t) for t in str(text).split(",")])


def parse_window(spec: str, domain: GridDomain) -> Window:
    """``all``, ``ball:cx,cy:r`` or ``box:lo1,lo2:hi1,hi2``."""
    parts = spec.split(":")
    try:
        if parts[0] == "all":
            return Window.everything(domain)
        if parts[0] == "ball":
            return Window.ball(domain, _vec(parts[1]), float(parts[2]))
        if parts[0] == "box":
            return Window.box(domain, _vec(parts[1]), _vec(parts[2]))
    except IndexError:
        pass
    raise UsageError(f"bad window spec {spec!r}")


def _load_set(path, inputs: dict) -> CellSet:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"file not found: {path}")
    inputs[str(p)] = hashlib.sha256(p.read_bytes()).hexdigest()
    return load_cellset(p)


def _boundary(cfg: dict, inputs: dict) -> CellSet:
    src = cfg.get("boundary")
    if src is None:
        raise UsageError("--boundary is required")
    if Path(src).exists():
        return _load_set(src, inputs)
    try:
        ext = parse_exterior(src)
    except (ValueError, IndexError) as exc:
        raise UsageError(f"--boundary is neither a file nor an exterior descriptor: {src}") from exc
    d = GridDomain.centered(int(cfg["dim"]), int(cfg["cells"]), float(cfg["half_width"]))
    return rasterize(ext, d)


def _kernel(E: CellSet, cfg) -> KernelTable:
    return KernelTable(E.domain, float(cfg["s"]), float(cfg["quad_tol"]))


def _point(E: CellSet, cfg) -> np.ndarray:
    p = cfg.get("point")
    return interface_point(E, np.zeros(E.domain.n) if p is None else _vec(p))


def _require(cfg, key):
    if cfg.get(key) is None:
        raise UsageError(f"--{key.replace('_', '-')} is required")
    return cfg[key]


# ---------------------------------------------------------------------------
# commands; each returns (stdout text, list of written paths)


def cmd_energy(cfg, inputs):
    E = _load_set(_require(cfg, "set"), inputs)
    rep = localized_energy(E, parse_window(cfg["window"], E.domain), _kernel(E, cfg))
    return dumps(rep.__dict__), []


def cmd_minimize(cfg, inputs):
    B = _boundary(cfg, inputs)
    K = _kernel(B, cfg)
    om = parse_window(cfg["window"], B.domain)
    gamma = float(cfg["gamma"]) if cfg.get("gamma") is not None else None
    obstacle = _load_set(cfg["obstacle"], inputs) if cfg.get("obstacle") else None
    P = build_cut_problem(K, om, B, None if gamma is None else np.full(B.domain.dims, gamma), obstacle,
                          int(cfg["capacity_scale"]))
    res = minimize(P)
    outs = []
    if cfg.get("out"):
        save_cellset(res.E, cfg["out"])
        outs.append(cfg["out"])
    return dumps(res.to_dict()), outs


def cmd_curvature(cfg, inputs):
    E = _load_set(_require(cfg, "set"), inputs)
    x0 = _point(E, cfg)
    rep = nonlocal_mean_curvature(E, x0, _kernel(E, cfg))
    return dumps({"x0": x0, **rep.to_dict()}), []


def cmd_flatness(cfg, inputs):
    E = _load_set(_require(cfg, "set"), inputs)
    x0 = _point(E, cfg)
    if cfg.get("k") is not None:
        alpha = float(cfg.get("alpha") or 0.25)
        seq = flat_order_sequence(E, x0, int(cfg["k"]), lambda t: t ** alpha)
        return dumps(seq.to_dict()), []
    return dumps(flatness(E, x0, float(cfg["r"])).to_dict()), []


def cmd_density(cfg, inputs):
    E = _load_set(_require(cfg, "set"), inputs)
    x0 = _point(E, cfg)
    radii = _vec(cfg["radii"])
    return dumps({"x0": x0, "r": radii, "density": [density_ratio(E, x0, r) for r in radii]}), []


def cmd_perturb(cfg, inputs):
    E = _load_set(_require(cfg, "set"), inputs)
    x0 = _point(E, cfg)
    nu = _vec(_require(cfg, "normal"))
    sets = build_perturbation(E, x0, nu, float(cfg["R"]), float(cfg["eps"]))
    out = {"x0": x0, **sets.to_dict(E), "inclusions": check_inclusions(sets, E)}
    if cfg.get("delta") is not None:
        K = _kernel(E, cfg)
        out["residual"] = euler_lagrange_residual(E, sets, float(cfg["delta"]), Modulus.zero(K.s), K).to_dict()
    return dumps(out), []


def cmd_extension(cfg, inputs):
    E = _load_set(_require(cfg, "set"), inputs)
    s = float(cfg["s"])
    f = solve_extension(E, M=int(cfg["M"]), s=s, pad=int(cfg["pad"]))
    out = {"dims": list(f.values.shape), "a": f.a, "residual": f.residual}
    outs = []
    if cfg.get("radii") is not None:
        prof = phi_profile(f, _point(E, cfg), Modulus.zero(s), _vec(cfg["radii"]))
        out["profile"] = prof.to_dict()
    if cfg.get("out"):
        f.save(cfg["out"])
        outs += [cfg["out"], str(cfg["out"]) + ".json"]
    return dumps(out), outs


def _experiment_params(cfg) -> dict:
    name = cfg["name"]
    params = dict(cfg.get("params") or {})
    for item in cfg.get("param") or []:
        if "=" not in item:
            raise UsageError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            params[k] = json.loads(v)
        except json.JSONDecodeError:
            params[k] = v
    for key in ("s", "shape", "cells", "trials"):
        if cfg.get(f"exp_{key}") is not None:
            params[key] = cfg[f"exp_{key}"]
    unknown = set(params) - set(EXPERIMENT_DEFAULTS[name]) - {"seed"}
    if unknown:
        raise UsageError(f"unknown parameter(s) for {name}: {', '.join(sorted(unknown))}")
    return params


def cmd_experiment(cfg, inputs):
    name = cfg["name"]
    if name not in RUNNERS:
        raise UsageError(f"unknown experiment {name!r}; choose from {', '.join(RUNNERS)}")
    res = run_experiment(name, _experiment_params(cfg), seed=int(cfg["seed"]))
    outs = []
    if cfg.get("out"):
        outs = [str(p) for p in res.write(cfg["out"])]
    header, rows = res.main_table
    return csv_text(header, rows).rstrip("\n"), outs


COMMANDS = {"energy": cmd_energy, "minimize": cmd_minimize, "curvature": cmd_curvature, "flatness": cmd_flatness,
            "density": cmd_density, "perturb": cmd_perturb, "extension": cmd_extension,
            "experiment": cmd_experiment}


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option values (flags override it)")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--out", help="output path (directory for experiments)")
    common.add_argument("--capacity-scale", type=int, dest="capacity_scale")
    common.add_argument("--quad-tol", type=float, dest="quad_tol")
    sets = argparse.ArgumentParser(add_help=False)
    sets.add_argument("--set", help=".cellset.json or .grid file")
    sets.add_argument("--s", type=float)
    sets.add_argument("--point", help="x,y[,z]; the nearest boundary face midpoint is used")

    p = _Parser(prog="fracmin", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"fracmin {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("energy", parents=[common, sets], help="localized energy J_s(E; window)")
    q.add_argument("--window")

    q = sub.add_parser("minimize", parents=[common], help="exact minimizer by min-cut")
    q.add_argument("--boundary", help="set file or exterior descriptor such as half_space:0,1:0")
    q.add_argument("--window")
    q.add_argument("--s", type=float)
    q.add_argument("--cells", type=int)
    q.add_argument("--half-width", type=float, dest="half_width")
    q.add_argument("--dim", type=int, choices=(2, 3))
    q.add_argument("--gamma", type=float, help="constant bulk coefficient")
    q.add_argument("--obstacle", help="obstacle set file")

    sub.add_parser("curvature", parents=[common, sets], help="non-local mean curvature at a boundary point")

    q = sub.add_parser("flatness", parents=[common, sets], help="slab width of the interface")
    q.add_argument("--r", type=float)
    q.add_argument("--k", type=int, help="dyadic flat-of-order sequence with this many scales")
    q.add_argument("--alpha", type=float, help="bound exponent for --k")

    q = sub.add_parser("density", parents=[common, sets], help="volume density ratios")
    q.add_argument("--radii")

    q = sub.add_parser("perturb", parents=[common, sets], help="deformed-ball perturbation sets")
    q.add_argument("--normal", help="inward normal at the point")
    q.add_argument("--R", type=float)
    q.add_argument("--eps", type=float)
    q.add_argument("--delta", type=float, help="also report the Euler-Lagrange residual")

    q = sub.add_parser("extension", parents=[common, sets], help="weighted extension and monotonicity profile")
    q.add_argument("--M", type=int)
    q.add_argument("--pad", type=int)
    q.add_argument("--radii")

    q = sub.add_parser("experiment", parents=[common], help="run a named experiment")
    q.add_argument("name")
    q.add_argument("--param", action="append", help="key=value experiment parameter")
    q.add_argument("--s", dest="exp_s")
    q.add_argument("--shape", dest="exp_shape")
    q.add_argument("--cells", dest="exp_cells", type=int)
    q.add_argument("--trials", dest="exp_trials", type=int)
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(BASE_DEFAULTS)
    cfg.update(COMMAND_DEFAULTS[args.command])
    if args.config:
        p = Path(args.config)
        if not p.exists():
            raise UsageError(f"config file not found: {p}")
        try:
            loaded = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config must be a JSON object")
        cfg.update({k.replace("-", "_"): v for k, v in loaded.items()})
    cfg.update({k: v for k, v in vars(args).items() if v is not None and k != "config"})
    return cfg


def _set_threads(n: int):
    import warnings

    try:
        import numba
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
    except (ImportError, ValueError):
        pass


def manifest(cfg: dict, inputs: dict, outputs: list) -> dict:
    hashes = dict(inputs)
    if cfg.get("config"):
        hashes[cfg["config"]] = hashlib.sha256(Path(cfg["config"]).read_bytes()).hexdigest()
    return {"tool": "fracmin", "version": __version__, "command": cfg["command"],
            "config": {k: v for k, v in sorted(cfg.items()) if k != "command"},
            "inputs": hashes, "outputs": [str(o) for o in outputs],
            "cache_dir": os.environ.get("FRACMIN_CACHE_DIR")}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
        if args.config:
            cfg["config"] = args.config
        _set_threads(cfg["threads"])
        inputs: dict = {}
        text, outputs = COMMANDS[args.command](cfg, inputs)
    except UsageError as exc:
        print(f"fracmin: usage error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"fracmin: numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    man = manifest(cfg, inputs, outputs)
    print(text)
    man_text = dumps(man, indent=2)
    print(man_text, file=sys.stderr)
    if cfg.get("out"):
        out = Path(cfg["out"])
        target = out / "manifest.json" if args.command == "experiment" else out.with_name(out.name + ".manifest.json")
        target.write_text(man_text + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
