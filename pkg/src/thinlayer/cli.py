"""Batch front end: one JSON config in, deterministic JSON/CSV artifacts out.

Exit codes: 0 success, 2 invalid configuration (nothing written),
3 computation failure (nothing written; error JSON on stderr).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile

import numpy as np
from jsonschema import Draft202012Validator

from . import __version__
from .constants import (
    E_INV,
    LayerConfig,
    constant_set,
    e_low,
    localization_window,
    mu_value,
    resolvent_bound,
    thresholds,
)
from .errors import InvalidConfig, InvalidGrid, InvalidWidth, ThinLayerError
from .potentials import KINDS, potential_array, tabulate

log = logging.getLogger("thinlayer")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COMPUTE = 3

_POS = {"type": "number", "exclusiveMinimum": 0}
_WIDTH = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_INT1 = {"type": "integer", "minimum": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCHEMAS = {
    "potentials": _obj(
        {
            "kind": {"enum": list(KINDS)},
            "a": _POS,
            "nodes": {"type": "array", "items": _POS, "minItems": 1},
            "grid": _obj({"rho_min": _POS, "rho_max": _POS, "count": {"type": "integer", "minimum": 2}},
                         ["rho_min", "rho_max", "count"]),
            "samples": {"type": "integer", "minimum": 0, "maximum": 100000},
        },
        ["kind", "a"],
    ),
    "constants": _obj(
        {
            "Z": _POS,
            "N": _INT1,
            "a": {"type": "number", "exclusiveMinimum": 0, "maximum": E_INV},
            "d": _POS,
        },
        ["Z"],
    ),
    "spectrum2d": _obj(
        {
            "Z": _POS,
            "k": _INT1,
            "kind": {"enum": list(KINDS)},
            "a": _WIDTH,
            "m": {"type": "integer"},
            "n_nodes": {"type": "integer", "minimum": 16, "maximum": 200000},
        },
        ["Z", "k"],
    ),
    "spectrum-layer": _obj(
        {
            "a": _WIDTH,
            "Z": {"type": "number", "minimum": 0},
            "k": _INT1,
            "m": {"type": "integer"},
            "nr": {"type": "integer", "minimum": 16, "maximum": 20000},
            "nz": {"type": "integer", "minimum": 2, "maximum": 512},
        },
        ["a", "Z"],
    ),
    "converge": _obj(
        {
            "widths": {
                "type": "array",
                "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
                "minItems": 4,
            },
            "Z": _POS,
            "mode": {"enum": ["eff", "layer"]},
        },
        ["widths", "Z"],
    ),
    "localize": _obj(
        {
            "a": _WIDTH,
            "Z": _POS,
            "lambda": {"type": "number", "exclusiveMaximum": 0},
            "d": _POS,
            "nr": {"type": "integer", "minimum": 16, "maximum": 20000},
            "nz": {"type": "integer", "minimum": 2, "maximum": 512},
        },
        ["a", "Z", "lambda", "d"],
    ),
    "two-electron": _obj(
        {
            "a": _WIDTH,
            "Z": _POS,
            "n_orb": {"type": "integer", "minimum": 2, "maximum": 24},
            "m_max": {"type": "integer", "minimum": 0, "maximum": 4},
            "symmetry": {"enum": ["fermionic", "distinguishable"]},
            "interaction": {"type": "boolean"},
            "cache_dir": {"type": "string"},
        },
        ["a", "Z"],
    ),
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "command": {"enum": sorted(SCHEMAS)},
        "params": {"type": "object"},
        "output_dir": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    },
    "required": ["command", "params"],
    "additionalProperties": False,
}


class ConfigInvalid(Exception):
    pass


class ComputationFailed(Exception):
    pass


def _schema_errors(schema, doc):
    return sorted(Draft202012Validator(schema).iter_errors(doc), key=lambda e: list(e.path))


def validate_config(cfg) -> dict:
    errs = _schema_errors(CONFIG_SCHEMA, cfg)
    if errs:
        raise ConfigInvalid("; ".join(e.message for e in errs))
    perrs = _schema_errors(SCHEMAS[cfg["command"]], cfg["params"])
    if perrs:
        raise ConfigInvalid("; ".join(f"params{''.join(f'[{p!r}]' for p in e.path)}: {e.message}" for e in perrs))
    return cfg


def config_hash(cfg: dict, seed: int) -> str:
    canon = json.dumps({"command": cfg["command"], "params": cfg["params"], "seed": seed}, sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _f(x) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# commands; each returns (json payload, csv rows or None)


def _cmd_potentials(p, rng):
    kind, a = p["kind"], float(p["a"])
    if "nodes" in p:
        nodes = np.asarray(p["nodes"], dtype=float)
    else:
        g = p.get("grid", {"rho_min": 1e-4, "rho_max": 1e3, "count": 200})
        if not g["rho_min"] < g["rho_max"]:
            raise InvalidConfig("grid rho_min must be below rho_max")
        nodes = np.geomspace(g["rho_min"], g["rho_max"], g["count"])
    tab = tabulate(kind, a, nodes)
    payload = {"potential": tab.to_dict()}
    samples = int(p.get("samples", 0))
    if samples:
        # random law checks: scaling and the Coulomb bound
        widths = np.exp(rng.uniform(math.log(1e-3), math.log(10.0), samples))
        radii = np.exp(rng.uniform(math.log(1e-6), math.log(1e3), samples))
        unit = potential_array(kind, 1.0, radii / widths) / widths
        direct = np.array([potential_array(kind, w, np.array([r]))[0] for w, r in zip(widths, radii)])
        payload["checks"] = {
            "samples": samples,
            "max_scaling_rel": float(np.max(np.abs(direct - unit) / direct)),
            "bound_ok": bool(np.all((direct >= 0) & (direct <= 1.0 / radii))),
        }
    rows = [["rho", "value"]] + [[_f(r), _f(v)] for r, v in zip(tab.nodes, tab.values)]
    return payload, rows


def _cmd_constants(p, rng):
    cfg = LayerConfig(a=float(p.get("a", 0.1)), Z=float(p["Z"]), N=int(p.get("N", 1)))
    payload = dict(constant_set(cfg).as_dict())
    payload.update({"N": cfg.N, "Z": cfg.Z})
    if "d" in p:
        d = float(p["d"])
        payload["thresholds"] = thresholds(cfg, d).as_dict()
        if "a" in p:
            a = float(p["a"])
            payload["bounds"] = {
                kind: resolvent_bound(kind, cfg, a, d) for kind in ("eff_vs_2d", "full_vs_eff", "full_vs_2d")
            }
            payload["bounds"]["gen_dif_en"] = resolvent_bound("gen_dif", cfg, a, d, w_kind="en")
            payload["bounds"]["gen_dif_ee"] = resolvent_bound("gen_dif", cfg, a, d, w_kind="ee")
            if a < 1.0:
                payload["localization"] = localization_window(d, a, cfg).as_dict()
    return payload, None


def _cmd_spectrum2d(p, rng):
    from .radial import default_grid, hydrogen2d_levels, solve_extrapolated

    Z, k = float(p["Z"]), int(p["k"])
    kind = p.get("kind", "coulomb2d")
    if kind != "coulomb2d" and "a" not in p:
        raise InvalidConfig("effective potentials need a width 'a'")
    a = float(p.get("a", 1.0))
    grid = default_grid(Z, None if kind == "coulomb2d" else a, n_nodes=int(p.get("n_nodes", 2000)), m=int(p.get("m", 0)))
    res = solve_extrapolated(kind, a, grid, k, charge=Z)
    payload = res.to_dict()
    exact = hydrogen2d_levels(Z, k) if kind == "coulomb2d" and grid.m == 0 else None
    payload["exact"] = exact
    rows = [["index", "eigenvalue", "residual", "exact"]]
    for i, (v, r) in enumerate(zip(res.eigenvalues, res.residuals)):
        rows.append([str(i), _f(v), _f(r), "" if exact is None else _f(exact[i])])
    return payload, rows


def _cmd_spectrum_layer(p, rng):
    from .layer import default_cyl_grid, solve_layer_n1

    a, Z = float(p["a"]), float(p["Z"])
    grid = default_cyl_grid(a, Z, nr=int(p.get("nr", 800)), nz=int(p.get("nz", 32)), m=int(p.get("m", 0)))
    res = solve_layer_n1(a, Z, grid, k=int(p.get("k", 1)), require_bound=Z > 0)
    payload = res.to_dict()
    rows = [["index", "eigenvalue", "shifted", "residual"]]
    for i, (v, s, r) in enumerate(zip(res.eigenvalues, res.meta["shifted"], res.residuals)):
        rows.append([str(i), _f(v), _f(s), _f(r)])
    return payload, rows


def _cmd_converge(p, rng):
    from .convergence import sweep_eff, sweep_layer

    widths, Z = [float(x) for x in p["widths"]], float(p["Z"])
    rep = sweep_layer(widths, Z) if p.get("mode", "eff") == "layer" else sweep_eff(widths, Z)
    return rep.to_dict(), list(rep.csv_rows())


def _cmd_localize(p, rng):
    from .convergence import localize
    from .layer import default_cyl_grid, layer_levels_below

    a, Z, lam, d = float(p["a"]), float(p["Z"]), float(p["lambda"]), float(p["d"])
    cfg = LayerConfig(a=a, Z=Z)
    grid = default_cyl_grid(a, Z, nr=int(p.get("nr", 800)), nz=int(p.get("nz", 32)))
    upper = cfg.transverse_energy + min(lam + 2 * d, 0.0)
    levels = layer_levels_below(a, Z, upper, grid)
    loc = localize(lam, d, a, cfg, levels)
    payload = loc.as_dict()
    payload["levels"] = levels
    return payload, None


def _cmd_two_electron(p, rng):
    from .two_electron import build_orbital_basis, ci_ground_state

    basis = build_orbital_basis(float(p["a"]), float(p["Z"]), int(p.get("n_orb", 4)), int(p.get("m_max", 1)))
    res = ci_ground_state(
        basis,
        p.get("symmetry", "fermionic"),
        bool(p.get("interaction", True)),
        cache_dir=p.get("cache_dir"),
    )
    out = res.to_dict()
    # reported only; being below the one-electron threshold is never asserted
    threshold = float(basis.energies[0])
    out["one_electron_threshold"] = threshold
    out["below_threshold"] = bool(res.ground_energy < threshold)
    out["e_low"] = e_low(2, basis.Z)
    out["mu_plus_one"] = mu_value(2, basis.Z) + 1.0
    return out, None


COMMANDS = {
    "potentials": _cmd_potentials,
    "constants": _cmd_constants,
    "spectrum2d": _cmd_spectrum2d,
    "spectrum-layer": _cmd_spectrum_layer,
    "converge": _cmd_converge,
    "localize": _cmd_localize,
    "two-electron": _cmd_two_electron,
}


# ---------------------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def _write_atomic(path, text):
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def run(cfg: dict, output_dir: str, seed: int = 0) -> list:
    """Validate, compute and write artifacts; returns the written paths."""
    cfg = validate_config(cfg)
    h = config_hash(cfg, seed)
    command = cfg["command"]
    rng = np.random.default_rng(seed)
    log.info("running %s (config %s)", command, h)
    try:
        payload, rows = COMMANDS[command](cfg["params"], rng)
    except (InvalidConfig, InvalidWidth, InvalidGrid) as exc:
        raise ConfigInvalid(str(exc)) from exc
    except (ThinLayerError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise ComputationFailed(f"{type(exc).__name__}: {exc}") from exc

    doc = {
        "command": command,
        "config_hash": h,
        "version": __version__,
        "seed": seed,
        "params": cfg["params"],
        "result": _jsonable(payload),
    }
    texts = {os.path.join(output_dir, f"{command}-{h}.json"): json.dumps(doc, indent=1, allow_nan=False) + "\n"}
    if rows is not None:
        buf = io.StringIO()
        buf.write(f"# config_hash={h}\n# version={__version__}\n")
        csv.writer(buf, lineterminator="\n").writerows(rows)
        texts[os.path.join(output_dir, f"{command}-{h}.csv")] = buf.getvalue()
    os.makedirs(output_dir, exist_ok=True)
    for path, text in texts.items():
        _write_atomic(path, text)
        log.info("wrote %s", path)
    return list(texts)


def _error_json(kind, message, code):
    return json.dumps({"error": kind, "message": message, "exit_code": code, "version": __version__})


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="thinlayer", description="Thin-layer atom computations from a JSON config.")
    ap.add_argument("--config", required=True, help="path to the JSON run configuration")
    ap.add_argument("--output", default=None, help="artifact directory (default: config output_dir or '.')")
    ap.add_argument("--seed", type=int, default=None, help="seed for randomized sampling (default: config seed or 0)")
    ap.add_argument("--verbose", action="store_true", help="log progress to stderr")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(_error_json("ConfigInvalid", f"cannot read config: {exc}", EXIT_CONFIG), file=sys.stderr)
        return EXIT_CONFIG
    seed = args.seed if args.seed is not None else (cfg.get("seed", 0) if isinstance(cfg, dict) else 0)
    if not isinstance(seed, int) or seed < 0 or seed >= 2**64:
        print(_error_json("ConfigInvalid", "seed must be an unsigned 64-bit integer", EXIT_CONFIG), file=sys.stderr)
        return EXIT_CONFIG
    out = args.output or (cfg.get("output_dir") if isinstance(cfg, dict) else None) or "."
    try:
        paths = run(cfg, out, seed)
    except ConfigInvalid as exc:
        print(_error_json("ConfigInvalid", str(exc), EXIT_CONFIG), file=sys.stderr)
        return EXIT_CONFIG
    except ComputationFailed as exc:
        print(_error_json("ComputationFailed", str(exc), EXIT_COMPUTE), file=sys.stderr)
        return EXIT_COMPUTE
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
