"""Command-line driver: ``chargedrop --command <name> [--config FILE] [options]``.

Every run writes ``results.csv`` and ``manifest.json`` into ``--out``. Values
resolve in the order command-line flag, config file, built-in default.
Exit status: 0 success, 2 configuration error, 3 solver did not converge,
4 contract violation.
"""

import argparse
import json
import logging
import math
import os
import sys

from . import __version__, _backend
from . import experiments as ex
from .equilibrium import solve_equilibrium, write_solution
from .errors import ConfigError, ContractError, ConvergenceError
from .functional import evaluate_F, evaluate_G, write_reports
from .geometry import read_key_values, shape_from_mapping, surface_quadrature
from .kernel import KernelSpec, unit_ball_volume

log = logging.getLogger("chargedrop")

COMMANDS = ("capacity", "equilibrium", "functional", "nonexistence", "splitting", "stability", "corner", "logchecks")
EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_CONTRACT = 0, 2, 3, 4

# key -> (parser, help); every key is also a --flag with dashes
_KEYS = {
    "command": (str, "one of " + ", ".join(COMMANDS)),
    "out": (str, "output directory"),
    "seed": (int, "random seed (random solver starts, shape suites)"),
    "threads": (int, "worker threads (default: all cores)"),
    "tol": (float, "equilibrium residual tolerance"),
    "max_iter": (int, "equilibrium iteration cap"),
    "alpha": (str, "Riesz exponent, or 'log' for the logarithmic kernel"),
    "dim": (int, "ambient dimension"),
    "charge": (str, "charge Q, or a comma list for splitting/stability"),
    "mass": (float, "volume m (nonexistence)"),
    "delta": (float, "delta-ball radius"),
    "nodes": (int, "number of quadrature nodes"),
    "interior_nodes": (int, "interior nodes for mixed sets (equilibrium)"),
    "beta": (float, "droplet radius exponent (nonexistence)"),
    "n_list": (str, "comma list of node or droplet counts"),
    "modes": (str, "perturbation modes 'l,m; l,m; ...'"),
    "amplitudes": (str, "comma list of perturbation amplitudes"),
    "init": (str, "solver start: uniform or random"),
    "shape": (str, "ball, ball_union, nearly_spherical or cube"),
    "radius": (float, "ball or circle radius"),
    "side": (float, "cube side"),
    "coeffs": (str, "harmonic coefficients 'l,m,value; ...'"),
    "balls": (str, "ball union 'x,y,[z,]r; ...'"),
    "separations": (str, "comma list of two-circle center distances"),
    "lambdas": (str, "comma list of dilation factors"),
}

_DEFAULTS = {
    "out": ".",
    "seed": 0,
    "threads": None,
    "tol": 1e-6,
    "max_iter": 50_000,
    "dim": 3,
    "alpha": "1",
    "nodes": 2000,
    "interior_nodes": 0,
    "init": "uniform",
    "shape": "ball",
    "radius": 1.0,
    "side": 2.0,
}

_COMMAND_DEFAULTS = {
    "capacity": {},
    "equilibrium": {},
    "functional": {"charge": "1"},
    "nonexistence": {"charge": "1", "beta": 0.75, "n_list": ",".join(str(4**k) for k in range(7))},
    "splitting": {"alpha": "0.5", "delta": 0.1},
    "stability": {"delta": 0.5, "charge": "0,0.1", "modes": "2,0; 3,0; 4,0", "amplitudes": "0.01,0.02,0.05"},
    "corner": {"dim": 2, "alpha": "log", "nodes": 4000},
    "logchecks": {
        "dim": 2, "alpha": "log", "nodes": 800, "radius": 0.5, "separations": "4,8,16,32,64", "lambdas": "0.5,2,3.7",
    },
}


def build_parser():
    p = argparse.ArgumentParser(prog="chargedrop", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--version", action="version", version=f"chargedrop {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    for key, (_, hlp) in _KEYS.items():
        flag = "--" + key.replace("_", "-")
        if key == "command":
            p.add_argument(flag, choices=COMMANDS, help=hlp)
        else:
            p.add_argument(flag, dest=key, default=None, help=hlp)
    return p


def resolve_config(args):
    """Merge defaults, the config file and command-line flags into one mapping."""
    file_cfg = {}
    if args.config:
        try:
            raw = read_key_values(args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        for k, v in raw.items():
            key = k.strip().lower().replace("-", "_")
            if key not in _KEYS:
                raise ConfigError(f"unknown configuration key {k!r}")
            file_cfg[key] = v
    cli_cfg = {k: getattr(args, k) for k in _KEYS if getattr(args, k, None) is not None}
    command = cli_cfg.get("command", file_cfg.get("command"))
    if command is None:
        raise ConfigError("no command given (use --command)")
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    cfg = dict(_DEFAULTS)
    cfg.update(_COMMAND_DEFAULTS[command])
    cfg.update(file_cfg)
    cfg.update(cli_cfg)
    cfg["command"] = command
    out = {}
    for k, v in cfg.items():
        if v is None:
            out[k] = None
            continue
        try:
            out[k] = _KEYS[k][0](v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {k!r}: {v!r}") from exc
    return out


def _floats(text):
    try:
        return [float(t) for t in str(text).replace(";", ",").split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected a comma list of numbers, got {text!r}") from exc


def _modes(text):
    out = []
    for chunk in str(text).split(";"):
        if chunk.strip():
            vals = _floats(chunk)
            if len(vals) != 2:
                raise ConfigError(f"bad mode {chunk.strip()!r}; expected 'l,m'")
            out.append((int(vals[0]), int(vals[1])))
    return out


def _spec(cfg):
    a = str(cfg["alpha"]).strip().lower()
    if a in ("log", "logarithmic"):
        return KernelSpec.logarithmic(cfg["dim"])
    try:
        alpha = float(a)
    except ValueError as exc:
        raise ConfigError(f"bad value for 'alpha': {a!r}") from exc
    return KernelSpec(cfg["dim"], alpha)


def _alpha(cfg):
    spec = _spec(cfg)
    if spec.is_log:
        raise ConfigError(f"command {cfg['command']!r} needs a Riesz exponent")
    return spec.alpha


def _shape(cfg):
    variant = cfg["shape"]
    m = {"variant": variant, "dimension": cfg["dim"]}
    if variant == "ball":
        m["radius"] = cfg["radius"]
    elif variant == "cube":
        m["side"] = cfg["side"]
    elif variant == "nearly_spherical":
        m["coeffs"] = cfg.get("coeffs") or ""
        m["base_radius"] = cfg["radius"]
    elif variant == "ball_union":
        if not cfg.get("balls"):
            raise ConfigError("ball_union needs 'balls'")
        m["balls"] = cfg["balls"]
    return shape_from_mapping(m)


def _charges(cfg):
    return _floats(cfg["charge"]) if cfg.get("charge") is not None else []


# ---------------------------------------------------------------- commands


def _cmd_capacity(cfg, out):
    spec = _spec(cfg)
    shape = _shape(cfg)
    quad = surface_quadrature(shape, cfg["nodes"])
    sol = solve_equilibrium(spec, quad, tol=cfg["tol"], max_iter=cfg["max_iter"], init=cfg["init"], seed=cfg["seed"])
    rec = ex.SweepRecord(parameters={"nodes": cfg["nodes"]}, energies=sol.summary())
    rec.energies.pop("kernel")
    return [rec], {"capacity": sol.capacity, "energy": sol.energy}


def _cmd_equilibrium(cfg, out):
    from .geometry import mixed_quadrature

    spec = _spec(cfg)
    shape = _shape(cfg)
    if cfg["interior_nodes"]:
        quad = mixed_quadrature(shape, cfg["nodes"], cfg["interior_nodes"])
    else:
        quad = surface_quadrature(shape, cfg["nodes"])
    sol = solve_equilibrium(spec, quad, tol=cfg["tol"], max_iter=cfg["max_iter"], init=cfg["init"], seed=cfg["seed"])
    return sol, sol.summary()


def _cmd_functional(cfg, out):
    spec = _spec(cfg)
    shape = _shape(cfg)
    reports = []
    for Q in _charges(cfg):
        reports.append(evaluate_F(shape, spec, Q, cfg["nodes"], tol=cfg["tol"]))
        if spec.is_log or spec.alpha < spec.dimension - 1:
            reports.append(evaluate_G(shape, spec, Q, cfg["nodes"], tol=cfg["tol"]))
    return reports, {}


def _cmd_nonexistence(cfg, out):
    d = cfg["dim"]
    m = cfg["mass"] if cfg.get("mass") is not None else unit_ball_volume(d)
    (Q,) = _charges(cfg)[:1] or [1.0]
    recs = ex.nonexistence_sweep(d, _alpha(cfg), m, Q, cfg["beta"], [int(n) for n in _floats(cfg["n_list"])])
    last = recs[-1].energies
    return recs, {"final_energy": last["energy"], "isoperimetric_limit": last["isoperimetric_limit"]}


def _cmd_splitting(cfg, out):
    d, alpha, delta = cfg["dim"], _alpha(cfg), cfg["delta"]
    thr = ex.splitting_threshold(d, alpha, delta)
    charges = _charges(cfg) or [0.0, 1.01 * thr]
    recs = [ex.splitting_construction(d, alpha, delta, Q) for Q in charges]
    return recs, {"threshold": thr}


def _cmd_stability(cfg, out):
    if cfg["dim"] != 3 or _alpha(cfg) != 1.0:
        raise ContractError("the stability sweep is defined for d = 3, alpha = 1")
    charges = _charges(cfg)
    recs = ex.stability_sweep(
        cfg["delta"], charges, _modes(cfg["modes"]), _floats(cfg["amplitudes"]),
        N=cfg["nodes"], tol=cfg["tol"], threads=cfg["threads"],
    )
    wins = {Q: all(r.verdicts["ball_wins"] for r in recs if r.parameters["Q"] == Q) for Q in sorted(set(charges))}
    empirical = max((Q for Q, ok in wins.items() if ok), default=None)
    q_star = {}
    for r in recs:
        p = r.parameters
        q_star[f"l={p['l']},m={p['m']},a={p['amplitude']!r}"] = r.energies["q_star"]
    return recs, {
        "ball_wins": {repr(k): v for k, v in wins.items()},
        "empirical_threshold": empirical,
        "q_star": {k: (v if math.isfinite(v) else "inf") for k, v in q_star.items()},
    }


def _cmd_corner(cfg, out):
    ns = [int(n) for n in _floats(cfg["n_list"])] if cfg.get("n_list") else [cfg["nodes"]]
    recs = ex.corner_refinement_study(cfg["side"], ns, tol=cfg["tol"])
    return recs, {"corner_ratio": recs[-1].energies["corner_ratio"]}


def _cmd_logchecks(cfg, out):
    recs = []
    for r in (0.5, 1.0, 2.0):
        rec = ex.circle_log_energy(r, cfg["nodes"], tol=min(cfg["tol"], 1e-8))
        rec.parameters["part"] = "circle"
        recs.append(rec)
    recs += ex.log_divergence_and_scaling(
        cfg["radius"], _floats(cfg["separations"]), _floats(cfg["lambdas"]), N=cfg["nodes"], tol=min(cfg["tol"], 1e-8)
    )
    slope = next(r.energies["fitted_slope"] for r in recs if r.parameters.get("part") == "divergence")
    return recs, {"fitted_slope": slope, "closed_form_slope": -0.5}


_HANDLERS = {
    "capacity": _cmd_capacity,
    "equilibrium": _cmd_equilibrium,
    "functional": _cmd_functional,
    "nonexistence": _cmd_nonexistence,
    "splitting": _cmd_splitting,
    "stability": _cmd_stability,
    "corner": _cmd_corner,
    "logchecks": _cmd_logchecks,
}


def _stamp_csv(path, cfg):
    with open(path) as fh:
        body = fh.read()
    with open(path, "w") as fh:
        fh.write(
            f"# chargedrop {__version__} command={cfg['command']} tol={cfg['tol']!r} "
            f"max_iter={cfg['max_iter']} seed={cfg['seed']}\n"
        )
        fh.write(body)


def _manifest(cfg, status, results=None, error=None):
    return {
        "version": __version__,
        "backend": _backend.BACKEND,
        "status": status,
        "config": cfg,
        "tolerances": {"tol": cfg["tol"], "max_iter": cfg["max_iter"]},
        "results": results or {},
        "error": error,
    }


def _write_manifest(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=ex._json_default)


def run(cfg):
    """Execute one resolved configuration; returns the exit status."""
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    csv_path = os.path.join(out, "results.csv")
    man_path = os.path.join(out, "manifest.json")
    if cfg["threads"] is None:
        cfg["threads"] = os.cpu_count() or 1
    _backend.set_threads(cfg["threads"])
    try:
        result, summary = _HANDLERS[cfg["command"]](cfg, out)
        if cfg["command"] == "equilibrium":
            write_solution(result, csv_path)
        elif cfg["command"] == "functional":
            write_reports(result, csv_path)
        else:
            ex.write_records(result, csv_path)
        _stamp_csv(csv_path, cfg)
        _write_manifest(man_path, _manifest(cfg, "ok", summary))
        return EXIT_OK
    except ConvergenceError as exc:
        log.error("convergence: %s", exc)
        _write_manifest(man_path, _manifest(cfg, "convergence", {"residual": exc.residual}, str(exc)))
        return EXIT_CONVERGENCE
    except ConfigError as exc:
        log.error("config: %s", exc)
        _write_manifest(man_path, _manifest(cfg, "config", error=str(exc)))
        return EXIT_CONFIG
    except ContractError as exc:
        log.error("contract: %s", exc)
        _write_manifest(man_path, _manifest(cfg, "contract", error=str(exc)))
        return EXIT_CONTRACT


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"chargedrop: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
