"""Command-line driver: config ingestion, pipeline orchestration, reports.

Commands
--------
capacity   SH-capacity of the configured convex body (dual-min consensus).
spectrum   action spectrum up to T_max with per-entry provenance.
orbits     critical-point search: one record per periodic orbit.
index      per-orbit index report with cross-method agreement flags.
complex    filtered Morse complex: generators, boundary, Betti profile.
verify     property-suite run over the module invariants.

Configuration lives in a YAML file (nested sections, comments allowed);
command-line flags override file values, and every report embeds the
fully resolved config so runs are reproducible.  Reports are
deterministic for identical configs: the ``timings`` section carries
work counters (iterations, trajectory counts), never wall-clock.

Exit codes: 0 success, 1 validation error, 2 numerical failure,
3 invariant violation.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .capacity import action_spectrum_window, sh_capacity
from .convex_model import (
    LinearProfile,
    PowerProfile,
    QuadraticHamiltonian,
    WindowProfile,
    ball_gauge,
    ellipsoid_gauge,
    perturbed_ball_gauge,
    profile_hamiltonian,
    window_model,
)
from .critical_points import SearchConfig, find_critical_points
from .errors import DualActionError
from .loop_fourier import FourierLoop
from .morse_complex import (
    Generator,
    HeadProblem,
    betti_profile,
    build_complex,
    capacity_vanishing_check,
    euler_characteristic,
    transition_level,
    verify_d2,
)
from .reduction import reduction
from .verify import SUITES, run_suite

DEFAULT_CONFIG = {
    "problem": {
        "kind": "gauge",  # gauge | quadratic
        "gauge": "ball",  # ball | ellipsoid | perturbed_ball
        "radii": [1.0],
        "shape_eps": 0.0,  # perturbed_ball deformation
        "shape_m": 2,
        "smoothing_radius": 0.05,
        "profile": "linear",  # linear | quadratic | phomog | window
        "eta": 4.0,
        "p": 1.5,
        "orbit_slope": None,  # window profile; default min oracle action
        "window_amplitude": 4.0e-4,
        "window_phase": 0.0,
        "window_anchor": 2.0e-4,
        "n": 1,  # quadratic kind
        "quad_eta": 4.0,
        "center": None,
    },
    "numerics": {
        "N": None,
        "M": None,
        "Q": None,
        "flow_M": None,
        "multistarts": 8,
        "phase_seeds": 6,
        "rng_seed": 0,
        "grad_tol": 1.0e-9,
        "T_max": 7.0,
        "p_values": [1.5, 4.0 / 3.0],
        "mesh_points": 8,
        "trials": 2000,
        "suite": None,
        "vanishing_eps": 0.5,
        "vanishing_level": None,
    },
    "outputs": {
        "report": None,
        "csv_dir": None,
        "plot_data": False,
    },
}


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in (extra or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def load_config(path: str | None, overrides: dict) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        with open(path) as fh:
            cfg = _merge(cfg, yaml.safe_load(fh) or {})
    cfg = _merge(cfg, overrides)
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    num = cfg["numerics"]
    for key in ("grad_tol",):
        if num[key] <= 0:
            raise ValueError(f"tolerance {key} must be positive")
    if num["M"] is not None and num["Q"] is not None and num["Q"] < 4 * num["M"]:
        raise ValueError("need Q >= 4 M for alias-free quadrature")
    prob = cfg["problem"]
    if prob["kind"] not in ("gauge", "quadratic"):
        raise ValueError(f"unknown problem kind {prob['kind']!r}")
    if prob["kind"] == "gauge" and prob["gauge"] not in ("ball", "ellipsoid", "perturbed_ball"):
        raise ValueError(f"unknown gauge {prob['gauge']!r}")


def build_domain(cfg: dict):
    prob = cfg["problem"]
    sm = prob["smoothing_radius"]
    if prob["gauge"] == "ball":
        return ball_gauge(len(prob["radii"]), radius=prob["radii"][0], smoothing_radius=sm)
    if prob["gauge"] == "ellipsoid":
        return ellipsoid_gauge(prob["radii"], smoothing_radius=sm)
    return perturbed_ball_gauge(prob["shape_eps"], prob["shape_m"], smoothing_radius=sm)


def build_model(cfg: dict):
    prob = cfg["problem"]
    if prob["kind"] == "quadratic":
        return QuadraticHamiltonian.isotropic(
            prob["n"], prob["quad_eta"], b=prob["center"]
        )
    domain = build_domain(cfg)
    profile = prob["profile"]
    if profile in ("linear", "quadratic"):
        return profile_hamiltonian(domain, LinearProfile(prob["eta"]))
    if profile == "phomog":
        return profile_hamiltonian(domain, PowerProfile(prob["p"]), smoothing=False)
    if profile == "window":
        slope = prob["orbit_slope"]
        if slope is None:
            slope = float(domain.spectrum_up_to(1e3)[0])
        return window_model(
            domain,
            slope,
            amplitude=prob["window_amplitude"],
            phase=prob["window_phase"],
            anchor=prob["window_anchor"],
        )
    raise ValueError(f"unknown profile {profile!r}")


def _search_config(cfg: dict, **kw) -> SearchConfig:
    num = cfg["numerics"]
    return SearchConfig(
        n_random=max(2, num["multistarts"] - num["phase_seeds"]),
        phase_seeds=num["phase_seeds"],
        rng_seed=num["rng_seed"],
        grad_tol=num["grad_tol"],
        **kw,
    )


# ---------------------------------------------------------------------------
# command implementations
# ---------------------------------------------------------------------------


def cmd_capacity(cfg: dict) -> dict:
    domain = build_domain(cfg)
    num = cfg["numerics"]
    cap, meta = sh_capacity(
        domain,
        p_values=tuple(num["p_values"]),
        n_starts=num["multistarts"],
        rng_seed=num["rng_seed"],
    )
    return {"capacity": cap, "runs": meta["runs"], "consensus": meta["consensus"]}


def cmd_spectrum(cfg: dict) -> dict:
    domain = build_domain(cfg)
    rep = action_spectrum_window(
        domain, cfg["numerics"]["T_max"], rng_seed=cfg["numerics"]["rng_seed"]
    )
    return rep.to_json()


def _find_orbits(cfg: dict, expect_nondegenerate=False):
    H = build_model(cfg)
    num = cfg["numerics"]
    R = reduction(H, N=num["N"], M=num["M"], Q=num["Q"])
    records, meta = find_critical_points(
        R, _search_config(cfg, expect_nondegenerate=expect_nondegenerate)
    )
    return H, R, records, meta


def cmd_orbits(cfg: dict, outputs) -> dict:
    _, R, records, meta = _find_orbits(cfg)
    if outputs["csv_dir"]:
        for i, rec in enumerate(records):
            _loop_csv(Path(outputs["csv_dir"]) / f"orbit_{i}.csv", rec.orbit)
    return {
        "reduction": {"N": R.N, "M": R.M, "delta": R.delta},
        "search": meta,
        "orbits": [r.to_json() for r in records],
    }


def cmd_index(cfg: dict) -> dict:
    _, R, records, meta = _find_orbits(cfg)
    out = []
    for r in records:
        out.append(
            {
                "action": r.action,
                "dual_index": r.morse_index,
                "relative_index": r.relative_index,
                "cz_index": r.cz_index,
                "nullity": r.nullity,
                "degenerate": r.degenerate,
                "methods_agree": (None if r.degenerate else r.cz_index == r.relative_index),
                "reduced_matches_full": (
                    r.reduced_index == r.morse_index and r.reduced_nullity == r.nullity
                ),
            }
        )
    return {"search": meta, "orbits": out}


def cmd_complex(cfg: dict, outputs) -> dict:
    H, R, records, meta = _find_orbits(cfg, expect_nondegenerate=True)
    num = cfg["numerics"]
    flow_M = num["flow_M"] or max(R.N + 4, 14)
    R_flow = reduction(H, N=R.N, M=flow_M)
    gens = [
        Generator(f"g{i}", r.morse_index, r.action, r.head) for i, r in enumerate(records)
    ]
    C = build_complex(HeadProblem(R_flow), gens, metric_seed=num["rng_seed"])
    eps = num["vanishing_eps"]
    level = num["vanishing_level"]
    result = {
        "generators": [
            {"label": g.label, "index": g.index, "action": g.action} for g in C.generators
        ],
        "boundary": sorted(C.boundary),
        "d2_zero": verify_d2(C),
        "euler_characteristic": euler_characteristic(C),
        "betti_profile": betti_profile(C),
        "flow_calls": C.meta.get("flow_calls"),
    }
    try:
        tl = transition_level(C, eps)
        result["transition_level"] = tl
        if level is not None:
            result["vanishing_below_level"] = capacity_vanishing_check(C, eps, level)
    except DualActionError as exc:
        result["transition_level_error"] = str(exc)
    if outputs["csv_dir"]:
        base = Path(outputs["csv_dir"])
        _generators_csv(base / "generators.csv", records)
        _boundary_csv(base / "boundary.csv", C)
    return result


def cmd_verify(cfg: dict) -> dict:
    num = cfg["numerics"]
    names = [num["suite"]] if num["suite"] else list(SUITES)
    out, all_ok = {}, True
    for name in names:
        ok, details = run_suite(name, trials=num["trials"], seed=num["rng_seed"])
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
        out[name] = {"passed": ok, "details": _jsonable(details)}
        all_ok = all_ok and ok
    out["all_passed"] = all_ok
    return out


# ---------------------------------------------------------------------------
# reports and serialization
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _loop_csv(path: Path, loop: FourierLoop):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k"] + [f"c{i}" for i in range(2 * loop.n)])
        for k in loop.mode_numbers():
            w.writerow([k] + [f"{c:.17g}" for c in loop.coeff(int(k))])


def _generators_csv(path: Path, records):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "index", "action", "cz_index", "nullity"])
        for i, r in enumerate(records):
            w.writerow([f"g{i}", r.morse_index, f"{r.action:.17g}", r.cz_index, r.nullity])


def _boundary_csv(path: Path, C):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source", "target", "parity"])
        for src, dst in sorted(C.boundary):
            w.writerow([src, dst, 1])


def _work_counters(cfg) -> dict:
    return {}


COMMANDS = {
    "capacity": lambda cfg, outputs: cmd_capacity(cfg),
    "spectrum": lambda cfg, outputs: cmd_spectrum(cfg),
    "orbits": cmd_orbits,
    "index": lambda cfg, outputs: cmd_index(cfg),
    "complex": cmd_complex,
    "verify": lambda cfg, outputs: cmd_verify(cfg),
}


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="dualaction",
        description="Periodic orbits, indices and capacities of convex Hamiltonians "
        "via the dual action principle.",
    )
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="YAML config file")
    ap.add_argument("--report", help="write the JSON report here")
    ap.add_argument("--csv-dir", help="directory for CSV exports")
    ap.add_argument("--gauge", choices=["ball", "ellipsoid", "perturbed_ball"])
    ap.add_argument("--radii", help="comma-separated semi-axes, e.g. 1,2")
    ap.add_argument("--profile", choices=["linear", "quadratic", "phomog", "window"])
    ap.add_argument("--eta", type=float, help="linear profile slope")
    ap.add_argument("--p", type=float, help="subquadratic profile exponent")
    ap.add_argument("--quad-eta", type=float, help="isotropic quadratic coefficient")
    ap.add_argument("--kind", choices=["gauge", "quadratic"])
    ap.add_argument("--n", type=int, help="half-dimension for quadratic models")
    ap.add_argument("--T-max", type=float, dest="T_max", help="spectrum window")
    ap.add_argument("--seed", type=int, help="rng seed")
    ap.add_argument("--trials", type=int, help="verify-suite trial count")
    ap.add_argument("--suite", choices=sorted(SUITES), help="run one verify suite")
    ap.add_argument("--multistarts", type=int)
    return ap


def _overrides_from_args(args) -> dict:
    prob, num, outs = {}, {}, {}
    if args.gauge:
        prob["gauge"] = args.gauge
    if args.radii:
        prob["radii"] = [float(r) for r in args.radii.split(",")]
    if args.profile:
        prob["profile"] = args.profile
    if args.eta is not None:
        prob["eta"] = args.eta
    if args.p is not None:
        prob["p"] = args.p
    if args.quad_eta is not None:
        prob["quad_eta"] = args.quad_eta
    if args.kind:
        prob["kind"] = args.kind
    if args.n is not None:
        prob["n"] = args.n
    if args.T_max is not None:
        num["T_max"] = args.T_max
    if args.seed is not None:
        num["rng_seed"] = args.seed
    if args.trials is not None:
        num["trials"] = args.trials
    if args.suite:
        num["suite"] = args.suite
    if args.multistarts is not None:
        num["multistarts"] = args.multistarts
    if args.report:
        outs["report"] = args.report
    if args.csv_dir:
        outs["csv_dir"] = args.csv_dir
    return {"problem": prob, "numerics": num, "outputs": outs}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    t0 = time.time()
    try:
        cfg = load_config(args.config, _overrides_from_args(args))
    except (ValueError, OSError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        results = COMMANDS[args.command](cfg, cfg["outputs"])
    except DualActionError as exc:
        print(f"numerical failure [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 2
    report = {
        "command": args.command,
        "config": _jsonable(cfg),
        "results": _jsonable(results),
        "invariant_audits": _jsonable(results.get("invariant_audits", {}))
        if isinstance(results, dict)
        else {},
        "timings": _jsonable(
            results.pop("timings", {}) if isinstance(results, dict) else {}
        ),
        "versions": {"dualaction": __version__, "numpy": np.__version__},
    }
    payload = json.dumps(report, indent=2, sort_keys=True)
    if cfg["outputs"]["report"]:
        Path(cfg["outputs"]["report"]).parent.mkdir(parents=True, exist_ok=True)
        Path(cfg["outputs"]["report"]).write_text(payload + "\n")
    else:
        print(payload)
    print(f"[done] {args.command} in {time.time() - t0:.1f}s", file=sys.stderr)
    if args.command == "verify" and not results.get("all_passed", False):
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
