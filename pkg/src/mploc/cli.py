"""Command line entry point: ``mploc <command> --config FILE [--seed N] [--out DIR]``.

Each command writes ``results.json`` and one or more CSV tables into
``<output_dir>/<command>-<config hash>-seed<N>/``.  Exit status is 0 on
success, 1 when an asserted bound fails or a strict schedule is violated,
and 2 for usage, config and budget errors.
"""

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, decay, geometry, spectral, stochastics
from .config import load_config
from .errors import ConfigError, MplocError, ScheduleViolation, SingularEnergy
from .geometry import Cube
from .model import assemble, sample_potential, window_for
from .schedule import constraints

SCHEMA_VERSION = 1
COMMANDS = ("params", "classify", "stollmann", "joint", "coupling", "decay", "poisson")


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Cube):
        return obj.descriptor()
    return obj


def content_version():
    """Hash of the package sources, a stand-in for a commit id."""
    h = hashlib.sha256()
    for p in sorted(resources.files("mploc").iterdir(), key=lambda p: p.name):
        if p.name.endswith(".py"):
            h.update(p.name.encode())
            h.update(p.read_bytes())
    return h.hexdigest()[:12]


def _cube(exp, key="center", n=None, d=None):
    return Cube(geometry.as_point(exp.get(key, [0] * (n * d)), d), int(exp.get("radius", 2)))


# ----------------------------------------------------------------- commands

def cmd_params(cfg, schedule, params):
    cons = constraints(schedule, cfg.global_r)
    bad = [c for c in cons if not c.satisfied]
    rows = [(c.id, "" if c.n is None else c.n, c.lhs, c.rhs, c.margin, c.satisfied) for c in cons]
    payload = {"schedule": schedule.to_dict(), "r_threshold": schedule.r_threshold,
               "scales": [str(L) for L in schedule.scales],
               "violations": [c.describe() for c in bad]}
    for c in cons:
        mark = "ok  " if c.satisfied else "FAIL"
        print(f"{mark} {c.describe()}")
    tables = {"constraints.csv": _csv(["id", "n", "lhs", "rhs", "margin", "satisfied"], rows)}
    return payload, tables, not bad


def cmd_classify(cfg, schedule, params):
    exp = cfg.experiment
    n, d = params.n, params.d
    cubes = [_cube(exp, "center", n, d)]
    if "pair_center" in exp:
        cubes.append(_cube(exp, "pair_center", n, d))
    E = float(exp.get("E", 0.0))
    pot = sample_potential(window_for(*cubes), params.disorder, stream=0)
    out, rows = [], []
    for k, cube in enumerate(cubes):
        H = assemble(cube, params, pot)
        cls = spectral.classify(cube, H, E, schedule,
                                diagnostic_points=int(exp.get("diagnostic_points", 5)))
        item = cls.to_dict()
        item["fully_interactive"] = geometry.is_fully_interactive(cube, params.r0)
        if not item["fully_interactive"] and n > 1:
            mismatch, (J, Jc) = spectral.pi_tensor_mismatch(cube, params, pot)
            item["minkowski_mismatch"] = mismatch
            item["decomposition"] = [list(J), list(Jc)]
        out.append(item)
        rows += [(k, s, v) for s, v in cls.norm_profile.to_rows()]
    payload = {"cubes": out}
    if len(cubes) == 2:
        a, b = cubes
        w = geometry.is_weakly_separable(a, b, params.r0)
        payload["pair"] = {
            "distance": geometry.max_norm(a.u - b.u),
            "complete_separability_distance": n * (10 * a.radius + 8 * params.r0),
            "completely_separable": geometry.is_completely_separable(a, b, params.r0),
            "weak_witness": None if w is None else {"side": w.side, "J": list(w.J)},
            "separable": geometry.is_separable(a, b, params.r0),
        }
    return payload, {"norm_profile.csv": _csv(["cube", "s", "norm"], rows)}, True


def cmd_stollmann(cfg, schedule, params):
    exp = cfg.experiment
    n, d = params.n, params.d
    a = _cube(exp, "center", n, d)
    eps = exp.get("eps_grid", [1e-4, 1e-3, 1e-2, 1e-1])
    samples = int(exp.get("samples", 1000))
    if "pair_center" in exp:
        res = stochastics.mc_two_volume_stollmann(
            a, _cube(exp, "pair_center", n, d), params, eps, samples, cfg.master_seed,
            cfg.parallelism)
    else:
        res = stochastics.mc_single_volume_stollmann(
            a, params, float(exp.get("E", 0.0)), eps, samples, cfg.master_seed, cfg.parallelism)
    return res.to_dict(), {"ensemble.csv": res.to_csv()}, res.all_passed


def cmd_joint(cfg, schedule, params):
    exp = cfg.experiment
    n, d = params.n, params.d
    a, b = _cube(exp, "center", n, d), _cube(exp, "pair_center", n, d)
    grid = exp.get("E_grid")
    res = stochastics.mc_joint_singularity(
        a, b, params, schedule, int(exp.get("samples", 100)), cfg.master_seed,
        E_grid=grid, min_step=float(exp.get("min_step", 1e-4)), parallelism=cfg.parallelism)
    # the joint bound is an induction output, not a theorem at toy exponents:
    # it is recorded, never asserted
    return res.to_dict(), {"ensemble.csv": res.to_csv()}, True


def cmd_coupling(cfg, schedule, params):
    exp = cfg.experiment
    rep = stochastics.coupling_probe(int(exp.get("l", 2)), params, schedule,
                                     int(exp.get("samples", 20)), float(exp.get("E", 0.0)),
                                     cfg.master_seed, parallelism=cfg.parallelism)
    header = ["sample", "bad_centers", "clusters", "bounds_ok", "big_nonresonant",
              "hypotheses", "big_ns"]
    return rep.to_dict(), {"coupling.csv": _csv(header, rep.csv_rows())}, True


def cmd_decay(cfg, schedule, params):
    exp = cfg.experiment
    cube = _cube(exp, "center", params.n, params.d)
    pot = sample_potential(window_for(cube), params.disorder, stream=0)
    H = assemble(cube, params, pot)
    rows = decay.decay_table(H, int(exp.get("min_radius", 2)))
    claim = params.r / 300
    need = cube.radius / 4
    checked = [f for f in rows if f.boundary_margin >= need]
    failing = [f.eigen_index for f in checked if f.exponent < claim]
    exps = [f.exponent for f in rows]
    payload = {"fits": [f.to_dict() for f in rows], "claimed_exponent": claim,
               "checked": len(checked), "failing": failing,
               "median_exponent": float(np.median(exps)) if exps else None}
    return payload, {"decay.csv": decay.decay_csv(rows)}, not failing


def cmd_poisson(cfg, schedule, params):
    exp = cfg.experiment
    n, d = params.n, params.d
    big = _cube(exp, "center", n, d)
    sub_r = int(exp.get("sub_radius", 1))
    count = int(exp.get("eigenpairs", 10))
    pot = sample_potential(window_for(big), params.disorder, stream=0)
    H = assemble(big, params, pot)
    spec = spectral.eigenpairs(H)
    coords = spectral.cube_coords(big)
    checks, skipped = [], []
    for j in range(len(spec.eigenvalues)):
        if len(checks) >= count:
            break
        vec = spec.eigenvectors[:, j]
        c = decay.localization_center(vec, coords)
        if decay.boundary_margin(big, c) <= sub_r:
            continue
        try:
            checks.append((j, decay.poisson_residual(H, (spec.eigenvalues[j], vec),
                                                     Cube(c.reshape(n, d), sub_r))))
        except SingularEnergy:
            skipped.append(j)
    rows = [(j, c.E, c.max_abs_residual, c.truncation_bound, c.ok) for j, c in checks]
    payload = {"checks": [dict(c.to_dict(), eigen_index=j) for j, c in checks],
               "skipped_singular": skipped}
    table = _csv(["eigen_index", "E", "residual", "truncation_bound", "ok"], rows)
    return payload, {"poisson.csv": table}, all(c.ok for _, c in checks)


HANDLERS = {"params": cmd_params, "classify": cmd_classify, "stollmann": cmd_stollmann,
            "joint": cmd_joint, "coupling": cmd_coupling, "decay": cmd_decay,
            "poisson": cmd_poisson}


# ------------------------------------------------------------------ driver

def load_schema():
    text = resources.files("mploc").joinpath("schemas/results.v1.json").read_text()
    return json.loads(text)


def run(command, cfg, out_dir=None, overwrite=False):
    """Execute ``command`` and persist its record.  Returns ``(run_dir, record)``."""
    params = cfg.model_params()
    schedule = cfg.build_schedule()
    base = Path(out_dir if out_dir is not None else cfg.output_dir)
    run_dir = base / f"{command}-{cfg.hash()}-seed{cfg.master_seed}"
    if run_dir.exists() and not overwrite:
        raise FileExistsError(f"{run_dir} exists; pass --overwrite to replace it")
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    payload, tables, passed = HANDLERS[command](cfg, schedule, params)
    record = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "schedule_hash": schedule.hash(),
        "schedule_mode": schedule.mode,
        "schedule_violations": [c.describe() for c in constraints(schedule, cfg.global_r)
                                if not c.satisfied],
        "version": {"package": __version__, "content": content_version()},
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "elapsed_s": time.perf_counter() - t0,
        "passed": bool(passed),
        "truncated": bool(isinstance(payload, dict) and payload.get("truncated", False)),
        "payload": _jsonable(payload),
        "tables": sorted(tables),
    }
    jsonschema.validate(record, load_schema())
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "results.json").write_text(json.dumps(record, indent=2, sort_keys=True))
    for name, text in tables.items():
        (run_dir / name).write_text(text)
    return run_dir, record


def build_parser():
    ap = argparse.ArgumentParser(prog="mploc", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="YAML experiment config")
    ap.add_argument("--seed", type=int, help="override master_seed")
    ap.add_argument("--out", help="override output_dir")
    ap.add_argument("--overwrite", action="store_true", help="replace an existing run directory")
    return ap


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.master_seed = args.seed
        run_dir, record = run(args.command, cfg, args.out, args.overwrite)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ScheduleViolation as exc:
        print(f"schedule violation: {exc}", file=sys.stderr)
        for c in exc.violations:
            print(f"  {c.describe()}", file=sys.stderr)
        return 1
    except (MplocError, FileExistsError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(f"{args.command}: {'passed' if record['passed'] else 'FAILED'} -> {run_dir}")
    if record["command"] == "params" and record["schedule_violations"]:
        return 1
    return 0 if record["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
