"""Command-line front end.

``pulseforge synth`` ingests a JSON problem file, runs the shooting solve
and writes the envelope, initial-costate record and run manifest.
``pulseforge verify`` sweeps disturbance magnitudes from those artifacts
and gates on fitted slopes; ``pulseforge export-curves`` writes the
propagator trajectory and error-curve CSVs.

Exit codes: 0 success, 2 validation or artifact problems, 3 solver
non-convergence (the manifest is still written with the best attempt).
"""

import argparse
import csv
import hashlib
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import model, shoot, verify

_DEFAULT_MIN_SLOPE = {1: 3.5, 2: 4.5, 3: 5.0}
_DEFAULT_GRID = {1: (1e-3, 3e-2, 10), 2: (3e-2, 3e-1, 10), 3: (1e-1, 5e-1, 10)}


def _fingerprint(problem: dict) -> str:
    canon = json.dumps(problem, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _idx_key(idx) -> str:
    return ",".join(str(i) for i in idx)


def _write_envelope(path: Path, envelope: np.ndarray, m: int) -> None:
    with path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t"] + [f"u_{j + 1}" for j in range(m)])
        for row in envelope:
            w.writerow([f"{x:.17g}" for x in row])


def _write_costate(path: Path, solution, spec) -> None:
    from . import dynamics  # local import keeps CLI imports light

    tbl = dynamics.tables(spec)
    z = solution.unknowns
    K = tbl.K
    blocks = {"mu_R": z[0:K].tolist()}
    for row, idx in enumerate(spec.multi_indices):
        a = K + row * K
        blocks[f"mu[{_idx_key(idx)}]"] = z[a : a + K].tolist()
    pos = K + tbl.p * K
    if tbl.smoothing:
        blocks["mu_u"] = z[pos : pos + tbl.m].tolist()
        pos += tbl.m
    if tbl.fict:
        blocks["drift_scale"] = z[pos]
    path.write_text(json.dumps({"unknowns": z.tolist(), "blocks": blocks}, indent=2))


def cmd_synth(args) -> int:
    try:
        raw = json.loads(Path(args.problem).read_text())
    except FileNotFoundError:
        print(f"error: problem file not found: {args.problem}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: {args.problem}:{exc.lineno}:{exc.colno}: {exc.msg}", file=sys.stderr)
        return 2
    try:
        spec = model.validate(model.problem_from_dict(raw))
    except ValueError as exc:
        print(f"error: {args.problem}: {exc}", file=sys.stderr)
        return 2

    cfg = raw.get("solver", {})
    options = shoot.SolveOptions(
        seed=args.seed if args.seed is not None else int(cfg.get("seed", 0)),
        multistart_count=args.starts if args.starts is not None else int(cfg.get("starts", 16)),
        sigma=args.sigma if args.sigma is not None else float(cfg.get("sigma", 1.0)),
        tol=args.tol if args.tol is not None else float(cfg.get("tol", 1e-8)),
        steps=args.steps if args.steps is not None else int(cfg.get("steps", 512)),
    )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    problem_dict = model.problem_to_dict(spec)

    t0 = time.perf_counter()
    manifest = {
        "fingerprint": _fingerprint(problem_dict),
        "problem": problem_dict,
        "options": {
            "seed": options.seed,
            "starts": options.multistart_count,
            "sigma": options.sigma,
            "tol": options.tol,
            "max_iter": options.max_iter,
            "steps": options.steps,
        },
        "created": datetime.now(timezone.utc).isoformat(),
    }
    try:
        solution = shoot.solve(spec, options)
    except shoot.SolveError as exc:
        manifest.update(
            converged=False,
            best_residual_norm=exc.best_residual,
            runtime_seconds=time.perf_counter() - t0,
        )
        (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2))
        print(f"error: {exc}", file=sys.stderr)
        return 3

    _write_envelope(outdir / "envelope.csv", solution.envelope, spec.m)
    _write_costate(outdir / "costate.json", solution, spec)
    manifest.update(
        converged=True,
        steps_used=solution.steps_used,
        residual_norm=solution.residual_norm,
        cost_J=solution.cost_J,
        start_index=solution.start_index,
        closures={_idx_key(i): v for i, v in solution.omega_final_norms.items()},
        candidates=solution.candidates,
        runtime_seconds=time.perf_counter() - t0,
        artifacts={"envelope": "envelope.csv", "costate": "costate.json"},
    )
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    print(
        f"converged: residual {solution.residual_norm:.3e}, cost {solution.cost_J:.6g}, "
        f"steps {solution.steps_used}, start {solution.start_index}"
    )
    return 0


def _load_run(rundir: Path):
    manifest_path = rundir / "manifest.json"
    envelope_path = rundir / "envelope.csv"
    if not manifest_path.exists() or not envelope_path.exists():
        raise FileNotFoundError(f"missing manifest.json or envelope.csv in {rundir}")
    manifest = json.loads(manifest_path.read_text())
    spec = model.validate(model.problem_from_dict(manifest["problem"]))
    envelope = np.loadtxt(envelope_path, delimiter=",", skiprows=1, ndmin=2)
    return manifest, spec, envelope


class _EnvelopeSource:
    """Duck-typed stand-in for a PulseSolution when only artifacts exist."""

    def __init__(self, envelope, unknowns=None):
        self.envelope = envelope
        if unknowns is not None:
            self.unknowns = unknowns


def _parse_grid(text: str):
    try:
        a, b, count = text.split(":")
        a, b, count = float(a), float(b), int(count)
    except ValueError:
        raise ValueError(f"bad grid spec {text!r}, expected a:b:count")
    if count < 2 or not 0 < a < b:
        raise ValueError("degenerate grid: need at least two increasing positive points")
    return np.geomspace(a, b, count)


def cmd_verify(args) -> int:
    rundir = Path(args.rundir)
    try:
        manifest, spec, envelope = _load_run(rundir)
        grid = (
            _parse_grid(args.grid)
            if args.grid
            else np.geomspace(*_DEFAULT_GRID[spec.order])
        )
    except (FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    costate_path = rundir / "costate.json"
    unknowns = None
    if costate_path.exists():
        unknowns = np.asarray(json.loads(costate_path.read_text())["unknowns"])
    source = _EnvelopeSource(envelope, unknowns)
    min_slope = args.min_slope if args.min_slope is not None else _DEFAULT_MIN_SLOPE[spec.order]
    axes = [args.axis] if args.axis is not None else list(range(1, spec.n + 1))

    summary = {"min_slope": min_slope, "axes": {}}
    ok = True
    for axis in axes:
        result = verify.sweep(source, spec, axis, grid)
        out = rundir / f"sweep_axis{axis}.csv"
        with out.open("w", newline="") as f:
            w = csv.writer(f)
            w.writerow([f"eps_{i + 1}" for i in range(spec.n)] + ["infidelity"])
            for row, infid in zip(result.epsilons, result.infidelities):
                w.writerow([f"{x:.17g}" for x in row] + [f"{infid:.17g}"])
        slope = result.fitted_slope
        summary["axes"][str(axis)] = {
            "slope": slope,
            "csv": out.name,
            "fit_range": list(result.fit_range),
        }
        label = "undefined" if slope is None else f"{slope:.3f}"
        print(f"axis {axis}: slope {label} (min {min_slope})")
        if slope is None or slope < min_slope:
            ok = False
    (rundir / "sweep_summary.json").write_text(json.dumps(summary, indent=2))
    return 0 if ok else 1


def cmd_export_curves(args) -> int:
    rundir = Path(args.rundir)
    try:
        manifest, spec, envelope = _load_run(rundir)
    except (FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    unknowns = None
    costate_path = rundir / "costate.json"
    if costate_path.exists():
        unknowns = np.asarray(json.loads(costate_path.read_text())["unknowns"])
    source = _EnvelopeSource(envelope, unknowns)

    times, R, curves = verify.audit_curves(source, spec)
    prop = rundir / "propagator.csv"
    with prop.open("w", newline="") as f:
        w = csv.writer(f)
        if spec.dimension == 2:
            # R = [[alpha, -conj(beta)], [beta, conj(alpha)]]
            w.writerow(["t", "re_alpha", "im_alpha", "re_beta", "im_beta"])
            for t, Rt in zip(times, R):
                a, b = Rt[0, 0], Rt[1, 0]
                w.writerow([f"{x:.17g}" for x in (t, a.real, a.imag, b.real, b.imag)])
        else:
            n = spec.dimension
            header = ["t"]
            for i in range(n):
                for j in range(n):
                    header += [f"re_R{i}{j}", f"im_R{i}{j}"]
            w.writerow(header)
            for t, Rt in zip(times, R):
                row = [t]
                for i in range(n):
                    for j in range(n):
                        row += [Rt[i, j].real, Rt[i, j].imag]
                w.writerow([f"{x:.17g}" for x in row])
    written = [prop.name]
    for idx, coords in curves.items():
        out = rundir / f"error_curve_{'_'.join(str(i) for i in idx)}.csv"
        with out.open("w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t"] + [f"c_{k + 1}" for k in range(coords.shape[1])])
            for t, row in zip(times, coords):
                w.writerow([f"{x:.17g}" for x in (t, *row)])
        written.append(out.name)
    print("wrote " + ", ".join(written))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pulseforge",
        description="Synthesize and verify noise-robust quantum gate pulses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="solve a problem file and write pulse artifacts")
    p.add_argument("problem", help="JSON problem file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--starts", type=int, default=None, help="multistart count")
    p.add_argument("--tol", type=float, default=None, help="residual tolerance")
    p.add_argument("--sigma", type=float, default=None, help="initial-costate scale")
    p.add_argument("--steps", type=int, default=None, help="exploration RK4 steps")
    p.add_argument("--out", default="run", help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify", help="sweep disturbances and gate on slopes")
    p.add_argument("rundir", help="directory written by synth")
    p.add_argument("--axis", type=int, default=None, help="1-based disturbance axis")
    p.add_argument("--grid", default=None, help="a:b:count log-spaced magnitudes")
    p.add_argument("--min-slope", type=float, default=None, dest="min_slope")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("export-curves", help="write propagator and error-curve CSVs")
    p.add_argument("rundir", help="directory written by synth")
    p.set_defaults(func=cmd_export_curves)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
