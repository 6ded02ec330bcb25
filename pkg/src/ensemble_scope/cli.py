"""Command-line front end.

Every command writes a JSON run manifest; ``replay`` re-runs one and checks
that the primary outputs are byte-identical.

Exit codes: 0 success, 2 input error, 3 numerical error, 4 demo check failed.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import platform
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .ensemble import (RNG_ALGORITHM, indistinguishability_check, output_variance, pushforward,
                       read_snapshot_dir, snapshots, write_snapshot_csv)
from .io import InputError, file_digest, load_mixture, load_system
from .moments import cumulant_design_matrix, full_pipeline
from .observability import (analyze, constrained_hautus_independence, hautus_observable, is_observable,
                            kalman_rank, rational_independence_test, unobservable_subspace)
from .tomo import PixelGrid, reconstruct, write_grid_csv

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_DEMO = 0, 2, 3, 4
DEMOS = ("example1", "system14", "rotation", "bimodal-art")

log = logging.getLogger("ensemble_scope")


class NumericalError(RuntimeError):
    pass


@dataclass
class RunManifest:
    command: str
    argv: List[str]
    params: dict
    cwd: str
    version: str = __version__
    rng: str = RNG_ALGORITHM
    seeds: dict = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)    # path -> sha256
    outputs: Dict[str, str] = field(default_factory=dict)   # path -> sha256
    timing: Dict[str, float] = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    platform: str = field(default_factory=lambda: f"{platform.system()}-{platform.machine()} "
                                                  f"python {platform.python_version()} numpy {np.__version__}")

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, default=_json_default)
            fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _finite(x, what: str):
    if not np.all(np.isfinite(np.asarray(x, dtype=float))):
        raise NumericalError(f"non-finite values in {what}")


# ---------------------------------------------------------------------------
# argument helpers


def parse_times(text: str) -> np.ndarray:
    """``"0,0.5,1"`` or ``"START:STOP:COUNT"`` (inclusive, equispaced)."""
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            times = np.linspace(float(start), float(stop), int(count))
        else:
            times = np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise InputError(f"cannot parse times {text!r}") from None
    if times.size == 0 or np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise InputError("times must be nonnegative, distinct and increasing")
    return times


def parse_grid(text: str) -> Tuple[int, int]:
    try:
        nx, ny = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise InputError(f"grid must look like 64x64, got {text!r}") from None
    return nx, ny


def parse_box(text: str) -> Tuple[float, float, float, float]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise InputError(f"box must be x0,x1,y0,y1, got {text!r}") from None
    if len(vals) != 4:
        raise InputError(f"box must be x0,x1,y0,y1, got {text!r}")
    return vals


def _manifest_path(args, default_stem: str) -> Path:
    if args.manifest:
        return Path(args.manifest)
    out = getattr(args, "output", None)
    if out:
        out = Path(out)
        return out / "manifest.json" if out.is_dir() or out.suffix == "" else Path(str(out) + ".manifest.json")
    return Path(f"{default_stem}.manifest.json")


# ---------------------------------------------------------------------------
# commands; each fills the manifest and returns an exit code


def cmd_analyze(args, manifest: RunManifest) -> int:
    system = load_system(args.system)
    manifest.inputs[args.system] = file_digest(args.system)
    report = analyze(system, p_max=args.pmax, z_bound=args.zbound, tol=args.tol,
                     independence=args.independence)
    d = report.to_dict()
    manifest.results = {"summary": d["summary"]}
    if args.json:
        print(json.dumps(d, indent=2, default=_json_default))
    else:
        print(report.text())
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(d, fh, indent=2, default=_json_default)
            fh.write("\n")
        manifest.outputs[args.output] = file_digest(args.output)
    return EXIT_OK


def cmd_simulate(args, manifest: RunManifest) -> int:
    system = load_system(args.system)
    mix = load_mixture(args.mixture)
    manifest.inputs = {args.system: file_digest(args.system), args.mixture: file_digest(args.mixture)}
    if mix.dim != system.n:
        raise InputError(f"mixture dimension {mix.dim} does not match state dimension {system.n}")
    times = parse_times(args.times)
    manifest.seeds = {"seed": args.seed, "per_time": "SeedSequence(seed).spawn(len(times))"}
    snaps = snapshots(system, mix, times, args.count, args.seed)
    for s in snaps:
        _finite(s.samples, f"snapshot t={s.time}")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "snapshots.csv"
    write_snapshot_csv(path, snaps)
    manifest.outputs[str(path)] = file_digest(path)
    manifest.results = {"times": times.tolist(), "count": args.count}
    print(f"wrote {len(snaps)} snapshots of {args.count} samples to {path}")
    return EXIT_OK


def cmd_reconstruct_art(args, manifest: RunManifest) -> int:
    system = load_system(args.system)
    snaps = read_snapshot_dir(args.snapshots)
    manifest.inputs = {args.system: file_digest(args.system), args.snapshots: file_digest(args.snapshots)}
    nx, ny = parse_grid(args.grid)
    x0, x1, y0, y1 = parse_box(args.box)
    grid = PixelGrid(x0, x1, y0, y1, nx, ny)
    rec = reconstruct(system, snaps, grid, bins=args.bins, sweeps=args.sweeps,
                      relaxation=args.relax, subsample=args.subsample)
    _finite(rec.grid.values, "reconstruction")
    write_grid_csv(args.output, rec.grid)
    manifest.outputs[args.output] = file_digest(args.output)
    manifest.results = {"residuals": rec.residuals, "mass_before_normalization": rec.mass_before_normalization,
                        "mass_defect": rec.mass_defect}
    print(f"sweeps {args.sweeps}: final residual {rec.residuals[-1]:.4g}, "
          f"mass before normalization {rec.mass_before_normalization:.4f}; wrote {args.output}")
    return EXIT_OK


def cmd_reconstruct_moments(args, manifest: RunManifest) -> int:
    system = load_system(args.system)
    snaps = read_snapshot_dir(args.snapshots)
    manifest.inputs = {args.system: file_digest(args.system), args.snapshots: file_digest(args.snapshots)}
    ladder = full_pipeline(system, snaps, p_max=args.pmax, mode=args.mode, tol=args.tol)
    for o in ladder.orders:
        _finite(o.values, f"order {o.order}")
    d = ladder.to_dict()
    with open(args.output, "w") as fh:
        json.dump(d, fh, indent=2, default=_json_default)
        fh.write("\n")
    manifest.outputs[args.output] = file_digest(args.output)
    manifest.results = {k: {"condition_number": v["condition_number"], "ambiguous": v["ambiguous"]}
                        for k, v in d["orders"].items()}
    for o in ladder.orders:
        flag = "AMBIGUOUS" if o.ambiguous else "unique"
        print(f"order {o.order}: rank {o.rank}, condition {o.condition_number:.3g}, residual {o.residual:.3g}, {flag}")
    for note in ladder.notes:
        print("note:", note)
    return EXIT_OK


# ---------------------------------------------------------------------------
# demos


Check = Tuple[str, bool, str]


def _demo_example1(args) -> List[Check]:
    from .systems import bimodal_example, drift_pair

    unobs, obs = drift_pair("unobservable"), drift_pair("observable")
    U = unobservable_subspace(unobs)
    span_ok = U.shape[1] == 1 and abs(abs(U[0, 0]) - 1.0) < 1e-12
    agree = all(kalman_rank(s) == s.n if hautus_observable(s) else kalman_rank(s) < s.n for s in (unobs, obs))
    mix = bimodal_example()
    shifted = mix.shift([0.5, 0.0])
    times = np.linspace(0.0, 3.0, 10)
    dev = 0.0
    for t in times:
        a, b = pushforward(mix, unobs.output_map(t)), pushforward(shifted, unobs.output_map(t))
        dev = max(dev, np.abs(a.means - b.means).max(), np.abs(a.covariances - b.covariances).max())
    res = indistinguishability_check(obs, mix, shifted, times, p_max=2)
    return [
        ("C'=(0,1) unobservable with kernel span{(1,0)}", span_ok, f"basis {U.ravel().tolist()}"),
        ("C''=(1,0) observable", is_observable(obs), ""),
        ("Kalman and Hautus agree", agree, ""),
        ("shift along (1,0) invisible under C'", dev < 1e-12, f"max deviation {dev:.2e}"),
        ("shift along (1,0) visible under C''", not res.indistinguishable, f"max deviation {res.max_deviation:.3g}"),
    ]


def _demo_system14(args) -> List[Check]:
    from .systems import diagonal_covariances, diagonal_three_mode

    sysd = diagonal_three_mode()
    s1, s2 = diagonal_covariances(1.0)
    ts = np.linspace(0.0, 5.0, 50)
    expected = 1 + np.exp(-2 * ts) + np.exp(-4 * ts)
    dev = max(max(abs(output_variance(sysd, S, t)[0, 0] - e) for t, e in zip(ts, expected)) for S in (s1, s2))
    report = analyze(sysd, p_max=3, independence=True)
    witness = rational_independence_test([0.0, -1.0, -2.0], z_bound=2).witness
    return [
        ("output variance (1+e^-2t+e^-4t) for both covariances", dev < 1e-10, f"max deviation {dev:.2e}"),
        ("second covariance positive definite", bool(np.all(np.linalg.eigvalsh(s2) > 0)), ""),
        ("order 2 blocked by x2^2 - x1*x3", report.summary().endswith("order 2 blocked by x2^2 - x1*x3"),
         report.summary()),
        ("eigenvalue witness (1,-2,1)", witness == (1, -2, 1), f"witness {witness}"),
        ("independence-constrained order 2 passes", report.independence_constrained[1].passes, ""),
    ]


def _demo_rotation(args) -> List[Check]:
    from .systems import rotation_covariances, rotation_system

    rot = rotation_system()
    s1, s2 = rotation_covariances(1.0)
    ts = np.linspace(0.0, 2 * np.pi, 60)
    dev = max(max(abs(output_variance(rot, S, t)[0, 0] - 4.0) for t in ts) for S in (s1, s2))
    con = constrained_hautus_independence(rot, 2)
    target = np.array([1.0, 0, 0, 1.0, 0, -1.0]) / np.sqrt(3)
    cos = 0.0 if con.witness is None else abs(float(con.witness @ target))
    G = cumulant_design_matrix(rot, 2, ts)
    null = G @ np.array([1.0, 1.0, -1.0])
    return [
        ("flat output variance 4 for both covariances", dev < 1e-10, f"max deviation {dev:.2e}"),
        ("independence-constrained order 2 fails", not con.passes, f"smallest angle {con.smallest_angle:.2e}"),
        ("witness along (1,0,0,1,0,-1)", cos > 1 - 1e-8, f"cosine {cos:.12f}"),
        ("cumulant design null direction (1,1,-1)", np.abs(null).max() < 1e-12, f"max {np.abs(null).max():.2e}"),
    ]


def _demo_bimodal_art(args) -> List[Check]:
    from .experiments import ART_SEED, art_experiment

    exp = art_experiment(seed=ART_SEED, count=args.count)
    details = {
        "residual decreases (sweep 3 < sweep 1)": f"{exp.residuals[0]:.3g} -> {exp.residuals[2]:.3g}",
        "pre-normalization mass defect < 5%": f"mass {exp.mass_before_normalization:.4f}",
        "relative L2 error at sweep 5 < 0.5": f"{exp.l2_by_sweep[4]:.3f}",
        "both modes resolved as local maxima within 0.3": f"{len(exp.maxima)} maxima in total",
    }
    return [(name, ok, details[name]) for name, ok in exp.checks().items()]


_DEMOS: Dict[str, Callable] = {
    "example1": _demo_example1,
    "system14": _demo_system14,
    "rotation": _demo_rotation,
    "bimodal-art": _demo_bimodal_art,
}


def cmd_demo(args, manifest: RunManifest) -> int:
    if args.name == "bimodal-art":
        from .experiments import ART_SEED
        manifest.seeds = {"seed": ART_SEED}
    checks = _DEMOS[args.name](args)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
    manifest.results = {name: {"pass": bool(ok), "detail": detail} for name, ok, detail in checks}
    return EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_DEMO


def cmd_replay(args, manifest: Optional[RunManifest]) -> int:
    try:
        with open(args.manifest_file) as fh:
            old = json.load(fh)
        argv, cwd = old["argv"], old["cwd"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise InputError(f"cannot read manifest {args.manifest_file}: {exc}") from None
    with contextlib.chdir(cwd) if hasattr(contextlib, "chdir") else _chdir(cwd):
        for path, digest in old.get("inputs", {}).items():
            if file_digest(path) != digest:
                raise InputError(f"input {path} changed since the recorded run")
        with tempfile.TemporaryDirectory() as tmp:
            new_manifest = os.path.join(tmp, "replay.json")
            code = main(_with_manifest(argv, new_manifest))
            with open(new_manifest) as fh:
                new = json.load(fh)
        same = True
        for path, digest in old.get("outputs", {}).items():
            now = new["outputs"].get(path)
            ok = now == digest
            same &= ok
            print(f"{'identical' if ok else 'DIFFERS'}  {path}")
    if code != EXIT_OK:
        return code
    return EXIT_OK if same else EXIT_DEMO


@contextlib.contextmanager
def _chdir(path):
    old = os.getcwd()
    os.chdir(path)
    try:
        yield
    finally:
        os.chdir(old)


def _with_manifest(argv: List[str], path: str) -> List[str]:
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--manifest":
            skip = True
            continue
        if a.startswith("--manifest="):
            continue
        out.append(a)
    return out + ["--manifest", path]


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ensemble-scope", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--manifest", help="where to write the run manifest (default: next to the output)")

    a = sub.add_parser("analyze", help="classical, lifted and independence-constrained observability report")
    a.add_argument("system", help="system JSON with keys A and C")
    a.add_argument("--pmax", type=int, default=4, help="highest lifted order to check (default 4)")
    a.add_argument("--zbound", type=int, default=5, help="bound on |z_i| in the integer-relation search (default 5)")
    a.add_argument("--tol", type=float, default=1e-9, help="relative rank tolerance (default 1e-9)")
    a.add_argument("--independence", action="store_true", help="also run the independence-constrained test")
    a.add_argument("--json", action="store_true", help="print the JSON report instead of text")
    a.add_argument("-o", "--output", help="also write the JSON report here")
    common(a)
    a.set_defaults(func=cmd_analyze, stem="analyze")

    s = sub.add_parser("simulate", help="sample output snapshots of a Gaussian-mixture ensemble")
    s.add_argument("system")
    s.add_argument("mixture", help="mixture JSON: weights/means/covariances or mean/cov")
    s.add_argument("--times", required=True, help='comma list "0,0.5,1" or "START:STOP:COUNT"')
    s.add_argument("--count", type=int, default=100_000, help="samples per time (default 100000)")
    s.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    s.add_argument("-o", "--output", required=True, help="output directory")
    common(s)
    s.set_defaults(func=cmd_simulate, stem="simulate")

    r = sub.add_parser("reconstruct-art", help="tomographic (Kaczmarz) reconstruction of a 2-D initial density")
    r.add_argument("system")
    r.add_argument("snapshots", help="snapshot CSV file or directory of CSV files")
    r.add_argument("--grid", default="64x64", help="pixels NXxNY (default 64x64)")
    r.add_argument("--box", required=True, help="state-space box x0,x1,y0,y1")
    r.add_argument("--bins", type=int, default=40, help="equal-width bins per time (default 40)")
    r.add_argument("--sweeps", type=int, default=7, help="Kaczmarz sweeps (default 7)")
    r.add_argument("--relax", type=float, default=1.0, help="relaxation in (0, 2) (default 1.0)")
    r.add_argument("--subsample", type=int, default=4, help="strip-weight subsampling per pixel axis (default 4)")
    r.add_argument("-o", "--output", required=True, help="grid CSV (x,y,value)")
    common(r)
    r.set_defaults(func=cmd_reconstruct_art, stem="reconstruct-art")

    m = sub.add_parser("reconstruct-moments", help="recover initial moments or cumulants order by order")
    m.add_argument("system")
    m.add_argument("snapshots")
    m.add_argument("--pmax", type=int, default=3, help="highest order (default 3)")
    m.add_argument("--mode", choices=("moments", "cumulants"), default="moments")
    m.add_argument("--tol", type=float, default=1e-9, help="relative rank tolerance (default 1e-9)")
    m.add_argument("-o", "--output", required=True, help="ladder JSON")
    common(m)
    m.set_defaults(func=cmd_reconstruct_moments, stem="reconstruct-moments")

    d = sub.add_parser("demo", help="run a worked example with pinned seeds and check expected values")
    d.add_argument("name", choices=DEMOS)
    d.add_argument("--count", type=int, default=100_000, help="samples per time for bimodal-art (default 100000)")
    common(d)
    d.set_defaults(func=cmd_demo, stem=None)

    rp = sub.add_parser("replay", help="re-run a manifest and compare output digests")
    rp.add_argument("manifest_file")
    rp.set_defaults(func=cmd_replay, stem=None)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "replay":
        manifest = None
    else:
        params = {k: v for k, v in vars(args).items() if k not in ("func", "stem", "manifest", "verbose")}
        manifest = RunManifest(command=args.command, argv=argv, params=params, cwd=os.getcwd())
    start = time.perf_counter()
    try:
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            code = args.func(args, manifest)
    except (InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if manifest is not None:
        manifest.timing = {"seconds": round(time.perf_counter() - start, 6)}
        stem = args.stem or f"demo-{args.name}"
        path = _manifest_path(args, stem)
        manifest.write(path)
        log.info("manifest written to %s", path)
    return code


if __name__ == "__main__":
    sys.exit(main())
