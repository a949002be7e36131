"""Command-line entry points: scenario runs, benchmarks, studies, teleop server.

Subcommands
-----------
run        simulate a scenario file (or bundled scenario name), write logs
bench      distance+gradient cycle-time scaling over pair count and workers
gradstudy  smoothed-gradient accuracy grid vs the finite-difference oracle
figtwo     implicit-surrogate vs SDF sweep for the two-superquadric pair
voxel      voxel coverage / over-approximation sanity report
serve      WebSocket teleoperation server (see :mod:`sqfilter.server`)

Each study is exposed as a plain function returning records so tests can call
it without going through argv.
"""

from __future__ import annotations

import argparse
import csv
import json
import multiprocessing as mp
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from .distance import DistanceQuery, signed_distance
from .geometry import Pose, Superquadric, sample_surface, voxel_metrics
from .harness import load_scenario, run, write_cycle_log
from .oracle import fd_gradient, implicit_surrogate_value, sdf_reference
from .smoothing import SmoothingConfig, pose_gradient
from .so3 import rotation_about

__all__ = [
    "main",
    "fig2_sweep",
    "gradient_study",
    "bench_sweep",
    "voxel_report",
    "resolve_scenario",
]


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def resolve_scenario(name: str) -> Path:
    """A filesystem path as-is, otherwise a bundled scenario by name."""
    p = Path(name)
    if p.exists():
        return p
    stem = name[:-5] if name.endswith(".json") else name
    bundled = resources.files("sqfilter").joinpath(f"data/scenarios/{stem}.json")
    with resources.as_file(bundled) as fp:
        if fp.exists():
            return Path(fp)
    raise FileNotFoundError(f"no scenario file or bundled scenario named {name!r}")


def cmd_run(args) -> int:
    try:
        scenario = load_scenario(resolve_scenario(args.scenario))
    except (FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        scenario.seed = args.seed
    metrics, log = run(scenario, filter_on=(args.filter == "on"))
    out = metrics.to_dict()
    out["scenario"] = scenario.name
    out["filter"] = args.filter
    print(json.dumps(out, indent=2))
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "metrics.json").write_text(json.dumps(out, indent=2) + "\n")
        write_cycle_log(log, outdir / "cycles.jsonl")
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

_BENCH_PAIRS: list = []


def _make_pairs(n_pairs: int, seed: int, mesh_n: int) -> list:
    """Deterministic random separated SQ pairs, meshed once."""
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n_pairs):
        sqs, poses = [], []
        base = rng.uniform(-0.5, 0.5, size=3)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        gap = rng.uniform(0.01, 0.2)
        offset = 0.0
        for k in range(2):
            a = rng.uniform(0.05, 0.12, size=3)
            e = rng.uniform(0.3, 1.0, size=2)
            sq = Superquadric(*a, e[0], e[1])
            R = rotation_about(rng.normal(size=3), rng.uniform(0, np.pi))
            r_bound = float(np.linalg.norm(a))
            offset += r_bound if k == 0 else 0.0
            t = base + direction * (offset + (gap + r_bound if k == 1 else 0.0))
            poses.append(Pose(R, t))
            sqs.append(sq)
        pairs.append((sample_surface(sqs[0], mesh_n, mesh_n), poses[0],
                      sample_surface(sqs[1], mesh_n, mesh_n), poses[1]))
    return pairs


def _bench_init(n_pairs: int, seed: int, mesh_n: int) -> None:
    global _BENCH_PAIRS
    _BENCH_PAIRS = _make_pairs(n_pairs, seed, mesh_n)


def _bench_chunk(bounds: tuple) -> float:
    """One distance+gradient evaluation per pair in [start, stop)."""
    start, stop = bounds
    cfg = SmoothingConfig()
    d_min = np.inf
    for i in range(start, stop):
        pa, qa, pb, qb = _BENCH_PAIRS[i]
        w = signed_distance(DistanceQuery(pa, pb, qa, qb))
        pose_gradient(DistanceQuery(pa, pb, qa, qb), w, cfg)
        d_min = min(d_min, w.d)
    return d_min


def bench_sweep(pair_counts, workers: int = 1, repeats: int = 5, seed: int = 0,
                mesh_n: int = 32) -> list:
    """Mean/std wall time of a full distance+gradient pass over `pairs` pairs.

    Worker processes are forked once per pair count with the pair set built in
    the initializer, so the timed region contains only the per-cycle work.
    """
    records = []
    for n_pairs in pair_counts:
        chunk = max(1, -(-n_pairs // max(workers, 1)))
        bounds = [(i, min(i + chunk, n_pairs)) for i in range(0, n_pairs, chunk)]
        times = []
        if workers <= 1:
            _bench_init(n_pairs, seed, mesh_n)
            for rep in range(repeats + 1):
                t0 = time.perf_counter()
                for b in bounds:
                    _bench_chunk(b)
                if rep > 0:  # first pass warms caches
                    times.append(time.perf_counter() - t0)
        else:
            ctx = mp.get_context("fork")
            with ctx.Pool(workers, initializer=_bench_init,
                          initargs=(n_pairs, seed, mesh_n)) as pool:
                for rep in range(repeats + 1):
                    t0 = time.perf_counter()
                    pool.map(_bench_chunk, bounds)
                    if rep > 0:
                        times.append(time.perf_counter() - t0)
        records.append({
            "pairs": n_pairs,
            "workers": workers,
            "mean_ms": float(np.mean(times) * 1e3) if times else 0.0,
            "std_ms": float(np.std(times) * 1e3) if times else 0.0,
            "repeats": repeats,
        })
    return records


def cmd_bench(args) -> int:
    pair_counts = [int(s) for s in args.pairs.split(",")]
    records = bench_sweep(pair_counts, workers=args.workers,
                          repeats=args.repeats, seed=args.seed)
    for rec in records:
        print(f"pairs={rec['pairs']:4d} workers={rec['workers']} "
              f"mean={rec['mean_ms']:.2f} ms  std={rec['std_ms']:.2f} ms")
    if args.out:
        _write_csv(Path(args.out), records)
    return 0


# ---------------------------------------------------------------------------
# gradstudy
# ---------------------------------------------------------------------------


def _align_rotation(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotation taking unit vector u to unit vector v."""
    axis = np.cross(u, v)
    s = float(np.linalg.norm(axis))
    c = float(np.dot(u, v))
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        # antipodal: rotate pi about any perpendicular axis
        perp = np.array([1.0, 0.0, 0.0]) if abs(u[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        axis = np.cross(u, perp)
        return rotation_about(axis, np.pi)
    return rotation_about(axis, float(np.arctan2(s, c)))


def gradient_study(d_c_list=(0.3, 0.5, 1.0), eps_list=(1e-6, 1e-8, 1e-10),
                   mesh_n: int = 64, fd_step: float = 1e-6) -> list:
    """Relative x-gradient error grid: smoothed pipeline vs FD-of-oracle.

    Sphere-sphere (e=1.0) and cube-cube (e=0.3), a=0.1, face-face and
    vertex-vertex alignments, bodies separated along x by centroid distance
    d_c. The reference is a central difference of the constrained-optimization
    SDF with respect to body b's x translation.
    """
    shapes = {
        "sphere": Superquadric(0.1, 0.1, 0.1, 1.0, 1.0),
        "cube": Superquadric(0.1, 0.1, 0.1, 0.3, 0.3),
    }
    diag = np.ones(3) / np.sqrt(3.0)
    ex = np.array([1.0, 0.0, 0.0])
    orientations = {
        "face": (np.eye(3), np.eye(3)),
        "vertex": (_align_rotation(diag, ex), _align_rotation(diag, -ex)),
    }
    records = []
    for shape_name, sq in shapes.items():
        poly = sample_surface(sq, mesh_n, mesh_n)
        for orient_name, (Ra, Rb) in orientations.items():
            if shape_name == "sphere" and orient_name == "vertex":
                continue  # rotation-invariant
            for d_c in d_c_list:
                pose_a = Pose(Ra, np.zeros(3))
                pose_b = Pose(Rb, np.array([d_c, 0.0, 0.0]))

                def d_of_x(x, _pa=pose_a, _Rb=Rb):
                    xv = float(np.atleast_1d(x)[0])
                    return sdf_reference(sq, _pa, sq,
                                         Pose(_Rb, np.array([xv, 0.0, 0.0])))

                ref_x = float(fd_gradient(d_of_x, np.array([d_c]), fd_step)[0])
                for eps in eps_list:
                    cfg = SmoothingConfig(temperature=eps)
                    q = DistanceQuery(poly, poly, pose_a, pose_b)
                    w = signed_distance(q)
                    est_x = float(pose_gradient(q, w, cfg).J_b[0])
                    records.append({
                        "shape": shape_name,
                        "orientation": orient_name,
                        "d_c": d_c,
                        "eps": eps,
                        "d": w.d,
                        "ref_grad_x": ref_x,
                        "est_grad_x": est_x,
                        "rel_err": abs(est_x - ref_x) / max(abs(ref_x), 1e-12),
                    })
    return records


def cmd_gradstudy(args) -> int:
    records = gradient_study()
    for rec in records:
        print(f"{rec['shape']:6s} {rec['orientation']:6s} d_c={rec['d_c']:.2f} "
              f"eps={rec['eps']:.0e}  rel_err={rec['rel_err']:.2e}")
    if args.out:
        _write_csv(Path(args.out), records)
    return 0


# ---------------------------------------------------------------------------
# figtwo
# ---------------------------------------------------------------------------


def fig2_sweep(xs=None, mesh_n: int = 64, surrogate_starts: int = 16) -> list:
    """Implicit-surrogate pathology sweep for the canonical two-SQ pair.

    Body a: semi-axes (0.5, 1.5, 1.0), e=(0.2, 0.2), Rz(pi/3) at the origin.
    Body b: semi-axes (1.0, 0.5, 1.0), e=(0.2, 0.2), Rz(-pi/4) at (x, 3, 0).
    Records the surrogate value f* and its FD slope alongside the pipeline's
    signed distance and x-translation gradient.
    """
    if xs is None:
        xs = np.linspace(-3.0, 3.0, 31)
    sq_a = Superquadric(0.5, 1.5, 1.0, 0.2, 0.2)
    sq_b = Superquadric(1.0, 0.5, 1.0, 0.2, 0.2)
    ez = np.array([0.0, 0.0, 1.0])
    pose_a = Pose(rotation_about(ez, np.pi / 3.0), np.zeros(3))
    Rb = rotation_about(ez, -np.pi / 4.0)
    poly_a = sample_surface(sq_a, mesh_n, mesh_n)
    poly_b = sample_surface(sq_b, mesh_n, mesh_n)
    cfg = SmoothingConfig()
    records = []
    for x in xs:
        pose_b = Pose(Rb, np.array([float(x), 3.0, 0.0]))

        def f_star(xv, _Rb=Rb):
            return implicit_surrogate_value(
                sq_a, pose_a, sq_b, Pose(_Rb, np.array([float(xv), 3.0, 0.0])),
                n_starts=surrogate_starts)

        f_val = f_star(x)
        h = 1e-4
        f_slope = (f_star(x + h) - f_star(x - h)) / (2.0 * h)
        q = DistanceQuery(poly_a, poly_b, pose_a, pose_b)
        w = signed_distance(q)
        jac = pose_gradient(q, w, cfg)
        records.append({
            "x": float(x),
            "f_star": f_val,
            "f_star_slope": f_slope,
            "d": w.d,
            "sdf_grad_x": float(jac.J_b[0]),
            "sdf_grad_norm": float(np.linalg.norm(jac.J_b[:3])),
        })
    return records


def cmd_figtwo(args) -> int:
    records = fig2_sweep()
    for rec in records:
        print(f"x={rec['x']:+.2f}  f*={rec['f_star']:.4g} "
              f"df*/dx={rec['f_star_slope']:.4g}  d={rec['d']:.4f} "
              f"|grad d|={rec['sdf_grad_norm']:.4f}")
    if args.out:
        _write_csv(Path(args.out), records)
    return 0


# ---------------------------------------------------------------------------
# voxel
# ---------------------------------------------------------------------------


def voxel_report(delta: float = 0.005) -> dict:
    """Identity and concentric-sphere voxel-metric checks."""
    ball = Superquadric(0.1, 0.1, 0.1, 1.0, 1.0)
    big = Superquadric(0.2, 0.2, 0.2, 1.0, 1.0)
    box = Superquadric(0.08, 0.05, 0.12, 0.3, 0.6)
    origin = Pose.identity()
    ball_set = [(ball, origin)]
    box_set = [(box, origin)]
    big_set = [(big, origin)]
    cov_id, over_id = voxel_metrics(box_set, box_set, delta)
    cov_sph, over_sph = voxel_metrics(big_set, ball_set, delta)
    return {
        "delta": delta,
        "identity": {"coverage": cov_id, "over_approx": over_id},
        "concentric_spheres": {
            "coverage": cov_sph,
            "over_approx": over_sph,
            "analytic_over_approx": 7.0,
        },
    }


def cmd_voxel(args) -> int:
    report = voxel_report()
    print(json.dumps(report, indent=2))
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2) + "\n")
    return 0


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------


def _write_csv(path: Path, records: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(records[0].keys()))
        writer.writeheader()
        writer.writerows(records)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sqfilter")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and report metrics")
    p.add_argument("scenario", help="scenario JSON path or bundled name")
    p.add_argument("--filter", choices=("on", "off"), default="on")
    p.add_argument("--out", default=None, help="directory for metrics + cycle log")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="cycle-time scaling benchmark")
    p.add_argument("--pairs", default="8,16,32,64,128,256",
                   help="comma-separated pair counts")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV output path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradstudy", help="gradient accuracy grid vs oracle")
    p.add_argument("--out", default=None, help="CSV output path")
    p.set_defaults(func=cmd_gradstudy)

    p = sub.add_parser("figtwo", help="implicit-surrogate pathology sweep")
    p.add_argument("--out", default=None, help="CSV output path")
    p.set_defaults(func=cmd_figtwo)

    p = sub.add_parser("voxel", help="voxel metric sanity report")
    p.add_argument("--out", default=None, help="JSON output path")
    p.set_defaults(func=cmd_voxel)

    p = sub.add_parser("serve", help="WebSocket teleoperation server")
    p.add_argument("--scenario", default="empty")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=_cmd_serve)

    return parser


def _cmd_serve(args) -> int:
    from .server import serve

    serve(resolve_scenario(args.scenario), host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
