"""Command-line entry point: ``scopesim <command> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Paths in a run config can be overridden with ``SCOPESIM_SUITE`` and
``SCOPESIM_OUT``.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .env import EnvConfig, load_environments
from .eval import evaluate_policy, evaluate_replay, random_policy
from .geometry import EulerPose, euler_to_pose
from .learn import Policy
from .pipeline import RunConfig, derive_seed, evaluate, generate_suite, load_split, preprocess, run_ablation, train_policy
from .renderer import CameraIntrinsics, read_scene, render, write_depth_pgm, write_ppm
from .scenegen import SceneSpec
from .spta import AugmentationParams, augment_dataset, discrete_frechet, shape_similarity
from .trajectory import TrajectoryFormatError, read_trajectory, read_waypoints, write_trajectory

USAGE, RUNTIME = 2, 1


class UsageError(Exception):
    """Bad arguments or configuration; reported with exit code 2."""


def _err(msg: str) -> None:
    print(f"scopesim: error: {msg}", file=sys.stderr)


def _writable_dir(path) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {p}: {exc.strerror or exc}") from None
    if not os.access(p, os.W_OK):
        raise UsageError(f"output directory {p} is not writable")
    return p


def _split(text: str) -> tuple[int, int]:
    try:
        a, b = (int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"split must look like 8:2, got {text!r}") from None
    return a, b


def _load_run(path, workers: int | None) -> RunConfig:
    try:
        run = RunConfig.load(path)
    except FileNotFoundError:
        raise UsageError(f"config file {path} not found") from None
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    if workers is not None:
        run = replace(run, workers=workers)
    run = replace(run, suite=os.environ.get("SCOPESIM_SUITE", run.suite), out=os.environ.get("SCOPESIM_OUT", run.out))
    errors = run.validate()
    suite, _ = run.paths()
    for split in ("train", "test"):
        if not (suite / f"{split}.json").exists():
            errors.append(f"suite: manifest {suite / (split + '.json')} not found")
    if errors:
        raise UsageError("invalid run config:\n  " + "\n  ".join(errors))
    return run


def cmd_gen_scenes(args) -> int:
    if args.count < 2:
        raise UsageError("--count must be >= 2")
    n_test = max(1, round(args.count * 15 / 95))  # 80/15 proportions by default
    split = args.split or (args.count - n_test, n_test)
    if min(split) < 1 or sum(split) != args.count:
        raise UsageError(f"--split {split[0]}:{split[1]} must partition {args.count} scenes into non-empty sets")
    out = _writable_dir(args.out)
    suite = generate_suite(out, args.count, split, args.seed, SceneSpec(point_count=args.points))
    print(suite.stats.table())
    print(f"train manifest  {suite.train}\ntest manifest   {suite.test}")
    return 0


def cmd_augment(args) -> int:
    src = Path(args.inp)
    files = sorted(src.glob("*.traj")) if src.is_dir() else [src]
    if not files or not all(f.exists() for f in files):
        raise UsageError(f"no trajectory files at {src}")
    try:
        params = AugmentationParams(rate=args.rate)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    raws = []
    for f in files:
        try:
            raws.append((f, read_trajectory(f)))
        except TrajectoryFormatError as exc:
            raise UsageError(f"malformed trajectory: {exc}") from None
    out = _writable_dir(args.out)
    cfg = EnvConfig()
    ends, shapes, frechet, total = [], [], [], 0
    for f, (raw, header) in raws:
        w = preprocess(raw, args.window, args.d_fixed)
        trajs = augment_dataset([w], params, derive_seed(args.seed, "spta", f.stem), step_limits=(cfg.pos_action_limit, cfg.rot_action_limit))
        for i, t in enumerate(trajs):
            write_trajectory(out / f"{f.stem}_{i:03d}.traj", t, {"source": f.name, "variant": i})
            if i == 0:
                continue
            ends.append(float(np.linalg.norm(t.positions[-1] - w.positions[-1])))
            n = min(len(t), len(w))
            shapes.append(shape_similarity(t.poses[-n:], w.poses[-n:]))
            frechet.append(discrete_frechet(t.positions, w.positions))
        total += len(trajs)
    print(f"inputs          {len(files)}")
    print(f"trajectories    {total} ({args.rate + 1}x)")
    if ends:
        print(f"endpoint dev    max {max(ends):.3g} mm, mean {np.mean(ends):.3g} mm")
        print(f"shape score     mean {np.mean(shapes):.4f}, min {min(shapes):.4f}")
        print(f"frechet         mean {np.mean(frechet):.3f} mm, max {max(frechet):.3f} mm")
    return 0


def cmd_train(args) -> int:
    run = _load_run(args.config, args.workers)
    out = _writable_dir(args.out or run.paths()[1])
    run.save(out / "run_config.json")
    if args.ablation:
        report = run_ablation(run, out, method=args.method)
        print(report.table(), end="")
        return 0 if all(c.error is None for c in report.cells) else RUNTIME
    train_envs, test_envs = load_split(run, "train"), load_split(run, "test")
    policy, log = train_policy(args.method, train_envs, run, out)
    print(f"trained {args.method}: {len(log)} log records, checkpoint {out / (args.method + '_policy')}.bin")
    if args.evaluate:
        rep = evaluate(policy, test_envs, run, args.method)
        rep.write(out / f"{args.method}_report")
        print(rep.text(), end="")
    return 0


def cmd_eval(args) -> int:
    manifest = Path(args.manifest)
    if not manifest.exists():
        raise UsageError(f"manifest {manifest} not found")
    env_cfg = EnvConfig(obs_width=args.obs_width, obs_height=args.obs_height)
    if args.config is not None:
        env_cfg = _load_run_env(args.config)
    policy = None
    if args.policy not in ("random", "replay"):
        try:
            policy = Policy.load(args.policy)
        except FileNotFoundError:
            raise UsageError(f"policy checkpoint {args.policy} not found") from None
        _, h, w = policy.spec.input_shape
        env_cfg = replace(env_cfg, obs_width=w, obs_height=h)
    if args.episodes < 1:
        raise UsageError("--episodes must be >= 1")
    envs = load_environments(manifest, env_cfg)
    if args.policy == "replay":
        rep = evaluate_replay(envs, args.episodes, args.seed, args.batch)
    else:
        fn = random_policy(derive_seed(args.seed, "random-policy")) if policy is None else policy
        rep = evaluate_policy(fn, envs, args.episodes, args.seed, Path(args.policy).stem, args.batch)
    if args.out:
        _writable_dir(Path(args.out).parent)
        txt, tab = rep.write(args.out)
        print(f"wrote {txt} and {tab}", file=sys.stderr)
    print(rep.text(), end="")
    return 0 if all(s.error is None for s in rep.scenes) else RUNTIME


def _load_run_env(path) -> EnvConfig:
    try:
        run = RunConfig.load(path)
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(f"config {path}: {exc}") from None
    errors = run.validate()
    if errors:
        raise UsageError("invalid run config:\n  " + "\n  ".join(errors))
    return run.env_config()


def _parse_pose(text: str):
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"--pose must be 6 numbers x,y,z,alpha,beta,gamma (degrees), got {text!r}") from None
    if len(vals) != 6 or not all(math.isfinite(v) for v in vals):
        raise UsageError(f"--pose must be 6 finite numbers, got {text!r}")
    return euler_to_pose(EulerPose(*vals[:3], *np.deg2rad(vals[3:])))


def cmd_preview(args) -> int:
    if (args.pose is None) == (args.trajectory is None):
        raise UsageError("give exactly one of --pose or --trajectory")
    try:
        scene = read_scene(args.scene)
    except FileNotFoundError:
        raise UsageError(f"scene {args.scene} not found") from None
    if args.pose is not None:
        poses = [_parse_pose(args.pose)]
    else:
        try:
            traj = read_waypoints(args.trajectory)
            poses = [traj.pose(j) for j in range(len(traj))]
        except FileNotFoundError:
            raise UsageError(f"trajectory {args.trajectory} not found") from None
        except TrajectoryFormatError as exc:
            raise UsageError(f"malformed trajectory: {exc}") from None
    out = _writable_dir(args.out)
    intr = CameraIntrinsics.default(args.width, args.height)
    lo, hi = scene.bounds
    for i, pose in enumerate(poses):
        if np.any(pose.translation < lo) or np.any(pose.translation > hi):
            print(f"scopesim: warning: pose {i} lies outside the scene bounds; the view may be mostly background", file=sys.stderr)
        img = render(scene, pose, intr, args.splat)
        stem = "frame" if len(poses) == 1 and args.pose is not None else f"frame_{i:03d}"
        write_ppm(out / f"{stem}.ppm", img)
        write_depth_pgm(out / f"{stem}_depth.pgm", img)
        print(f"{stem}: coverage {img.coverage():.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scopesim", description="Simulated camera-control imitation learning toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scenes", help="generate scenes, expert demonstrations and train/test manifests")
    g.add_argument("--count", type=int, default=10, help="number of scenes (>= 2)")
    g.add_argument("--split", type=_split, default=None, help="train:test scene counts, e.g. 8:2 (default in 80:15 proportion)")
    g.add_argument("--seed", type=int, default=0, help="master seed")
    g.add_argument("--points", type=int, default=100_000, help="points per scene")
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_gen_scenes)

    a = sub.add_parser("augment", help="smooth, resample and augment trajectories with SPTA")
    a.add_argument("--rate", type=int, default=32, help="augmented variants per trajectory")
    a.add_argument("--seed", type=int, default=0, help="master seed")
    a.add_argument("--in", dest="inp", required=True, help="a .traj file or a directory of them")
    a.add_argument("--out", required=True, help="output directory")
    a.add_argument("--window", type=int, default=5, help="smoothing window (odd)")
    a.add_argument("--d-fixed", type=float, default=1.0, help="waypoint spacing in mm")
    a.set_defaults(func=cmd_augment)

    t = sub.add_parser("train", help="train a policy (bc, gail or illc) from a run config")
    t.add_argument("method", choices=["bc", "gail", "illc"])
    t.add_argument("--config", required=True, help="run config JSON")
    t.add_argument("--out", default=None, help="output directory (default: config 'out')")
    t.add_argument("--ablation", action="store_true", help="run the SPTA / prior / depth ablation grid instead")
    t.add_argument("--evaluate", action="store_true", help="evaluate on the test split after training")
    t.add_argument("--workers", type=int, default=None, help="cap on environment worker threads")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a policy on a manifest")
    e.add_argument("--policy", required=True, help="'random', 'replay' or a policy checkpoint path")
    e.add_argument("--manifest", required=True, help="environment manifest JSON")
    e.add_argument("--episodes", type=int, default=50, help="episodes per scene")
    e.add_argument("--seed", type=int, default=0, help="evaluation seed")
    e.add_argument("--batch", type=int, default=16, help="episodes stepped together per scene")
    e.add_argument("--config", default=None, help="run config JSON supplying the env settings")
    e.add_argument("--obs-width", type=int, default=80, help="observation width without --config")
    e.add_argument("--obs-height", type=int, default=64, help="observation height without --config")
    e.add_argument("--out", default=None, help="report path stem (writes .txt and .csv)")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("preview", help="render RGB and depth previews of a pose or a trajectory")
    v.add_argument("--scene", required=True, help="scene file")
    v.add_argument("--pose", default=None, help="x,y,z,alpha,beta,gamma in mm and degrees")
    v.add_argument("--trajectory", default=None, help="trajectory file; one frame per waypoint")
    v.add_argument("--out", required=True, help="output directory")
    v.add_argument("--width", type=int, default=160)
    v.add_argument("--height", type=int, default=128)
    v.add_argument("--splat", type=int, default=1, help="splat radius in pixels")
    v.set_defaults(func=cmd_preview)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse: --help exits 0, usage errors exit 2
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        _err(str(exc))
        return USAGE
    except KeyboardInterrupt:
        _err("interrupted")
        return RUNTIME
    except Exception as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return RUNTIME


if __name__ == "__main__":
    sys.exit(main())
