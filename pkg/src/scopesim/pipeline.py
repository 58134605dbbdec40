"""End-to-end plumbing: seeds, scene suites, expert data, training and evaluation runs.

One master seed fans out to every stage through :func:`derive_seed`, which
hashes a stage name into a :class:`numpy.random.SeedSequence`, so any stage
can be rerun alone and get the same numbers.

Suite layout on disk::

    <out>/scenes/<id>.scene        point clouds
    <out>/demos/<id>.traj          raw expert trajectories
    <out>/experts/<id>.traj        smoothed, resampled expert waypoints
    <out>/train.json, test.json    environment manifests

A :class:`RunConfig` (JSON) holds everything else a run needs: env, training
and SPTA hyperparameters, the evaluation protocol and the master seed.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .env import EnvConfig, SceneEnvironment, load_environments, make_vector_env, write_manifest
from .eval import EvaluationReport, evaluate_policy, write_curve
from .learn import ExpertDataset, Policy, TrainConfig, expert_dataset, prior_policy, train_adversarial, train_bc
from .renderer import write_scene
from .scenegen import DemoSpec, GenerationError, SceneSpec, generate_demonstration, generate_scene
from .spta import AugmentationParams, augment_dataset
from .trajectory import RawTrajectory, WaypointTrajectory, resample_equal_distance, smooth, write_trajectory

METHODS = ("bc", "gail", "illc")


def derive_seed(master: int, *names) -> int:
    """64-bit seed for the stage ``names`` under ``master`` (crc32 of each name mixed by SeedSequence)."""
    entropy = [int(master) & 0xFFFFFFFF, (int(master) >> 32) & 0xFFFFFFFF]
    entropy += [zlib.crc32(str(n).encode()) for n in names]
    lo, hi = np.random.SeedSequence(entropy).generate_state(2, np.uint32)
    return int(lo) | (int(hi) << 32)


def rng_for(master: int, *names) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *names))


def preprocess(raw: RawTrajectory, window: int = 5, d_fixed: float = 1.0) -> WaypointTrajectory:
    """Smooth then resample to waypoints ``d_fixed`` mm apart."""
    w = min(window, len(raw) if len(raw) % 2 else len(raw) - 1)
    return resample_equal_distance(smooth(raw, w) if w >= 3 else raw, d_fixed)


@dataclass
class SuiteStats:
    count: int
    distance_mean: float
    distance_std: float
    steps_mean: float
    steps_std: float
    points: int

    def table(self) -> str:
        return "\n".join([
            "scenes          %d" % self.count,
            "distance (mm)   %.2f +- %.2f" % (self.distance_mean, self.distance_std),
            "steps           %.2f +- %.2f" % (self.steps_mean, self.steps_std),
            "points/scene    %d" % self.points,
        ])


@dataclass
class Suite:
    root: Path
    train: Path
    test: Path
    stats: SuiteStats


def _scene_with_demo(scene_spec: SceneSpec, demo_spec: DemoSpec, seed: int, i: int, attempts: int = 10):
    # a sparse scene can hide its own target; redraw it with a seed that depends on the attempt number
    for attempt in range(attempts):
        tag = ("scene", i) if attempt == 0 else ("scene", i, "retry", attempt)
        scene = generate_scene(replace(scene_spec, seed=derive_seed(seed, *tag)))
        try:
            raw, _ = generate_demonstration(scene, replace(demo_spec, seed=derive_seed(seed, "demo", i)))
            return scene, raw
        except GenerationError as exc:
            last = exc
    raise GenerationError(f"scene {i}: no usable scene after {attempts} attempts ({last})")


def generate_suite(out, count: int = 10, split: tuple[int, int] = (8, 2), seed: int = 0,
                   scene_spec: SceneSpec | None = None, demo_spec: DemoSpec | None = None,
                   window: int = 5, d_fixed: float = 1.0, env_config: dict | None = None) -> Suite:
    """Generate ``count`` scenes with one expert demonstration each and split them into manifests."""
    if count < 2:
        raise ValueError("need at least 2 scenes")
    n_train, n_test = split
    if n_train < 1 or n_test < 1 or n_train + n_test != count:
        raise ValueError(f"split {n_train}:{n_test} does not partition {count} scenes into non-empty sets")
    root = Path(out)
    for sub in ("scenes", "demos", "experts"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    scene_spec = scene_spec or SceneSpec()
    demo_spec = demo_spec or DemoSpec()
    entries, dists, steps = [], [], []
    for i in range(count):
        sid = f"scene{i:03d}"
        scene, raw = _scene_with_demo(scene_spec, demo_spec, seed, i)
        wp = preprocess(raw, window, d_fixed)
        write_scene(root / "scenes" / f"{sid}.scene", scene)
        write_trajectory(root / "demos" / f"{sid}.traj", raw, {"scene": sid})
        write_trajectory(root / "experts" / f"{sid}.traj", wp, {"scene": sid})
        entries.append({"id": sid, "scene": f"scenes/{sid}.scene", "trajectory": f"experts/{sid}.traj",
                        "demo": f"demos/{sid}.traj", "config": dict(env_config or {})})
        dists.append(float(np.linalg.norm(wp.positions[-1] - wp.positions[0])))
        steps.append(len(wp) - 1)
    order = rng_for(seed, "split").permutation(count)
    train = sorted(order[:n_train].tolist())
    test = sorted(order[n_train:].tolist())
    write_manifest(root / "train.json", [entries[i] for i in train], {"split": "train", "seed": seed})
    write_manifest(root / "test.json", [entries[i] for i in test], {"split": "test", "seed": seed})
    stats = SuiteStats(count, float(np.mean(dists)), float(np.std(dists)), float(np.mean(steps)), float(np.std(steps)),
                       scene_spec.point_count)
    return Suite(root, root / "train.json", root / "test.json", stats)


def augment_experts(envs: list[SceneEnvironment], params: AugmentationParams, seed: int) -> list[list[WaypointTrajectory]]:
    """SPTA on each environment's expert; returns, per env, the original followed by ``rate`` variants."""
    out = []
    for env in envs:
        lim = (env.config.pos_action_limit, env.config.rot_action_limit)
        out.append(augment_dataset([env.expert], params, derive_seed(seed, "spta", env.scene_id), step_limits=lim))
    return out


def build_expert_data(envs: list[SceneEnvironment], params: AugmentationParams, seed: int) -> ExpertDataset:
    """Render the (augmented) expert transitions of every training environment."""
    parts = [expert_dataset(env, trajs) for env, trajs in zip(envs, augment_experts(envs, params, seed))]
    return ExpertDataset.concatenate(parts)


def _section(cls, data: dict, name: str, errors: list[str]):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        errors.append(f"{name}: unknown keys {sorted(unknown)}")
        data = {k: v for k, v in data.items() if k in known}
    try:
        return cls.from_dict(data) if hasattr(cls, "from_dict") else cls(**data)
    except (TypeError, ValueError) as exc:
        errors.append(f"{name}: {exc}")
        return None


@dataclass
class RunConfig:
    """Everything a training/evaluation run needs besides the scene suite itself.

    ``env``, ``train`` and ``spta`` hold keyword overrides for
    :class:`EnvConfig`, :class:`TrainConfig` and :class:`AugmentationParams`
    (angles in degrees at this boundary). The policy input shape always follows
    the env observation size.
    """

    seed: int = 0
    suite: str = "suite"
    out: str = "runs"
    scenes: dict = field(default_factory=lambda: {"count": 10, "split": [8, 2], "point_count": 100_000})
    env: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    spta: dict = field(default_factory=dict)
    episodes: int = 50
    eval_batch: int = 16
    workers: int = 1

    ANGLE_KEYS = {"env": ("rot_threshold", "rot_action_limit"), "spta": ("orientation_range",)}

    def _radians(self, section: str) -> dict:
        d = dict(getattr(self, section))
        for k in self.ANGLE_KEYS.get(section, ()):
            if k in d:
                d[k] = float(np.deg2rad(d[k]))
        if section == "spta" and "epsilon_range" in d:
            d["epsilon_range"] = tuple(d["epsilon_range"])
        return d

    def validate(self) -> list[str]:
        """All configuration errors at once (empty when valid)."""
        errors: list[str] = []
        if not isinstance(self.seed, int) or self.seed < 0:
            errors.append("seed must be a non-negative integer")
        for name in ("episodes", "eval_batch", "workers"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                errors.append(f"{name} must be a positive integer")
        sc = dict(self.scenes)
        unknown = set(sc) - {"count", "split", "point_count"}
        if unknown:
            errors.append(f"scenes: unknown keys {sorted(unknown)}")
        count, split = sc.get("count", 10), list(sc.get("split", [8, 2]))
        if len(split) != 2 or min(split) < 1 or sum(split) != count:
            errors.append(f"scenes: split {split} does not partition {count} scenes into non-empty sets")
        if sc.get("point_count", 100_000) < 100:
            errors.append("scenes: point_count must be >= 100")
        env = _section(EnvConfig, self._radians("env"), "env", errors)
        train = dict(self.train)
        for key in ("policy_net", "reward_net"):
            if key in train and not isinstance(train[key], dict):
                errors.append(f"train: {key} must be an object")
                train.pop(key)
        _section(TrainConfig, train, "train", errors)
        _section(AugmentationParams, self._radians("spta"), "spta", errors)
        if env is not None and "policy_net" in self.train and "input_shape" in self.train["policy_net"]:
            if tuple(self.train["policy_net"]["input_shape"]) != env.obs_shape:
                errors.append("train: policy_net.input_shape must match the env observation shape")
        return errors

    def check(self) -> "RunConfig":
        errors = self.validate()
        if errors:
            raise ValueError("invalid run config:\n  " + "\n  ".join(errors))
        return self

    def env_config(self, **overrides) -> EnvConfig:
        return replace(EnvConfig.from_dict(self._radians("env")), **overrides)

    def train_config(self, obs_shape: tuple[int, int, int] | None = None, **overrides) -> TrainConfig:
        shape = obs_shape or self.env_config().obs_shape
        cfg = TrainConfig.from_dict(dict(self.train))
        cfg = replace(cfg, policy_net=replace(cfg.policy_net, input_shape=shape),
                      reward_net=replace(cfg.reward_net, input_shape=shape))
        return replace(cfg, **overrides)

    def spta_params(self, **overrides) -> AugmentationParams:
        return replace(AugmentationParams(**self._radians("spta")), **overrides)

    def paths(self) -> tuple[Path, Path]:
        return Path(self.suite), Path(self.out)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown run config keys: {sorted(unknown)}")
        return cls(**d)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ValueError(f"{path}: expected a JSON object")
        return cls.from_dict(data)


def load_split(run: RunConfig, split: str, **env_overrides) -> list[SceneEnvironment]:
    suite, _ = run.paths()
    return load_environments(suite / f"{split}.json", run.env_config(**env_overrides))


def train_policy(method: str, train_envs: list[SceneEnvironment], run: RunConfig, out=None, rate: int | None = None,
                 use_prior: bool | None = None, tag: str | None = None) -> tuple[Policy, list[dict]]:
    """Train one policy with ``method`` in {bc, gail, illc}; returns it with its training log.

    SPTA at ``rate`` (default from the config) expands the expert data of
    every method. All randomness derives from ``run.seed`` and ``tag``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    tag = tag or method
    params = run.spta_params(**({} if rate is None else {"rate": rate}))
    cfg = run.train_config(train_envs[0].config.obs_shape, **({} if use_prior is None else {"use_prior": use_prior}))
    data = build_expert_data(train_envs, params, derive_seed(run.seed, "experts"))
    rng = rng_for(run.seed, "train", tag)
    init_seed = derive_seed(run.seed, "init") & 0xFFFFFFFF
    out = Path(out) if out is not None else None
    if method == "bc":
        policy = Policy(cfg.policy_net, seed=init_seed)
        res = train_bc(policy, data.obs, data.actions, cfg, rng)
        log = [{"epoch": i, "nll": float(v)} for i, v in enumerate(res.losses)]
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            (out / f"{tag}_log.jsonl").write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in log))
    else:
        policy = prior_policy(data, cfg, rng, seed=init_seed)
        venv = make_vector_env(train_envs, run.workers)
        log_path = out / f"{tag}_log.jsonl" if out is not None else None
        if log_path is not None and log_path.exists():
            log_path.unlink()
        res = train_adversarial(method, venv, data, cfg, rng, policy=policy, log_path=log_path,
                                checkpoint_dir=out / "checkpoints" if out is not None else None)
        log = res.log
    policy.meta.update(method=method, tag=tag, seed=run.seed, expert_transitions=len(data))
    if out is not None:
        policy.save(out / f"{tag}_policy", method=method)
    return policy, log


def evaluate(policy, test_envs: list[SceneEnvironment], run: RunConfig, policy_id: str) -> EvaluationReport:
    return evaluate_policy(policy, test_envs, run.episodes, derive_seed(run.seed, "evaluation"), policy_id, run.eval_batch)


@dataclass
class AblationCell:
    name: str
    rate: int
    prior: bool
    depth: bool
    report: EvaluationReport | None = None
    error: str | None = None

    @property
    def sr(self) -> float:
        return float("nan") if self.report is None else self.report.sr[0]


def default_cells(rate: int) -> list[AblationCell]:
    return [
        AblationCell(f"full (SPTA@{rate}x)", rate, True, True),
        AblationCell("w/o SPTA", 0, True, True),
        AblationCell("w/ SPTA@8x", 8, True, True),
        AblationCell("w/o prior policy", rate, False, True),
        AblationCell("w/o depth", rate, True, False),
    ]


@dataclass
class AblationReport:
    cells: list[AblationCell]

    def table(self) -> str:
        lines = [f"{'setting':<22} {'rate':>4} {'prior':>5} {'depth':>5} {'SR (%)':>16} {'steps':>14}"]
        for c in self.cells:
            if c.report is None:
                lines.append(f"{c.name:<22} {c.rate:>4} {str(c.prior):>5} {str(c.depth):>5} FAILED: {c.error}")
                continue
            sr, st = c.report.sr, c.report.steps
            lines.append(f"{c.name:<22} {c.rate:>4} {str(c.prior):>5} {str(c.depth):>5} "
                         f"{sr[0]:>7.2f} +- {sr[1]:<6.2f} {st[0]:>5.2f} +- {st[1]:<5.2f}")
        return "\n".join(lines) + "\n"

    def curve(self) -> list[tuple[int, float]]:
        """SR against SPTA rate over the cells that differ only in rate."""
        pts = {c.rate: c.sr for c in self.cells if c.prior and c.depth and c.report is not None}
        return sorted(pts.items())

    def by_name(self, name: str) -> AblationCell:
        return next(c for c in self.cells if c.name == name)


def run_ablation(run: RunConfig, out=None, cells: list[AblationCell] | None = None, method: str = "illc") -> AblationReport:
    """Train and evaluate one policy per cell with shared seeds.

    Every cell uses the same master seed, so cells differ only in the
    ablated setting. A failing cell is marked and the others still run.
    """
    cells = cells if cells is not None else default_cells(run.spta_params().rate)
    out = Path(out) if out is not None else None
    for c in cells:
        try:
            over = {} if c.depth else {"observe_depth": False}
            train_envs, test_envs = load_split(run, "train", **over), load_split(run, "test", **over)
            cell_out = out / _slug(c.name) if out is not None else None
            policy, _ = train_policy(method, train_envs, run, cell_out, rate=c.rate, use_prior=c.prior, tag=method)
            c.report = evaluate(policy, test_envs, run, c.name)
            if cell_out is not None:
                c.report.write(cell_out / "report")
        except Exception as exc:  # mark the cell and continue
            c.error = f"{type(exc).__name__}: {exc}"
    report = AblationReport(cells)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.txt").write_text(report.table())
        pts = report.curve()
        write_curve(out / "sr_vs_rate.txt", [r for r, _ in pts], [v for _, v in pts])
    return report


def _slug(name: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in name).strip("_").lower()


def run_pipeline(run: RunConfig, out, methods=("illc",)) -> dict[str, EvaluationReport]:
    """Generate the suite, train each method and evaluate it on the test split."""
    out = Path(out)
    sc = run.scenes
    suite = generate_suite(out / "suite", sc.get("count", 10), tuple(sc.get("split", (8, 2))), run.seed,
                           SceneSpec(point_count=sc.get("point_count", 100_000)), env_config={})
    run = replace(run, suite=str(suite.root))
    train_envs, test_envs = load_split(run, "train"), load_split(run, "test")
    reports = {}
    for m in methods:
        policy, _ = train_policy(m, train_envs, run, out / m)
        reports[m] = evaluate(policy, test_envs, run, m)
        reports[m].write(out / m / "report")
    return reports
