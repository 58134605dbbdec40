"""Success rate, action efficiency and the multi-episode evaluation protocol.

SR is the percentage of episodes that end within the position and
orientation thresholds. Action efficiency (a_eff) averages, over
successful episodes only, the straight-line start-to-final displacement
divided by the number of steps; it is ``None`` when nothing succeeded.
Aggregates are mean and std across scenes, not across pooled episodes.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import SceneEnvironment
from .geometry import Pose
from .spta import Workspace


@dataclass
class EpisodeRecord:
    scene_id: str
    start_pose: Pose
    poses: list[Pose]  # start pose first, then one per step
    actions: np.ndarray  # (T, 6) physical actions
    delta_p: float
    delta_r: float
    steps: int
    success: bool

    @property
    def displacement(self) -> float:
        return float(np.linalg.norm(self.poses[-1].translation - self.start_pose.translation))


def success_rate(records: list[EpisodeRecord]) -> float:
    if not records:
        raise ValueError("success rate of zero episodes")
    return 100.0 * sum(r.success for r in records) / len(records)


def action_efficiency(records: list[EpisodeRecord]) -> float | None:
    """Mean net displacement per step over successful episodes (mm/step); ``None`` if there are none."""
    vals = [r.displacement / r.steps for r in records if r.success]
    return float(np.mean(vals)) if vals else None


def _mean_std(values) -> tuple[float, float] | None:
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    return float(np.mean(vals)), float(np.std(vals))


@dataclass
class SceneSummary:
    scene_id: str
    episodes: int
    sr: float
    steps_mean: float
    steps_std: float
    a_eff: float | None
    error: str | None = None


@dataclass
class EvaluationReport:
    policy_id: str
    seed: int
    scenes: list[SceneSummary]
    records: dict[str, list[EpisodeRecord]] = field(default_factory=dict, repr=False)

    def _ok(self):
        return [s for s in self.scenes if s.error is None]

    @property
    def sr(self) -> tuple[float, float]:
        return _mean_std(s.sr for s in self._ok()) or (float("nan"), float("nan"))

    @property
    def steps(self) -> tuple[float, float]:
        return _mean_std(s.steps_mean for s in self._ok()) or (float("nan"), float("nan"))

    @property
    def a_eff(self) -> tuple[float, float] | None:
        return _mean_std(s.a_eff for s in self._ok())

    def text(self) -> str:
        def fmt(ms, unit=""):
            return "undefined" if ms is None else f"{ms[0]:.2f} +- {ms[1]:.2f}{unit}"

        lines = [f"policy  {self.policy_id}", f"seed    {self.seed}", "",
                 "[aggregate]", f"scenes  {len(self._ok())}", f"steps   {fmt(self.steps)}",
                 f"a_eff   {fmt(self.a_eff, ' mm')}", f"SR      {fmt(self.sr, ' %')}"]
        for s in self.scenes:
            lines += ["", f"[scene {s.scene_id}]"]
            if s.error is not None:
                lines.append(f"error   {s.error}")
                continue
            a = "undefined" if s.a_eff is None else f"{s.a_eff:.4f} mm"
            lines += [f"episodes {s.episodes}", f"steps   {s.steps_mean:.2f} +- {s.steps_std:.2f}", f"a_eff   {a}", f"SR      {s.sr:.2f} %"]
        return "\n".join(lines) + "\n"

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scene", "episodes", "sr", "steps_mean", "steps_std", "a_eff", "error"])
        for s in self.scenes:
            w.writerow([s.scene_id, s.episodes, f"{s.sr:.6f}", f"{s.steps_mean:.6f}", f"{s.steps_std:.6f}",
                        "undefined" if s.a_eff is None else f"{s.a_eff:.6f}", s.error or ""])
        return buf.getvalue()

    def write(self, stem) -> tuple[Path, Path]:
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        txt, tab = stem.with_suffix(".txt"), stem.with_suffix(".csv")
        txt.write_text(self.text())
        tab.write_text(self.csv())
        return txt, tab


def _clone(env: SceneEnvironment) -> SceneEnvironment:
    return SceneEnvironment(env.scene, env.expert, env.config, env.workspace, env.scene_id, env.intrinsics)


def episode_seed(seed: int, scene_id: str, episode: int) -> int:
    from .pipeline import derive_seed

    return derive_seed(seed, "eval", scene_id, episode)


def run_episodes(policy_fn, env: SceneEnvironment, seeds: list[int], batch: int = 16) -> list[EpisodeRecord]:
    """Run one episode per seed on ``env``'s scene, ``batch`` episodes at a time.

    ``policy_fn`` maps a (B, C, H, W) observation batch to (B, 6) normalized actions.
    Episodes depend only on their own seeds; a fixed ``batch`` gives bitwise
    repeatable results, while changing it can move network outputs by float32
    rounding (BLAS blocking differs with the batch size).
    Stateful policies may define ``reset()``; it is called before every batch.
    """
    records: list[EpisodeRecord] = []
    slots = [_clone(env) for _ in range(min(batch, len(seeds)))]
    reset = getattr(policy_fn, "reset", None)
    for start in range(0, len(seeds), len(slots)):
        chunk = seeds[start : start + len(slots)]
        if reset is not None:
            reset()
        active = list(range(len(chunk)))
        obs = {i: slots[i].obs_array(slots[i].reset(chunk[i])) for i in active}
        while active:
            acts = np.asarray(policy_fn(np.stack([obs[i] for i in active])), dtype=np.float64)
            still = []
            for k, i in enumerate(active):
                img, done, _ = slots[i].step(acts[k])
                if done:
                    continue
                obs[i] = slots[i].obs_array(img)
                still.append(i)
            active = still
        for i in range(len(chunk)):
            st = slots[i].state
            dp, dr = slots[i].deviation()
            records.append(EpisodeRecord(env.scene_id, st.start_pose, list(st.poses),
                                         np.array([a.as_array() for a in st.actions]).reshape(-1, 6),
                                         dp, dr, st.step_count, st.success))
    return records


def summarize(scene_id: str, records: list[EpisodeRecord]) -> SceneSummary:
    steps = np.array([r.steps for r in records], dtype=np.float64)
    return SceneSummary(scene_id, len(records), success_rate(records), float(steps.mean()), float(steps.std()),
                        action_efficiency(records))


def evaluate_policy(policy_fn, envs: list[SceneEnvironment], episodes_per_scene: int = 50, seed: int = 0,
                    policy_id: str = "policy", batch: int = 16) -> EvaluationReport:
    """Evaluate a deterministic policy on every environment with per-episode derived seeds.

    A failure inside one scene is recorded on that scene and the run continues.
    """
    if not envs:
        raise ValueError("no environments to evaluate")
    scenes, recs = [], {}
    for env in envs:
        seeds = [episode_seed(seed, env.scene_id, e) for e in range(episodes_per_scene)]
        try:
            r = run_episodes(policy_fn, env, seeds, batch)
        except Exception as exc:  # keep going with the other scenes
            scenes.append(SceneSummary(env.scene_id, 0, float("nan"), float("nan"), float("nan"), None, f"{type(exc).__name__}: {exc}"))
            continue
        recs[env.scene_id] = r
        scenes.append(summarize(env.scene_id, r))
    return EvaluationReport(policy_id, seed, scenes, recs)


def random_policy(seed: int = 0):
    """Uniform actions in [-1, 1]^6."""
    rng = np.random.default_rng(seed)
    return lambda obs: rng.uniform(-1.0, 1.0, (len(obs), 6))


class ReplayPolicy:
    """Replays the expert's normalized actions from the expert start (a scripted oracle).

    Use with episodes reset at the expert start; step ``k`` of every active
    slot returns the expert's ``k``-th action.
    """

    def __init__(self, env: SceneEnvironment):
        acts = np.array([a.as_array() for a in env.expert.actions()])
        self.actions = acts / env.config.limits
        self.k = 0

    def reset(self):
        self.k = 0

    def __call__(self, obs):
        a = self.actions[min(self.k, len(self.actions) - 1)]
        self.k += 1
        return np.repeat(a[None, :], len(obs), axis=0)


def evaluate_replay(envs: list[SceneEnvironment], episodes_per_scene: int = 50, seed: int = 0, batch: int = 16) -> EvaluationReport:
    """Score the expert-replay oracle with every episode started at its expert's first waypoint."""
    pinned = []
    for env in envs:
        p0 = env.expert.poses[0, :3]
        pinned.append(SceneEnvironment(env.scene, env.expert, env.config, Workspace(p0, p0, np.zeros(3)), env.scene_id, env.intrinsics))
    scenes, recs = [], {}
    for env in pinned:
        part = evaluate_policy(ReplayPolicy(env), [env], episodes_per_scene, seed, "replay", batch)
        scenes += part.scenes
        recs.update(part.records)
    return EvaluationReport("replay", seed, scenes, recs)


def export_features(policy, observations: np.ndarray, path=None) -> np.ndarray:
    """Last-hidden-layer activations, one row per observation; optionally written as whitespace text."""
    feats = np.asarray(policy.features(observations), dtype=np.float64)
    if path is not None:
        np.savetxt(path, feats, fmt="%.8g")
    return feats


def write_curve(path, rates, srs) -> None:
    """Two-column (rate, SR) text file."""
    Path(path).write_text("rate sr\n" + "".join(f"{int(r)} {float(s):.6f}\n" for r, s in zip(rates, srs)))
