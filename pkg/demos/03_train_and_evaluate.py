"""A small end-to-end run: build a suite, train BC and ILLC, compare them with a random policy.

This uses a deliberately tiny configuration so it finishes in a few minutes on one CPU; the numbers it
prints are a smoke test, not a benchmark. With three training scenes and a few iterations both learners
usually stay at or near 0 % on the unseen scene; ``configs/acceptance.json`` is the full-size setup.

    python3 demos/03_train_and_evaluate.py
"""
from pathlib import Path

from scopesim.eval import evaluate_policy, evaluate_replay, random_policy
from scopesim.pipeline import RunConfig, derive_seed, evaluate, generate_suite, load_split, train_policy
from scopesim.scenegen import SceneSpec

out = Path("demos_out/train")
suite = generate_suite(out / "suite", 4, (3, 1), seed=1, scene_spec=SceneSpec(point_count=30_000))
print(suite.stats.table())

run = RunConfig(seed=1, suite=str(suite.root), env={"obs_width": 40, "obs_height": 32},
                train={"iterations": 3, "bc_epochs": 5, "rollout_capacity": 512}, spta={"rate": 8}, episodes=10)
train_envs, test_envs = load_split(run, "train"), load_split(run, "test")

# Two reference points: replaying the expert always succeeds, random actions never do.
replay = evaluate_replay(train_envs, 5)
rand = evaluate_policy(random_policy(1), test_envs, 10, derive_seed(run.seed, "evaluation"))
print(f"replay: SR {replay.sr[0]:.1f} %, random: SR {rand.sr[0]:.1f} %")

for method in ("bc", "illc"):
    policy, log = train_policy(method, train_envs, run, out / method)
    report = evaluate(policy, test_envs, run, method)
    sr, sd = report.sr
    print(f"{method:>5}: SR {sr:.1f} +- {sd:.1f} % after {len(log)} logged iterations/epochs")
