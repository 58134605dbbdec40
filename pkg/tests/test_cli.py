import json
import subprocess
import sys

import numpy as np
import pytest

from scopesim.cli import main
from scopesim.renderer import read_pnm
from scopesim.trajectory import read_waypoints

SMALL_NET = {"conv": [[4, 5, 4], [4, 3, 2]], "dense": [8]}


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "suite"
    assert main(["gen-scenes", "--count", "3", "--split", "2:1", "--seed", "0", "--points", "20000", "--out", str(out)]) == 0
    return out


def write_config(path, suite, **kw):
    cfg = {"seed": 0, "suite": str(suite), "env": {"obs_width": 40, "obs_height": 32},
           "train": {"iterations": 1, "bc_epochs": 1, "rollout_capacity": 32, "disc_steps": 1, "batch_size": 16,
                     "policy_net": SMALL_NET, "reward_net": SMALL_NET},
           "spta": {"rate": 1}, "episodes": 2, "eval_batch": 2}
    cfg.update(kw)
    path.write_text(json.dumps(cfg))
    return path


def test_help_and_usage_errors(capsys):
    assert main(["--help"]) == 0
    assert main([]) == 2
    assert main(["gen-scenes", "--out", "x", "--split", "eight"]) == 2
    assert main(["train", "dagger", "--config", "c.json"]) == 2


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "scopesim.cli", "eval", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "--episodes" in res.stdout


def test_gen_scenes(tmp_path, suite, capsys):
    assert len(json.loads((suite / "train.json").read_text())["environments"]) == 2
    assert len(json.loads((suite / "test.json").read_text())["environments"]) == 1
    again = tmp_path / "again"
    assert main(["gen-scenes", "--count", "3", "--split", "2:1", "--seed", "0", "--points", "20000", "--out", str(again)]) == 0
    assert "distance (mm)" in capsys.readouterr().out
    for f in suite.rglob("*"):
        if f.is_file():
            assert (again / f.relative_to(suite)).read_bytes() == f.read_bytes()
    assert main(["gen-scenes", "--count", "1", "--out", str(tmp_path / "x")]) == 2
    assert main(["gen-scenes", "--count", "3", "--split", "3:1", "--out", str(tmp_path / "x")]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["gen-scenes", "--count", "3", "--split", "2:1", "--out", str(blocker / "sub")]) == 2
    assert "cannot create output directory" in capsys.readouterr().err


def test_augment(tmp_path, suite, capsys):
    out = tmp_path / "aug"
    assert main(["augment", "--rate", "2", "--seed", "1", "--in", str(suite / "demos"), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "trajectories    9 (3x)" in text and "shape score" in text
    files = sorted(out.glob("*.traj"))
    assert len(files) == 9
    ends = [read_waypoints(f).positions[-1] for f in files if f.stem.startswith("scene000")]
    assert all(np.linalg.norm(e - ends[0]) <= 0.05 * 20 for e in ends)
    out2 = tmp_path / "aug2"
    main(["augment", "--rate", "2", "--seed", "1", "--in", str(suite / "demos"), "--out", str(out2)])
    assert all((out2 / f.name).read_bytes() == f.read_bytes() for f in files)
    bad = tmp_path / "bad.traj"
    bad.write_text("# header: 1\n0 0 0 0 0 0 0\n1 0 0 zero 0 0 0\n")
    assert main(["augment", "--rate", "1", "--in", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "bad.traj:3" in capsys.readouterr().err
    assert main(["augment", "--rate", "-1", "--in", str(suite / "demos"), "--out", str(tmp_path / "o")]) == 2


def test_train_config_errors_are_enumerated(tmp_path, suite, capsys):
    assert main(["train", "bc", "--config", str(tmp_path / "missing.json")]) == 2
    cfg = write_config(tmp_path / "bad.json", tmp_path / "nowhere", episodes=0, env={"max_steps": 0}, train={"ppo_lr": -1})
    assert main(["train", "bc", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    for key in ("episodes", "env:", "ppo_lr", "manifest"):
        assert key in err
    assert not (tmp_path / "o").exists()


def test_train_then_eval(tmp_path, suite, capsys):
    cfg = write_config(tmp_path / "run.json", suite)
    out = tmp_path / "run"
    assert main(["train", "illc", "--config", str(cfg), "--out", str(out), "--evaluate"]) == 0
    assert (out / "illc_policy.bin").exists() and (out / "illc_report.txt").exists()
    capsys.readouterr()
    assert main(["eval", "--policy", str(out / "illc_policy"), "--manifest", str(suite / "test.json"), "--episodes", "2",
                 "--out", str(tmp_path / "rep" / "r")]) == 0
    text = (tmp_path / "rep" / "r.txt").read_text()
    assert "SR      " in text and "[aggregate]" in text
    assert main(["eval", "--policy", str(tmp_path / "nope"), "--manifest", str(suite / "test.json")]) == 2
    assert main(["eval", "--policy", "random", "--manifest", str(tmp_path / "none.json")]) == 2


def test_eval_oracles(suite, capsys):
    assert main(["eval", "--policy", "replay", "--manifest", str(suite / "train.json"), "--episodes", "3"]) == 0
    assert "SR      100.00 +- 0.00 %" in capsys.readouterr().out
    assert main(["eval", "--policy", "random", "--manifest", str(suite / "test.json"), "--episodes", "5"]) == 0
    assert "SR      0.00 +- 0.00 %" in capsys.readouterr().out


def test_path_override_from_environment(tmp_path, suite, monkeypatch):
    cfg = write_config(tmp_path / "run.json", tmp_path / "elsewhere", train={"bc_epochs": 0, "policy_net": SMALL_NET})
    assert main(["train", "bc", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 2
    monkeypatch.setenv("SCOPESIM_SUITE", str(suite))
    monkeypatch.setenv("SCOPESIM_OUT", str(tmp_path / "env_out"))
    assert main(["train", "bc", "--config", str(cfg)]) == 0
    assert (tmp_path / "env_out" / "bc_policy.bin").exists()


def test_runtime_failure_exit_code(tmp_path, suite):
    broken = tmp_path / "broken"
    for f in suite.rglob("*"):
        if f.is_file():
            dst = broken / f.relative_to(suite)
            dst.parent.mkdir(parents=True, exist_ok=True)
            dst.write_bytes(f.read_bytes())
    scene = next((broken / "scenes").iterdir())
    scene.write_bytes(scene.read_bytes()[:-100])
    cfg = write_config(tmp_path / "run.json", broken)
    assert main(["train", "bc", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_train_ablation(tmp_path, suite, capsys):
    cfg = write_config(tmp_path / "run.json", suite, episodes=1)
    assert main(["train", "illc", "--config", str(cfg), "--out", str(tmp_path / "abl"), "--ablation"]) == 0
    out = capsys.readouterr().out
    assert "w/o SPTA" in out and "w/o depth" in out
    lines = (tmp_path / "abl" / "sr_vs_rate.txt").read_text().splitlines()
    assert lines[0] == "rate sr" and [int(l.split()[0]) for l in lines[1:]] == [0, 1, 8]


def test_preview(tmp_path, suite, capsys):
    scene = suite / "scenes" / "scene000.scene"
    out = tmp_path / "p"
    assert main(["preview", "--scene", str(scene), "--pose", "0,0,0,0,0,0", "--out", str(out)]) == 0
    rgb = read_pnm(out / "frame.ppm")
    depth = read_pnm(out / "frame_depth.pgm")
    assert rgb.shape == (128, 160, 3) and depth.shape == (128, 160)
    assert (depth > 0).mean() > 0.5
    first = (out / "frame.ppm").read_bytes()
    main(["preview", "--scene", str(scene), "--pose", "0,0,0,0,0,0", "--out", str(out)])
    assert (out / "frame.ppm").read_bytes() == first
    traj = suite / "experts" / "scene000.traj"
    assert main(["preview", "--scene", str(scene), "--trajectory", str(traj), "--out", str(tmp_path / "t")]) == 0
    assert len(list((tmp_path / "t").glob("frame_*_depth.pgm"))) == len(read_waypoints(traj))
    capsys.readouterr()
    assert main(["preview", "--scene", str(scene), "--pose", "500,0,0,0,0,0", "--out", str(out)]) == 0
    assert "warning" in capsys.readouterr().err
    assert main(["preview", "--scene", str(scene), "--pose", "1,2", "--out", str(out)]) == 2
    assert main(["preview", "--scene", str(tmp_path / "none.scene"), "--pose", "0,0,0,0,0,0", "--out", str(out)]) == 2
