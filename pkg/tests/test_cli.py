import json

import pytest

from umhi.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, run_command
from umhi.config import (
    ALL_METHODS,
    DESK_PROFILE,
    ConfigError,
    ExperimentConfig,
    load_config,
    parse_config_text,
)

# tiny dimensions so the whole chain runs in seconds
TINY = ["--line-epochs", "2", "--line-dim", "8", "--walk-dim", "8", "--walks-per-node", "2",
        "--walk-length", "10", "--word-dim", "8", "--word-epochs", "1", "--han-hidden", "4",
        "--han-attention", "4", "--han-epochs", "1", "--mf-k", "4", "--mf-epochs", "2", "--fusion-epochs", "1",
        "--fusion-hidden", "8,4", "--folds", "2", "--svd-dim", "5"]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert run_command(["synth", "--out", str(out), "--users", "150", "--pairs", "600", "--seed", "7", *TINY]) == 0
    assert run_command(["evaluate", "--out", str(out)]) == 0
    return out


# config


def test_defaults_follow_published_settings():
    cfg = ExperimentConfig()
    assert (cfg.line_dim, cfg.mf_k, cfg.han_hidden, cfg.folds) == (100, 64, 100, 5)
    assert cfg.betas == (0.1, 0.001)
    assert cfg.hidden_layers == (256, 64)
    assert cfg.method_list == ALL_METHODS


def test_text_roundtrip():
    cfg = ExperimentConfig(seed=11, methods="umhi,mf", fusion_hidden="32,8", han_float32=True)
    assert load_config(None, **parse_config_text(cfg.to_text())) == cfg


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# comment\nseed = 4\nline_dim = 16\n\nhan_float32 = true\n", encoding="utf-8")
    cfg = load_config(path, line_dim=32)
    assert (cfg.seed, cfg.line_dim, cfg.han_float32) == (4, 32, True)


@pytest.mark.parametrize("text", ["bogus_key = 1\n", "line_dim = many\n", "just words\n"])
def test_bad_config_text(tmp_path, text):
    path = tmp_path / "c.txt"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)


@pytest.mark.parametrize("grid", ["1", "1:x", "0:1"])
def test_bad_node2vec_grid(grid):
    with pytest.raises(ConfigError):
        ExperimentConfig(node2vec_grid=grid).node2vec_grid_points


def test_unknown_method():
    with pytest.raises(ConfigError):
        ExperimentConfig(methods="umhi,magic").method_list


def test_desk_profile_keys_exist():
    assert set(DESK_PROFILE) <= set(ExperimentConfig.__dataclass_fields__)


# exit codes


def test_usage_errors(tmp_path, capsys):
    assert run_command([]) == EXIT_USAGE
    assert run_command(["evaluate", "--no-such-flag"]) == EXIT_USAGE
    assert run_command(["frobnicate"]) == EXIT_USAGE
    assert run_command(["evaluate", "--out", str(tmp_path), "--methods", "umhi,magic"]) == EXIT_USAGE
    bad = tmp_path / "bad.txt"
    bad.write_text("not_a_key = 3\n", encoding="utf-8")
    assert run_command(["evaluate", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_USAGE
    assert "not_a_key" in capsys.readouterr().err


def test_missing_artifacts(tmp_path, capsys):
    assert run_command(["evaluate", "--out", str(tmp_path / "empty")]) == EXIT_DATA
    assert "missing input artifact" in capsys.readouterr().err
    assert run_command(["train", "--out", str(tmp_path / "empty")]) == EXIT_DATA
    assert run_command(["evaluate", "--config", str(tmp_path / "nope.txt")]) == EXIT_DATA


def test_malformed_relations(tmp_path):
    rel = tmp_path / "r.tsv"
    rel.write_text("a\tb\tnot-a-time\t-\n", encoding="utf-8")
    posts = tmp_path / "p.jsonl"
    posts.write_text("", encoding="utf-8")
    code = run_command(["ingest", "--out", str(tmp_path / "run"), "--relations", str(rel), "--posts", str(posts)])
    assert code == EXIT_DATA


# end to end


def test_evaluate_writes_metrics(run_dir):
    doc = json.loads((run_dir / "metrics" / "metrics.json").read_text())
    assert doc["format"] == "umhi-metrics/1"
    assert set(doc["methods"]) == set(ALL_METHODS)
    assert all(len(m["folds"]) == 2 for m in doc["methods"].values())
    assert all(v == 0 for v in doc["leakage"].values())
    manifest = json.loads((run_dir / "run_manifest.json").read_text())
    assert {"synth", "evaluate"} <= set(manifest["stages"])


def test_report_is_byte_identical(run_dir, capsysbinary):
    assert run_command(["report", "--out", str(run_dir)]) == EXIT_OK
    assert capsysbinary.readouterr().out == (run_dir / "metrics" / "metrics.json").read_bytes()


def test_rerun_is_byte_identical(run_dir, tmp_path):
    other = tmp_path / "again"
    assert run_command(["synth", "--out", str(other), "--users", "150", "--pairs", "600", "--seed", "7", *TINY]) == 0
    assert run_command(["evaluate", "--out", str(other)]) == 0
    assert (other / "metrics" / "metrics.json").read_bytes() == (run_dir / "metrics" / "metrics.json").read_bytes()


def test_staged_commands_and_predict(run_dir, tmp_path):
    for cmd in ("analyze", "embed", "pretrain", "train"):
        assert run_command([cmd, "--out", str(run_dir)]) == EXIT_OK, cmd
    assert (run_dir / "analysis" / "roles.tsv").exists()
    users = (run_dir / "data" / "users.txt").read_text().split()
    pairs = tmp_path / "pairs.tsv"
    pairs.write_text(f"{users[0]}\t{users[1]}\n{users[2]}\t{users[0]}\n", encoding="utf-8")
    dest = tmp_path / "pred.tsv"
    assert run_command(["predict", "--out", str(run_dir), "--pairs", str(pairs), "--output", str(dest)]) == EXIT_OK
    rows = [line.split("\t") for line in dest.read_text().splitlines()]
    assert [r[:2] for r in rows] == [[users[0], users[1]], [users[2], users[0]]]
    for _, _, score, label in rows:
        assert 0 < float(score) < 1 and label == str(int(float(score) >= 0.5))
    pairs.write_text("nobody\tnowhere\n", encoding="utf-8")
    assert run_command(["predict", "--out", str(run_dir), "--pairs", str(pairs), "--output", str(dest)]) == EXIT_DATA


def test_format_version_mismatch(run_dir, tmp_path):
    import shutil

    copy = tmp_path / "copy"
    shutil.copytree(run_dir, copy)
    manifest = copy / "data" / "manifest.json"
    doc = json.loads(manifest.read_text())
    doc["version"] = 999
    manifest.write_text(json.dumps(doc))
    cfg = (copy / "config.txt").read_text().replace(str(run_dir), str(copy))
    (copy / "config.txt").write_text(cfg)
    assert run_command(["analyze", "--out", str(copy)]) == EXIT_DATA
