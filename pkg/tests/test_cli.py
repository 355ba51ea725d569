import json
import os

import numpy as np
import pytest

from sailforge.checkpoint import load_checkpoint
from sailforge.cli import EXIT_VERIFY_FAILED, main
from sailforge.config import parse_config
from sailforge.denoiser import init_model
from sailforge.pairs import load_pairs
from sailforge.pipeline import load_run, pretrain, read_losses

from conftest import tiny_text

pytestmark = pytest.mark.filterwarnings("ignore::RuntimeWarning")


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    for name in list(os.environ):
        if name.startswith("SAILFORGE_"):
            monkeypatch.delenv(name)


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(tiny_text())
    return path


@pytest.fixture
def base_run(tmp_path, cfg_file):
    out = tmp_path / "base"
    assert main(["pretrain", "--config", str(cfg_file), "--out", str(out)]) == 0
    return out


def _sail(cfg_file, base_run, out, *extra):
    return main(["sail", "--config", str(cfg_file), "--base", str(base_run / "checkpoints" / "base.ckpt"),
                 "--out", str(out), *extra])


def _manifest(run):
    return json.loads((run / "manifest.json").read_text())


def test_missing_seed_is_a_config_error(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("sail.alpha_mix=0.5\n")
    assert main(["pretrain", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "rng_seed" in capsys.readouterr().err


def test_pretrain_checkpoint_reloads_bitwise(base_run, cfg_file):
    model = load_checkpoint(base_run / "checkpoints" / "base.ckpt")
    fresh, _ = pretrain(parse_config(cfg_file.read_text(), {}))
    assert model.params.tobytes() == fresh.params.tobytes()
    manifest = _manifest(base_run)
    assert manifest["checksums"]["base"] == model.checksum()
    assert read_losses(base_run / "losses" / "pretrain.csv")


def test_zero_pretrain_steps_is_fresh_init(tmp_path, cfg_file):
    assert main(["pretrain", "--config", str(cfg_file), "--out", str(tmp_path / "z"), "--steps", "0"]) == 0
    model = load_checkpoint(tmp_path / "z" / "checkpoints" / "base.ckpt")
    cfg = parse_config(cfg_file.read_text(), {})
    assert np.array_equal(model.params, init_model(cfg.arch(), np.random.default_rng(cfg.rng_seed)).params)


def test_one_iteration_gives_three_checkpoints(tmp_path, cfg_file, base_run):
    out = tmp_path / "run"
    assert _sail(cfg_file, base_run, out) == 0
    assert sorted(p.name for p in (out / "checkpoints").iterdir()) == ["base.ckpt", "iter0.ckpt", "iter1.ckpt"]
    manifest = _manifest(out)
    for rel in manifest["paths"].values():
        assert (out / rel).exists()
    _, lineage, _ = load_run(out)
    assert [manifest["checksums"][lab] for lab in lineage.labels()] == lineage.checksums()
    assert len((out / "metrics.csv").read_text().splitlines()) == 4


def test_no_mixup_flag(tmp_path, cfg_file, base_run):
    out = tmp_path / "nomix"
    assert _sail(cfg_file, base_run, out, "--no-mixup", "--iters", "2") == 0
    assert _manifest(out)["config"]["sail.mixup_enabled"] is False
    for i in (1, 2):
        assert load_pairs(out / "datasets" / f"iter{i}.pairs").counts()["seed"] == 0


def test_strategy_flag_recorded(tmp_path, cfg_file, base_run):
    out = tmp_path / "rand"
    assert _sail(cfg_file, base_run, out, "--strategy", "random", "--no-eval") == 0
    manifest = _manifest(out)
    assert manifest["config"]["sail.selection_strategy"] == "random"
    assert not (out / "metrics.csv").exists()


def test_ranking_reference_alias_and_alpha(tmp_path, cfg_file, base_run):
    out = tmp_path / "alias"
    assert _sail(cfg_file, base_run, out, "--ranking-ref", "iter0", "--alpha", "0.5", "--no-eval") == 0
    cfg = _manifest(out)["config"]
    assert cfg["sail.ranking_reference"] == "base" and cfg["sail.alpha_mix"] == 0.5


def test_eval_is_byte_identical(tmp_path, cfg_file, base_run):
    out = tmp_path / "ev"
    assert _sail(cfg_file, base_run, out) == 0
    first = (out / "metrics.csv").read_bytes()
    svg = (out / "metrics.svg").read_bytes()
    assert main(["eval", str(out)]) == 0
    assert (out / "metrics.csv").read_bytes() == first
    assert main(["eval", str(out), "--no-plot"]) == 0
    assert (out / "metrics.csv").read_bytes() == first and (out / "metrics.svg").read_bytes() == svg


def test_sail_without_base_pretrains_in_run(tmp_path, cfg_file):
    out = tmp_path / "full"
    assert main(["sail", "--config", str(cfg_file), "--out", str(out), "--no-eval"]) == 0
    assert (out / "losses" / "pretrain.csv").exists() and "pretrain_loss" in _manifest(out)["paths"]


def test_seed_flag_overrides_config(tmp_path, cfg_file, base_run):
    out = tmp_path / "s5"
    assert _sail(cfg_file, base_run, out, "--seed", "5", "--no-eval") == 0
    assert _manifest(out)["config"]["rng_seed"] == 5


def test_environment_seed(tmp_path, monkeypatch, cfg_file):
    monkeypatch.setenv("SAILFORGE_SEED", "9")
    out = tmp_path / "env"
    assert main(["pretrain", "--config", str(cfg_file), "--out", str(out), "--steps", "0"]) == 0
    assert _manifest(out)["config"]["rng_seed"] == 9


def test_io_errors_exit_4(tmp_path, cfg_file, capsys):
    assert main(["eval", str(tmp_path / "nowhere")]) == 4
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    assert main(["sail", "--config", str(cfg_file), "--base", str(bad), "--out", str(tmp_path / "x")]) == 4
    assert "ArtifactIOError" in capsys.readouterr().err


def test_mismatched_base_is_a_config_error(tmp_path, base_run):
    other = tmp_path / "wide.cfg"
    other.write_text(tiny_text(model__hidden="8"))
    args = ["sail", "--config", str(other), "--base", str(base_run / "checkpoints" / "base.ckpt"),
            "--out", str(tmp_path / "y")]
    assert main(args) == 2


def test_verify_command(tmp_path, capsys):
    assert EXIT_VERIFY_FAILED == 5
    assert main(["verify", "--out", str(tmp_path / "report.csv")]) == 0
    text = (tmp_path / "report.csv").read_text()
    assert text == capsys.readouterr().out
    assert text.startswith("check,status,discrepancy,tolerance") and ",fail," not in text
