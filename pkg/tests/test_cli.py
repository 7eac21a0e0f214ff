import json

import numpy as np
import pytest

from pdmm import canonical
from pdmm.cli import main
from pdmm.config import ConfigError, RunConfig, parse_config


def run(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def cohort_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "cohort"
    assert run("synth", "--out", str(out), "--patients", "30", "--seed", "5") == 0
    return out


@pytest.fixture(scope="module")
def fast_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "config.json"
    canonical.dump_file({"epochs": 2, "image_side": 48, "seed": 5}, path)
    return path


class TestParseConfig:
    def test_empty_object_is_defaults(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{}")
        assert parse_config(path) == RunConfig()

    def test_negative_epochs_named(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"epochs": -1}')
        with pytest.raises(ConfigError, match="epochs"):
            parse_config(path)

    def test_lr_override(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"lr": 0.05}')
        cfg = parse_config(path)
        assert cfg.lr == 0.05
        assert cfg.epochs == RunConfig().epochs

    def test_unknown_key_named(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"learning_rate": 0.1}')
        with pytest.raises(ConfigError, match="learning_rate"):
            parse_config(path)

    def test_none_is_defaults(self):
        assert parse_config(None) == RunConfig()


class TestSynth:
    def test_deterministic_outputs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run("synth", "--out", str(out), "--patients", "10", "--seed", "7") == 0
        for name in ("features.csv", "manifest.json", "vol_p0001.mvol"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_manifest_embeds_seed(self, cohort_dir):
        manifest = json.loads((cohort_dir / "manifest.json").read_text())
        assert manifest["spec"]["seed"] == 5


class TestPruneSliceCommands:
    def test_prune(self, cohort_dir, tmp_path):
        out_csv = tmp_path / "pruned.csv"
        report = tmp_path / "report.json"
        code = run(
            "prune", "--features", str(cohort_dir / "features.csv"),
            "--threshold", "0.5", "--out", str(out_csv), "--report", str(report),
        )
        assert code == 0
        doc = json.loads(report.read_text())
        assert doc["threshold"] == 0.5
        assert len(doc["dropped"]) >= 10

    def test_slice(self, cohort_dir, tmp_path):
        prefix = tmp_path / "s"
        code = run("slice", "--volume", str(cohort_dir / "vol_p0001.mvol"),
                   "--out-prefix", str(prefix))
        assert code == 0
        for plane in ("sagittal", "coronal", "transverse"):
            data = (tmp_path / f"s_{plane}.pgm").read_bytes()
            assert data.startswith(b"P5\n")

    def test_slice_missing_volume(self, tmp_path):
        assert run("slice", "--volume", str(tmp_path / "no.mvol"),
                   "--out-prefix", str(tmp_path / "x")) == 2


@pytest.fixture(scope="module")
def trained(cohort_dir, fast_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    ckpt = out / "sym.json"
    log = out / "sym.log.json"
    code = run("train", "--modality", "symptoms", "--data", str(cohort_dir),
               "--config", str(fast_config), "--out", str(ckpt), "--log", str(log))
    assert code == 0
    return ckpt, log


class TestTrainEvalPredict:
    def test_log_embeds_config_and_split(self, trained):
        _, log = trained
        doc = json.loads(log.read_text())
        assert doc["config"]["seed"] == 5
        assert doc["config"]["epochs"] == 2
        assert len(doc["epochs"]) == 2
        assert set(doc["split"]["train_ids"]) | set(doc["split"]["test_ids"])

    def test_eval_reproduces_training_metrics(self, trained, cohort_dir, tmp_path):
        ckpt, log = trained
        report_path = tmp_path / "report.json"
        assert run("eval", "--ckpt", str(ckpt), "--data", str(cohort_dir),
                   "--out", str(report_path)) == 0
        report = json.loads(report_path.read_text())
        logged = json.loads(log.read_text())
        assert report["report"] == logged["final_test_report"]
        assert report["report"]["accuracy"] == logged["epochs"][-1]["test_accuracy"]

    def test_predict_prints_scores(self, trained, cohort_dir, capsys):
        ckpt, _ = trained
        assert run("predict", "--ckpt", str(ckpt), "--data", str(cohort_dir),
                   "--patient", "p0001") == 0
        out = capsys.readouterr().out
        assert "predicted" in out and "scores [" in out

    def test_predict_unknown_patient(self, trained, cohort_dir):
        ckpt, _ = trained
        assert run("predict", "--ckpt", str(ckpt), "--data", str(cohort_dir),
                   "--patient", "nope") == 2

    def test_train_missing_data_dir(self, fast_config, tmp_path):
        code = run("train", "--modality", "hybrid", "--data", str(tmp_path / "missing"),
                   "--config", str(fast_config),
                   "--out", str(tmp_path / "c.json"), "--log", str(tmp_path / "l.json"))
        assert code == 2

    def test_train_bad_config(self, cohort_dir, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"epochs": -3}')
        code = run("train", "--modality", "symptoms", "--data", str(cohort_dir),
                   "--config", str(bad),
                   "--out", str(tmp_path / "c.json"), "--log", str(tmp_path / "l.json"))
        assert code == 2


class TestGradcheckCommand:
    def test_exit_zero_and_table(self, capsys):
        assert run("gradcheck", "--seed", "1") == 0
        out = capsys.readouterr().out
        assert "dense" in out and "conv" in out and "ok" in out


class TestUsageErrors:
    def test_unknown_subcommand(self):
        assert run("frobnicate") == 1

    def test_missing_required_flag(self):
        assert run("synth", "--patients", "5") == 1
