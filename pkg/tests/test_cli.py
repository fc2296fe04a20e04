import json

import numpy as np
import pytest
import yaml

from m3col import config as config_mod
from m3col.cli import main
from m3col.data import load_dataset
from m3col.model import init_model, load_checkpoint

EASY = {
    "name": "easy",
    "seed": 0,
    "dataset": {"synthetic": {"samples_per_class": 20, "dims": [8, 6], "latent_dim": 4,
                              "signal": 4.0, "noise": 0.2}},
    "model": {"hidden": 32, "embed": 32, "cls_hidden": 32, "dropout": 0.0},
    "train": {"epochs": 60, "lr": 5e-3, "step_size": 100},
}


@pytest.fixture
def easy_config(tmp_path):
    path = tmp_path / "easy.yaml"
    path.write_text(yaml.safe_dump(EASY))
    return path


def train(config, out, *extra):
    return main(["train", "--config", str(config), "--out", str(out), *extra])


class TestTrain:
    def test_writes_artifacts(self, easy_config, tmp_path):
        out = tmp_path / "run"
        assert train(easy_config, out) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["config"]["train"]["epochs"] == 60
        assert report["dataset"]["n_train"] == 56 and report["dataset"]["n_test"] == 24
        assert len(report["curves"]) == 60
        header = (out / "curves.csv").read_text().splitlines()[0].split(",")
        assert {"epoch", "phase", "total", "contrastive", "ce_multi", "ce_uni_0", "train_acc"} <= set(header)

    def test_zero_epochs_writes_untrained_checkpoint(self, easy_config, tmp_path):
        out = tmp_path / "run0"
        assert train(easy_config, out, "--set", "train.epochs=0") == 0
        model, _, meta = load_checkpoint(out / "checkpoint.npz")
        assert meta["format"] == "m3col-checkpoint"
        assert json.loads((out / "report.json").read_text())["curves"] == []
        # untrained weights come straight from the seeded initializer
        init_seed, _, _ = np.random.SeedSequence(0).spawn(3)
        fresh = init_model(model.dims, init_seed)
        assert all(np.array_equal(model.params[k], fresh.params[k]) for k in model.params)

    def test_same_seed_same_report(self, easy_config, tmp_path):
        out = tmp_path / "det"
        assert train(easy_config, out, "--set", "train.epochs=5") == 0
        first = (out / "report.json").read_bytes()
        assert train(easy_config, out, "--set", "train.epochs=5") == 0
        assert (out / "report.json").read_bytes() == first

    def test_env_out_dir(self, easy_config, tmp_path, monkeypatch):
        monkeypatch.setenv("M3COL_OUT_DIR", str(tmp_path / "env"))
        assert main(["train", "--config", str(easy_config), "--set", "train.epochs=1"]) == 0
        assert (tmp_path / "env" / "easy" / "report.json").is_file()

    @pytest.mark.parametrize("args", [
        ["--config", "does-not-exist.yaml"],
        ["--config", "preset:nope"],
        ["--set", "train.nonsense=1"],
        ["--set", "contrastive.tau=-1"],
        ["--set", "noequals"],
    ])
    def test_bad_config_exits_2(self, easy_config, tmp_path, args):
        argv = ["train", "--config", str(easy_config), "--out", str(tmp_path / "x"), *args]
        assert main(argv) == 2

    def test_non_finite_loss_exits_3(self, easy_config, tmp_path):
        assert train(easy_config, tmp_path / "nan", "--set", "train.lr=1e300", "--set", "train.epochs=3") == 3


class TestSynthAndEval:
    def test_default_synth_round_trip(self, tmp_path):
        assert main(["synth", "--config", "preset:synthetic", "--out", str(tmp_path / "d")]) == 0
        train, test = load_dataset(tmp_path / "d" / "manifest.json")
        assert (len(train), len(test)) == (560, 240)
        assert train.num_modalities == 2 and train.num_classes == 4

    def test_synth_is_deterministic(self, tmp_path):
        for d in ("a", "b"):
            assert main(["synth", "--config", "preset:synthetic", "--out", str(tmp_path / d), "--seed", "4"]) == 0
        for f in ("1_train.csv", "2_test.csv", "labels_train.csv", "manifest.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_unwritable_out_exits_2(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert main(["synth", "--config", "preset:synthetic", "--out", str(blocker / "sub")]) == 2

    def test_memorized_train_split(self, easy_config, tmp_path, capsys):
        cfg = dict(EASY, dataset={"manifest": str(tmp_path / "d" / "manifest.json")})
        assert main(["synth", "--config", str(easy_config), "--out", str(tmp_path / "d")]) == 0
        path = tmp_path / "from_manifest.yaml"
        path.write_text(yaml.safe_dump(cfg))
        assert train(path, tmp_path / "run") == 0
        capsys.readouterr()
        code = main(["eval", "--checkpoint", str(tmp_path / "run" / "checkpoint.npz"),
                     "--manifest", str(tmp_path / "d" / "manifest.json"), "--split", "train",
                     "--corrupt", "all"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["fused"]["acc"] == 1.0
        for tab in report["crosstabs"]:
            total = sum(r["correct"] + r["incorrect"] for r in tab["rows"])
            assert abs(total - 100.0) <= 0.01
        assert 0.25 <= report["corruption"]["fused"]["confidence"] <= 1.0

    def test_dimension_mismatch_exits_2(self, easy_config, tmp_path):
        assert train(easy_config, tmp_path / "run", "--set", "train.epochs=0") == 0
        other = dict(EASY["dataset"]["synthetic"], dims=[5, 5])
        cfg = tmp_path / "other.yaml"
        cfg.write_text(yaml.safe_dump({"dataset": {"synthetic": other}}))
        assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 0
        assert main(["eval", "--checkpoint", str(tmp_path / "run" / "checkpoint.npz"),
                     "--manifest", str(tmp_path / "d" / "manifest.json")]) == 2

    def test_missing_checkpoint_exits_2(self, tmp_path):
        assert main(["eval", "--checkpoint", str(tmp_path / "none.npz"), "--manifest", "x.json"]) == 2


class TestGradcheckCommand:
    def test_default_passes(self, capsys):
        assert main(["gradcheck"]) == 0
        out = capsys.readouterr().out
        for name in ("conventional_contrastive", "l_sim", "m3co_pair", "multisclip_pair",
                     "cross_entropy_unimodal", "cross_entropy_fused", "total_objective"):
            assert name in out

    def test_impossible_tolerance_exits_1(self, capsys):
        assert main(["gradcheck", "--tol", "1e-12"]) == 1
        assert "above tolerance" in capsys.readouterr().err


class TestAblateCommand:
    def test_one_seed_has_zero_std(self, easy_config, tmp_path, capsys):
        code = main(["ablate", "--config", str(easy_config), "--seeds", "3", "--out", str(tmp_path / "ab"),
                     "--set", "train.epochs=4"])
        assert code == 0
        doc = json.loads((tmp_path / "ab" / "ablation.json").read_text())
        assert doc["modes"] == ["mixup", "no-unimodal", "only-multisclip", "only-m3co", "full"]
        assert all(doc["summary"][m]["acc"]["std"] == 0.0 for m in doc["modes"])

    @pytest.mark.parametrize("args", [["--seeds", "a,b"], ["--seeds", ","], ["--seeds", "0", "--modes", "bogus"]])
    def test_bad_arguments(self, easy_config, args):
        assert main(["ablate", "--config", str(easy_config), *args]) == 2


@pytest.mark.slow
def test_corruption_never_beats_clean(tmp_path, capsys):
    """Single-modality corruption on the default synthetic data, five seeds."""
    assert main(["synth", "--config", "preset:synthetic", "--out", str(tmp_path / "d")]) == 0
    manifest = tmp_path / "d" / "manifest.json"
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"name": "c", "dataset": {"manifest": str(manifest)},
                                   "model": {"hidden": 32, "embed": 32, "cls_hidden": 32},
                                   "train": {"epochs": 40}}))
    for seed in range(5):
        out = tmp_path / f"s{seed}"
        assert train(cfg, out, "--seed", str(seed)) == 0
        clean = json.loads((out / "report.json").read_text())["metrics"]["test"]["fused"]["acc"]
        capsys.readouterr()
        assert main(["eval", "--checkpoint", str(out / "checkpoint.npz"), "--manifest", str(manifest),
                     "--corrupt", "0", "--seed", str(seed)]) == 0
        corrupted = json.loads(capsys.readouterr().out)["corruption"]["fused"]["acc"]
        assert corrupted <= clean


class TestConfig:
    def test_rosmap_preset_hyperparameters(self):
        cfg = config_mod.resolve("preset:rosmap")
        assert cfg["train"]["lr"] == 5e-3 and cfg["train"]["weight_decay"] == 1e-3
        assert cfg["train"]["epochs"] == 500 and cfg["model"]["dropout"] == 0.5
        assert cfg["model"]["hidden"] == cfg["model"]["embed"] == 1000
        assert cfg["contrastive"]["schedule_fraction"] == pytest.approx(1 / 3)

    def test_exponent_without_dot_is_a_number(self):
        cfg = config_mod.resolve("preset:synthetic", ["train.lr=1e-3", "train.epochs=5.0"])
        assert cfg["train"]["lr"] == 1e-3 and isinstance(cfg["train"]["epochs"], int)

    @pytest.mark.parametrize("item", ["train.lr=fast", "train.epochs=2.5", "contrastive.mixup_targets=1"])
    def test_wrong_types_rejected(self, item):
        with pytest.raises(config_mod.ConfigError):
            config_mod.resolve("preset:synthetic", [item])

    def test_precedence(self, easy_config, monkeypatch):
        monkeypatch.setenv("M3COL_OUT_DIR", "/env")
        assert config_mod.resolve(str(easy_config))["out_dir"] == "/env/easy"
        assert config_mod.resolve(str(easy_config), out="/cli")["out_dir"] == "/cli"
        assert config_mod.resolve(str(easy_config), ["seed=9"], seed=4)["seed"] == 4

    def test_dataset_source_required(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("name: x\n")
        with pytest.raises(config_mod.ConfigError):
            config_mod.build(config_mod.resolve(str(path)))
