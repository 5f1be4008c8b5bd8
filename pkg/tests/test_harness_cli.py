from dataclasses import replace

import pytest

from edbl import checkpoint
from edbl.cli import main
from edbl.config import ExperimentConfig, desk_preset, load_preset, preset_names
from edbl.data import SyntheticSpec
from edbl.exceptions import ConfigError
from edbl.harness import SCHEMA, format_rows, read_metrics, run_experiment, run_single, summarize, summary_table
from edbl.mixup import ResampleConfig
from edbl.protocol import Protocol


def tiny_config(tmp_path, **kw):
    cfg = desk_preset()
    cfg = replace(
        cfg,
        dataset=replace(cfg.dataset, synthetic=SyntheticSpec(4, 4, 20, 10)),
        protocol=Protocol("base0", 2, 8),
        hidden=(8,),
        train=replace(cfg.train, epochs_phase1=2, epochs_phase2=1, milestones_phase1=(), milestones_phase2=(),
                      batch_size=16, resample=ResampleConfig(2, 16, 4)),
        strategies=("baseline", "edbl"),
        seeds=(0,),
        output=str(tmp_path / "out"),
    )
    return replace(cfg, **kw)


def write_tiny(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(tiny_config(tmp_path).to_yaml(), encoding="utf-8")
    return path


class TestConfig:
    def test_yaml_round_trip(self, tmp_path):
        cfg = tiny_config(tmp_path)
        again = ExperimentConfig.from_yaml(cfg.to_yaml())
        assert again == cfg

    def test_unknown_keys(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"bogus": 1})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"train": {"lr": 0.1}})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"protocol": {"kind": "base0", "extra": 1}})

    def test_reference_preset(self):
        cfg = load_preset("cifar100-base0-5")
        assert cfg.train.balance.gamma == 300.0
        assert cfg.train.balance.alpha == 5e-6
        assert cfg.protocol == Protocol("base0", 5, 2000)
        assert cfg.train.epochs_phase1 == 150 and cfg.train.milestones_phase2 == (30, 60, 80)

    def test_every_preset_loads(self):
        for name in preset_names():
            assert load_preset(name).name == name

    def test_base_half_budget_is_per_class(self):
        cfg = load_preset("tinyimagenet-basehalf-10")
        assert cfg.protocol.budget_policy == "per_class" and cfg.protocol.budget == 20
        assert cfg.train.balance.gamma == 10.0

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            load_preset("nope")


class TestHarness:
    def test_run_single_writes_artifacts(self, tmp_path):
        cfg = tiny_config(tmp_path)
        result = run_single(cfg, 0, "edbl", tmp_path / "run")
        files = sorted(p.name for p in (tmp_path / "run").iterdir())
        assert files == ["checkpoint.bin", "metrics.csv", "per_class.jsonl", "train_log.jsonl"]
        arrays = checkpoint.load(tmp_path / "run" / "checkpoint.bin")
        assert sorted(arrays["class_order"]) == [0, 1, 2, 3]
        assert "model/head.weight" in arrays and "store/meta" in arrays
        assert len(result.metrics) == 2
        assert 0.0 <= result.final_accuracy() <= 1.0

    def test_experiment_is_byte_identical(self, tmp_path):
        a = run_experiment(tiny_config(tmp_path, output=str(tmp_path / "a")))
        b = run_experiment(tiny_config(tmp_path, output=str(tmp_path / "b")))
        assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()
        assert [r.rows() for r in a] == [r.rows() for r in b]

    def test_parallel_matches_serial(self, tmp_path):
        run_experiment(tiny_config(tmp_path, output=str(tmp_path / "s")))
        run_experiment(tiny_config(tmp_path, output=str(tmp_path / "p")), jobs=2)
        assert (tmp_path / "s/metrics.csv").read_bytes() == (tmp_path / "p/metrics.csv").read_bytes()

    def test_read_and_summarize(self, tmp_path):
        rows = [("r", s, "edbl", p, "cnn", acc) for s, accs in ((0, (1.0, 0.5)), (1, (0.8, 0.3)))
                for p, acc in enumerate(accs)]
        path = tmp_path / "m.csv"
        path.write_text(format_rows(rows), encoding="utf-8")
        assert read_metrics([path]) == rows
        summary = summarize(rows)[("edbl", "cnn")]
        assert summary["phases"][0][0] == pytest.approx(0.9)
        assert summary["avg_inc"][0] == pytest.approx((0.75 + 0.55) / 2)
        assert "edbl" in summary_table(rows)

    def test_schema_required(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("run_id,seed\n", encoding="utf-8")
        with pytest.raises(ValueError):
            read_metrics([path])


class TestCli:
    def test_presets(self, capsys):
        assert main(["presets"]) == 0
        assert "desk-base0-5" in capsys.readouterr().out
        assert main(["presets", "cifar10-base0-2"]) == 0
        assert "gamma: 10.0" in capsys.readouterr().out

    def test_run_strategies_flag(self, tmp_path, capsys):
        cfg_path = write_tiny(tmp_path)
        out = tmp_path / "cli"
        assert main(["run", "--config", str(cfg_path), "--strategies", "baseline,edbl", "--out", str(out)]) == 0
        assert sorted(p.name for p in out.iterdir() if p.is_dir()) == ["baseline", "edbl"]
        text = (out / "metrics.csv").read_text(encoding="utf-8")
        assert text.startswith(SCHEMA + "\n")
        assert main(["report", str(out)]) == 0
        assert "baseline" in capsys.readouterr().out

    def test_seed_ranges(self, tmp_path):
        cfg_path = write_tiny(tmp_path)
        out = tmp_path / "seeds"
        assert main(["run", "--config", str(cfg_path), "--seeds", "0-1", "--strategies", "baseline",
                     "--out", str(out)]) == 0
        assert {r[1] for r in read_metrics([out])} == {0, 1}

    def test_generate(self, tmp_path):
        out = tmp_path / "gen"
        assert main(["generate", "--config", str(write_tiny(tmp_path)), "--out", str(out)]) == 0
        lines = (out / "train.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "class,x0,x1,x2,x3" and len(lines) == 81

    def test_bad_config_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("train: {nope: 1}\n", encoding="utf-8")
        assert main(["run", "--config", str(bad)]) == 2
        assert "error" in capsys.readouterr().err

    def test_config_and_preset_conflict(self, tmp_path):
        assert main(["run", "--config", str(write_tiny(tmp_path)), "--preset", "desk-base0-5"]) == 2


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"NOTACKPT" + bytes(8))
    with pytest.raises(ValueError):
        checkpoint.load(path)
