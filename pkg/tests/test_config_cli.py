import json
from pathlib import Path

import numpy as np
import pytest

from moectr.cli import main
from moectr.config import RunConfig, SynthSpec, parse_expert_spec, parse_kv_text
from moectr.data import gen_synthetic, save_table

REPO_ROOT = Path(__file__).resolve().parent.parent


class TestKvParsing:
    def test_comments_and_blanks(self):
        kv = parse_kv_text("# top\n\nkey = value  # trailing\nother=x\n")
        assert kv == {"key": "value", "other": "x"}

    def test_bad_line(self):
        with pytest.raises(ValueError, match="line 2"):
            parse_kv_text("a = 1\nnot a pair\n")


class TestExpertSpecParsing:
    def test_dnn(self):
        cfg = parse_expert_spec("dnn:500-500-500", 16)
        assert cfg.kind == "dnn"
        assert cfg.hidden == (500, 500, 500)
        assert cfg.out_dim == 16

    def test_fm(self):
        assert parse_expert_spec("fm", 8).kind == "fm"

    def test_crossnet_default_layers(self):
        assert parse_expert_spec("crossnet", 8).cross_layers == 3
        assert parse_expert_spec("crossnet:5", 8).cross_layers == 5

    def test_cin(self):
        assert parse_expert_spec("cin:16-16", 8).cin_maps == (16, 16)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown expert kind"):
            parse_expert_spec("transformer", 8)

    def test_fm_takes_no_params(self):
        with pytest.raises(ValueError):
            parse_expert_spec("fm:3", 8)


class TestRunConfig:
    def test_shipped_default_config_parses_to_paper_defaults(self):
        cfg = RunConfig.from_file(REPO_ROOT / "configs" / "default.cfg")
        assert cfg.lr == 0.001
        assert cfg.batch_size == 10000
        assert cfg.tower_hidden == (500,)
        assert cfg.gate_hidden == (64,)
        assert cfg.embed_dim == 16
        assert cfg.mode == "me"
        assert len(cfg.expert_specs) == 2

    def test_loss_and_train_config(self):
        cfg = RunConfig.from_text(
            "fields = a:10, b:10\nloss_form = cov_l1\nalpha = 0.25\n"
            "loss_location = input\nlr = 0.01\nbatch_size = 64\nepochs = 2\n"
        )
        loss = cfg.loss_config()
        assert loss.form == "cov_l1" and loss.alpha == 0.25 and loss.location == "input"
        tc = cfg.train_config()
        assert tc.learning_rate == 0.01 and tc.batch_size == 64 and tc.epochs == 2

    def test_schema_requires_fields(self):
        with pytest.raises(ValueError, match="fields"):
            RunConfig.from_text("lr = 0.1\n").schema()

    def test_build_model_from_config(self):
        cfg = RunConfig.from_text(
            "fields = a:10, b:10\nexperts = fm, crossnet:2\nembed_dim = 4\n"
            "expert_out_dim = 4\ngate_hidden = 8\ntower_hidden = 8\nalpha = 0\n"
        )
        model = cfg.build()
        assert model.num_experts == 2
        assert model.experts[0].kind == "fm"
        assert model.experts[1].kind == "crossnet"


class TestSynthSpec:
    def test_parse(self, tmp_path):
        path = tmp_path / "spec.cfg"
        path.write_text("rows = 100\nfields = 3\ncardinality = 10\nlatent_dim = 2\nseed = 5\n")
        spec = SynthSpec.from_file(path)
        assert spec.rows == 100
        assert spec.num_fields == 3
        assert spec.cardinalities == [10, 10, 10]

    def test_per_field_cardinalities(self, tmp_path):
        path = tmp_path / "spec.cfg"
        path.write_text("rows = 10\nfields = 3\ncardinality = 4,5,6\n")
        assert SynthSpec.from_file(path).cardinalities == [4, 5, 6]


@pytest.fixture
def synth_csv(tmp_path):
    ds, _ = gen_synthetic(3, 12, 2, 400, seed=5, pair_strength=2.0)
    path = tmp_path / "data.csv"
    save_table(ds, path)
    return path, ds


def _train_config_text(csv_path):
    return (
        f"train = {csv_path}\n"
        "fields = f0:12, f1:12, f2:12\n"
        "label = label\n"
        "encoded = true\n"
        "split = 0.7, 0.2, 0.1\n"
        "experts = crossnet:2, crossnet:2\n"
        "mode = me\n"
        "embed_dim = 4\n"
        "expert_out_dim = 4\n"
        "gate_hidden = 8\n"
        "tower_hidden = 8\n"
        "loss_form = corr\n"
        "alpha = 0.5\n"
        "loss_location = output\n"
        "lr = 0.01\n"
        "batch_size = 64\n"
        "epochs = 2\n"
        "patience = 5\n"
        "seed = 3\n"
    )


class TestCli:
    def test_train_eval_cec_roundtrip(self, tmp_path, synth_csv, capsys):
        csv_path, _ = synth_csv
        cfg_path = tmp_path / "run.cfg"
        cfg_path.write_text(_train_config_text(csv_path))
        model_path = tmp_path / "model.bin"
        assert main(["train", "--config", str(cfg_path), "--out", str(model_path)]) == 0
        assert model_path.exists()
        out = capsys.readouterr().out
        assert "best epoch" in out

        report_path = tmp_path / "report.json"
        assert main([
            "eval", "--model", str(model_path), "--data", str(csv_path),
            "--report", str(report_path), "--encoded",
        ]) == 0
        record = json.loads(report_path.read_text())
        assert set(record) >= {"auc", "logloss", "cec_pairs", "cec_sum"}
        assert 0.0 <= record["auc"] <= 1.0
        assert record["cec_pairs"][0].keys() == {"m1", "m2", "cec"}

        csv_out = tmp_path / "cec.csv"
        assert main([
            "cec-report", "--model", str(model_path), "--data", str(csv_path),
            "--csv", str(csv_out), "--encoded",
        ]) == 0
        lines = csv_out.read_text().strip().split("\n")
        assert lines[0] == "m1,m2,cec"
        assert len(lines) == 2
        assert float(lines[1].split(",")[2]) == record["cec_pairs"][0]["cec"]

    def test_gen_synth(self, tmp_path):
        spec = tmp_path / "spec.cfg"
        spec.write_text("rows = 200\nfields = 3\ncardinality = 8\nlatent_dim = 2\nseed = 11\n")
        out = tmp_path / "synth.csv"
        assert main(["gen-synth", "--spec", str(spec), "--out", str(out)]) == 0
        assert out.exists()
        assert (tmp_path / "synth.csv.params").exists()
        header = out.read_text().split("\n", 1)[0]
        assert header == "f0,f1,f2,label"

    def test_gradcheck_command(self, capsys):
        assert main(["gradcheck"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 10
        assert "FAIL" not in out
