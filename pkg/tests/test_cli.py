import os

import numpy as np
import pytest

from casecast.cli import (
    build_parser,
    effective_config,
    main,
    parse_config_file,
)
from casecast.errors import ConfigError
from casecast.synthetic import write_fixture


@pytest.fixture(scope="module")
def cli_env(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    paths = write_fixture(root / "data", days=70, seed=4, news_dim=4)
    flags = [
        "--stats", paths["stats"], "--trends", paths["trends"],
        "--news-emb", paths["news"],
        "--lookback", "5", "--gru-units", "6", "--num-heads", "2",
        "--head-size", "3", "--news-hidden", "6,4", "--dropout", "0.0",
        "--batch-size", "16", "--epochs", "2", "--patience", "2",
        "--seed", "0",
    ]
    return {"root": root, "paths": paths, "flags": flags}


@pytest.fixture(scope="module")
def trained_dir(cli_env):
    out = str(cli_env["root"] / "trained")
    code = main(["train", *cli_env["flags"], "--output-dir", out])
    assert code == 0
    return out


class TestConfigFile:
    def test_comments_and_blanks_skipped(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# a comment\n\nlr = 0.05\nepochs = 3\n"
            "news_hidden = 8,4\nuse_attention = false\n")
        values = parse_config_file(path)
        assert values == {"lr": 0.05, "epochs": 3,
                          "news_hidden": (8, 4), "use_attention": False}

    def test_unknown_key_names_file_and_line(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("lr = 0.05\nlearning_rate = 0.1\n")
        with pytest.raises(ConfigError, match=r"run\.cfg:2"):
            parse_config_file(path)

    def test_missing_equals_sign(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("lr 0.05\n")
        with pytest.raises(ConfigError, match="key = value"):
            parse_config_file(path)

    def test_bad_value_names_key_and_kind(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("epochs = soon\n")
        with pytest.raises(ConfigError, match="'epochs' expects int"):
            parse_config_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config_file(tmp_path / "none.cfg")

    def test_bool_words(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("use_attention = yes\nnorm_then_add = 0\n")
        values = parse_config_file(path)
        assert values == {"use_attention": True, "norm_then_add": False}


class TestPrecedence:
    def test_defaults_then_file_then_flags(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("lr = 0.5\nepochs = 7\n")
        args = build_parser().parse_args(
            ["train", "--config", str(path), "--lr", "0.125"])
        cfg = effective_config(args)
        assert cfg["lr"] == 0.125          # flag beats file
        assert cfg["epochs"] == 7          # file beats default
        assert cfg["batch_size"] == 64     # untouched default

    def test_defaults_without_file(self):
        args = build_parser().parse_args(["train"])
        cfg = effective_config(args)
        assert cfg["lookback"] == 7 and cfg["horizon"] == 3
        assert cfg["news_hidden"] == (156, 32)
        assert cfg["grid_lr"] == (0.001, 0.01, 0.1)


class TestExitCodes:
    def test_missing_stats_file_is_input_error(self, cli_env, tmp_path,
                                               capsys):
        code = main(["train", "--stats", str(tmp_path / "absent.csv"),
                     "--output-dir", str(tmp_path / "out")])
        assert code == 3
        assert capsys.readouterr().err.startswith("input-missing:")

    def test_invalid_dropout_is_config_error(self, cli_env, tmp_path,
                                             capsys):
        code = main(["train", *cli_env["flags"], "--dropout", "1.5",
                     "--output-dir", str(tmp_path / "out")])
        assert code == 2
        assert capsys.readouterr().err.startswith("config-error:")

    def test_missing_config_file_is_config_error(self, tmp_path, capsys):
        code = main(["train", "--config", str(tmp_path / "none.cfg")])
        assert code == 2
        assert "not found" in capsys.readouterr().err

    def test_required_key_missing(self, tmp_path, capsys):
        code = main(["train", "--output-dir", str(tmp_path / "out")])
        assert code == 2
        assert "stats" in capsys.readouterr().err

    def test_predict_without_params(self, cli_env, tmp_path, capsys):
        code = main(["predict", *cli_env["flags"],
                     "--output-dir", str(tmp_path / "fresh")])
        assert code == 2
        assert "parameter file" in capsys.readouterr().err

    def test_unknown_flag_rejected_by_parser(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["train", "--warp-speed", "9"])


class TestTrainCommand:
    def test_artifacts_written(self, trained_dir):
        for name in ("params.npz", "history.csv", "val_predictions.csv",
                     "effective_config.cfg"):
            assert os.path.exists(os.path.join(trained_dir, name)), name

    def test_history_echoes_settings(self, trained_dir):
        lines = open(os.path.join(trained_dir, "history.csv")).readlines()
        echo = [l for l in lines if l.startswith("# ")]
        assert any("lr = 0.01" in l for l in echo)
        assert any("lookback = 5" in l for l in echo)
        header = next(l for l in lines if not l.startswith("#"))
        assert header.strip() == "epoch,train_loss,val_rmse"

    def test_stdout_reports_progress(self, cli_env, tmp_path, capsys):
        out = str(tmp_path / "out")
        code = main(["train", *cli_env["flags"], "--output-dir", out,
                     "--epochs", "1", "--patience", "1"])
        assert code == 0
        text = capsys.readouterr().out
        assert "trained 1 epochs" in text
        assert "best validation rmse" in text

    def test_effective_config_reloads_identically(self, trained_dir,
                                                  cli_env):
        reloaded = parse_config_file(
            os.path.join(trained_dir, "effective_config.cfg"))
        assert reloaded["lookback"] == 5
        assert reloaded["gru_units"] == 6
        assert reloaded["news_hidden"] == (6, 4)
        assert reloaded["stats"] == str(cli_env["paths"]["stats"])

    def test_two_runs_are_bit_identical(self, cli_env):
        outs = []
        for sub in ("rep_a", "rep_b"):
            out = str(cli_env["root"] / sub)
            assert main(["train", *cli_env["flags"],
                         "--output-dir", out]) == 0
            outs.append(out)
        a = open(os.path.join(outs[0], "params.npz"), "rb").read()
        b = open(os.path.join(outs[1], "params.npz"), "rb").read()
        assert a == b, "params.npz differs between identical runs"
        for name in ("history.csv", "val_predictions.csv"):
            # echo headers repeat output_dir, so compare the data lines
            a = [l for l in open(os.path.join(outs[0], name))
                 if not l.startswith("#")]
            b = [l for l in open(os.path.join(outs[1], name))
                 if not l.startswith("#")]
            assert a == b, f"{name} differs between identical runs"


class TestPredictAndEvaluate:
    def test_predict_uses_trained_params(self, cli_env, trained_dir,
                                         tmp_path, capsys):
        out = str(tmp_path / "pred")
        code = main(["predict", *cli_env["flags"],
                     "--params", os.path.join(trained_dir, "params.npz"),
                     "--output-dir", out])
        assert code == 0
        lines = [l for l in open(os.path.join(out, "predictions.csv"))
                 if not l.startswith("#")]
        assert lines[0].strip() == "date,actual,predicted"
        assert len(lines) == 1 + 7  # 63 windows -> 7 test windows
        assert "7 predictions" in capsys.readouterr().out

    def test_predict_defaults_to_output_dir_params(self, cli_env,
                                                   trained_dir, capsys):
        code = main(["predict", *cli_env["flags"],
                     "--output-dir", trained_dir])
        assert code == 0
        capsys.readouterr()

    def test_evaluate_writes_metrics(self, cli_env, trained_dir, tmp_path,
                                     capsys):
        out = str(tmp_path / "eval")
        code = main(["evaluate", *cli_env["flags"],
                     "--params", os.path.join(trained_dir, "params.npz"),
                     "--output-dir", out])
        assert code == 0
        text = capsys.readouterr().out
        assert "rmse" in text and "area_between" in text
        rows = [l for l in open(os.path.join(out, "metrics.csv"))
                if not l.startswith("#")]
        assert rows[0].strip() == "condition,rmse,mae,area_between"
        parts = rows[1].strip().split(",")
        assert parts[0] == "full"
        assert np.isfinite(float(parts[1]))

    def test_eval_split_selects_validation(self, cli_env, trained_dir,
                                           tmp_path, capsys):
        out = str(tmp_path / "eval_val")
        code = main(["evaluate", *cli_env["flags"],
                     "--params", os.path.join(trained_dir, "params.npz"),
                     "--eval-split", "validation", "--output-dir", out])
        assert code == 0
        capsys.readouterr()
        rows = [l for l in open(os.path.join(out, "predictions.csv"))
                if not l.startswith("#")]
        assert len(rows) == 1 + 5  # 63 windows -> 5 validation windows

    def test_bad_split_name(self, cli_env, trained_dir, tmp_path, capsys):
        code = main(["evaluate", *cli_env["flags"],
                     "--params", os.path.join(trained_dir, "params.npz"),
                     "--eval-split", "holdout",
                     "--output-dir", str(tmp_path / "x")])
        assert code == 2
        assert "eval_split" in capsys.readouterr().err


class TestGridSearchCommand:
    def test_grid_csv_written(self, cli_env, tmp_path, capsys):
        out = str(tmp_path / "grid")
        code = main([
            "gridsearch", *cli_env["flags"], "--output-dir", out,
            "--epochs", "1", "--patience", "1", "--grid-batch-size", "16",
            "--grid-lr", "0.01,0.1", "--grid-gru-units", "6",
            "--grid-dropout", "0.0", "--grid-num-heads", "2",
            "--grid-head-size", "3"])
        assert code == 0
        assert "ran 2 trials" in capsys.readouterr().out
        rows = [l for l in open(os.path.join(out, "grid.csv"))
                if not l.startswith("#")]
        assert len(rows) == 3
        assert rows[0].startswith("rank,index,batch_size,lr")
        assert all(r.strip().endswith(",ok") for r in rows[1:])


class TestAblateCommand:
    def test_ablation_csv_and_stdout(self, cli_env, tmp_path, capsys):
        out = str(tmp_path / "ablate")
        code = main(["ablate", *cli_env["flags"],
                     "--groups", cli_env["paths"]["groups"],
                     "--output-dir", out, "--epochs", "1",
                     "--patience", "1"])
        assert code == 0
        text = capsys.readouterr().out
        assert "full: rmse" in text
        assert "without_attention: rmse" in text
        rows = [l for l in open(os.path.join(out, "ablation.csv"))
                if not l.startswith("#")]
        assert len(rows) == 1 + 11
        assert rows[1].startswith("full,")


class TestSelftest:
    def test_selftest_passes(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "ok" in out
