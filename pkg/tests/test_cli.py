"""End-to-end command line behavior, run in-process via main()."""

import re
import subprocess

import numpy as np
import pytest

from amcnet.cli import RunConfig, main, parse_run_config, serialize_run_config
from amcnet.datagen import read_dataset, write_dataset

TINY_MODEL = dict(mlp_hidden=4, msm_filters_per_kernel=2,
                  backbone_channels=(4, 8, 8), classifier_hidden=(8, 8))


def write_config(path, **overrides):
    path.write_text(serialize_run_config(RunConfig(**overrides)))
    return str(path)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Dataset, config, trained checkpoint and eval report for a toy task."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "pair.amcd"
    rc = main(["generate", "--out", str(data), "--formats", "BPSK,WBFM",
               "--snr-min", "18", "--snr-max", "18", "--per-class", "24",
               "--seed", "1"])
    assert rc == 0
    config = write_config(root / "run.cfg", max_epochs=60, batch_size=16,
                          patience=1000, seed=1, **TINY_MODEL)
    model = root / "pair.amcm"
    rc = main(["train", "--data", str(data), "--config", config,
               "--out", str(model)])
    assert rc == 0
    report = root / "report"
    rc = main(["eval", "--model", str(model), "--data", str(data),
               "--report-dir", str(report)])
    assert rc == 0
    return root, data, model, report


class TestGenerate:
    def test_small_grid_writes_expected_count(self, tmp_path, capsys):
        out = tmp_path / "bpsk.amcd"
        rc = main(["generate", "--out", str(out), "--formats", "BPSK",
                   "--per-class", "2"])
        assert rc == 0
        assert "wrote 40 examples (1 formats x 20 SNRs)" in capsys.readouterr().out
        ds = read_dataset(out)
        assert len(ds) == 40
        assert ds.class_names == ("BPSK",)
        assert sorted(set(ds.snrs.tolist())) == list(range(-20, 19, 2))

    def test_zero_snr_step_is_a_usage_error(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as err:
            main(["generate", "--out", str(tmp_path / "x.amcd"),
                  "--snr-step", "0"])
        assert err.value.code == 2
        assert "--snr-step" in capsys.readouterr().err

    def test_inverted_snr_range_is_a_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["generate", "--out", str(tmp_path / "x.amcd"),
                  "--snr-min", "10", "--snr-max", "0"])
        assert err.value.code == 2

    def test_nonpositive_per_class_is_a_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["generate", "--out", str(tmp_path / "x.amcd"),
                  "--per-class", "0"])
        assert err.value.code == 2

    def test_unknown_format_fails_cleanly(self, tmp_path, capsys):
        rc = main(["generate", "--out", str(tmp_path / "x.amcd"),
                   "--formats", "DOGE"])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestTrain:
    def test_writes_model_and_history(self, workspace):
        root, data, model, _ = workspace
        assert model.exists()
        history = model.parent / (model.name + ".history.csv")
        assert history.exists()
        lines = history.read_text().strip().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss,val_acc"
        assert len(lines) >= 2

    def test_identical_invocations_reproduce_artifacts(self, tmp_path, workspace):
        _, data, *_ = workspace
        config = write_config(tmp_path / "short.cfg", max_epochs=3,
                              batch_size=16, seed=4, **TINY_MODEL)
        outs = []
        for name in ("a.amcm", "b.amcm"):
            out = tmp_path / name
            rc = main(["train", "--data", str(data), "--config", config,
                       "--out", str(out)])
            assert rc == 0
            history = (out.parent / (out.name + ".history.csv")).read_text()
            outs.append((out.read_bytes(), history))
        assert outs[0] == outs[1]

    def test_missing_dataset_exits_nonzero_naming_path(self, tmp_path, capsys):
        missing = tmp_path / "nope.amcd"
        rc = main(["train", "--data", str(missing),
                   "--out", str(tmp_path / "m.amcm")])
        assert rc == 1
        assert str(missing) in capsys.readouterr().err

    def test_length_mismatch_against_config(self, tmp_path, workspace, capsys):
        _, data, *_ = workspace
        config = write_config(tmp_path / "odd.cfg", sequence_length=64)
        rc = main(["train", "--data", str(data), "--config", config,
                   "--out", str(tmp_path / "m.amcm")])
        assert rc == 1
        assert "length" in capsys.readouterr().err

    def test_acm_ablation_drops_documented_parameter_count(
            self, tmp_path, workspace, capsys):
        # default-width model, one epoch: only the printed counts matter
        _, data, *_ = workspace
        config = write_config(tmp_path / "one.cfg", max_epochs=1,
                              batch_size=16, patience=5)
        counts = {}
        for flag in ((), ("--no-acm",)):
            rc = main(["train", "--data", str(data), "--config", config,
                       "--out", str(tmp_path / "full.amcm")] + list(flag))
            assert rc == 0
            out = capsys.readouterr().out
            counts[flag] = int(re.search(r"model parameters: (\d+)", out).group(1))
            if not flag:
                assert re.search(r"^  acm: 24928$", out, re.M)
        assert counts[()] - counts[("--no-acm",)] == 24928


class TestEval:
    def test_report_files_exist_with_exact_headers(self, workspace):
        *_, report = workspace
        metrics = (report / "metrics.csv").read_text().strip().splitlines()
        assert metrics[0] == "metric,value"
        assert [line.split(",")[0] for line in metrics[1:]] == \
            ["overall_accuracy", "macro_f1", "kappa"]
        confusion = (report / "confusion.csv").read_text().strip().splitlines()
        assert confusion[0] == "BPSK,WBFM"
        assert len(confusion) == 3
        per_snr = (report / "per_snr_accuracy.csv").read_text().strip().splitlines()
        assert per_snr[0] == "snr_db,accuracy"

    def test_overfit_accuracy_above_bar(self, workspace):
        *_, report = workspace
        metrics = dict(
            line.split(",")
            for line in (report / "metrics.csv").read_text().strip().splitlines()[1:]
        )
        assert float(metrics["overall_accuracy"]) > 0.95

    def test_per_snr_rows_match_distinct_snrs(self, tmp_path, workspace):
        _, _, model, _ = workspace
        spread = tmp_path / "spread.amcd"
        rc = main(["generate", "--out", str(spread), "--formats", "BPSK,WBFM",
                   "--snr-min", "10", "--snr-max", "18", "--snr-step", "8",
                   "--per-class", "3", "--seed", "2"])
        assert rc == 0
        rc = main(["eval", "--model", str(model), "--data", str(spread),
                   "--report-dir", str(tmp_path / "rep")])
        assert rc == 0
        lines = (tmp_path / "rep" / "per_snr_accuracy.csv").read_text()
        rows = lines.strip().splitlines()[1:]
        assert [row.split(",")[0] for row in rows] == ["10", "18"]

    def test_class_count_mismatch_fails(self, tmp_path, workspace, capsys):
        _, _, model, _ = workspace
        other = tmp_path / "three.amcd"
        main(["generate", "--out", str(other), "--formats", "BPSK,QPSK,WBFM",
              "--snr-min", "18", "--snr-max", "18", "--per-class", "2"])
        rc = main(["eval", "--model", str(model), "--data", str(other),
                   "--report-dir", str(tmp_path / "rep2")])
        assert rc == 1
        assert "classes" in capsys.readouterr().err


class TestInfer:
    def single_example(self, workspace, tmp_path):
        _, data, *_ = workspace
        one = tmp_path / "one.amcd"
        ds = read_dataset(data)
        write_dataset(ds.subset(np.array([0])), one)
        return one

    def test_amcd_input_prints_distribution(self, tmp_path, workspace, capsys):
        _, _, model, _ = workspace
        one = self.single_example(workspace, tmp_path)
        rc = main(["infer", "--model", str(model), "--input", str(one)])
        assert rc == 0
        out = capsys.readouterr().out
        predicted = re.search(r"predicted: (\S+)", out).group(1)
        probs = dict(re.findall(r"^  (\S+): ([0-9.]+)$", out, re.M))
        assert set(probs) == {"BPSK", "WBFM"}
        assert sum(map(float, probs.values())) == pytest.approx(1.0, abs=1e-6)
        assert predicted == max(probs, key=lambda k: float(probs[k]))

    def test_raw_blob_of_exact_size_accepted(self, tmp_path, workspace, capsys):
        _, data, model, _ = workspace
        ds = read_dataset(data)
        blob = tmp_path / "capture.bin"
        blob.write_bytes(ds.iq[0].astype("<f4").tobytes())
        assert blob.stat().st_size == 1024
        rc = main(["infer", "--model", str(model), "--input", str(blob)])
        assert rc == 0
        assert "predicted:" in capsys.readouterr().out

    def test_raw_blob_of_wrong_size_rejected(self, tmp_path, workspace, capsys):
        _, _, model, _ = workspace
        blob = tmp_path / "short.bin"
        blob.write_bytes(b"\x00" * 1023)
        rc = main(["infer", "--model", str(model), "--input", str(blob)])
        assert rc == 1
        assert "1024" in capsys.readouterr().err

    def test_multi_example_amcd_rejected(self, tmp_path, workspace, capsys):
        _, data, model, _ = workspace
        rc = main(["infer", "--model", str(model), "--input", str(data)])
        assert rc == 1
        assert "exactly 1" in capsys.readouterr().err

    def test_amcd_and_raw_agree_on_same_capture(self, tmp_path, workspace, capsys):
        _, data, model, _ = workspace
        one = self.single_example(workspace, tmp_path)
        main(["infer", "--model", str(model), "--input", str(one)])
        from_amcd = capsys.readouterr().out
        ds = read_dataset(data)
        blob = tmp_path / "same.bin"
        blob.write_bytes(ds.iq[0].astype("<f4").tobytes())
        main(["infer", "--model", str(model), "--input", str(blob)])
        from_raw = capsys.readouterr().out

        def winner_position(text):
            # raw blobs carry no class table, so compare by argmax position
            rows = re.findall(r"^  \S+: ([0-9.]+)$", text, re.M)
            return int(np.argmax([float(p) for p in rows]))

        assert winner_position(from_amcd) == winner_position(from_raw)


class TestRunConfigFile:
    def test_serialize_parse_round_trip(self):
        config = RunConfig(msm_kernel_lengths=(3, 9), use_ffm=False,
                           learning_rate=5e-4, channel_snr_db=None,
                           data_path="x.amcd")
        assert parse_run_config(serialize_run_config(config)) == config

    def test_comments_and_blanks_skipped(self):
        config = parse_run_config("# a comment\n\nheads=1\n  \nseed=9\n")
        assert config.heads == 1 and config.seed == 9

    def test_unknown_key_rejected_with_line_number(self):
        with pytest.raises(ValueError, match="line 2.*unknown config key"):
            parse_run_config("heads=2\nwat=1\n")

    def test_non_assignment_line_rejected(self):
        with pytest.raises(ValueError, match="key=value"):
            parse_run_config("just some words\n")

    def test_bool_values_strict(self):
        assert parse_run_config("use_acm=false\n").use_acm is False
        with pytest.raises(ValueError, match="true or false"):
            parse_run_config("use_acm=yes\n")

    def test_snr_accepts_none_and_numbers(self):
        assert parse_run_config("channel_snr_db=none\n").channel_snr_db is None
        assert parse_run_config("channel_snr_db=-6\n").channel_snr_db == -6.0

    def test_tuple_keys(self):
        config = parse_run_config("backbone_channels=32,64,64\n")
        assert config.backbone_channels == (32, 64, 64)


class TestConsoleScript:
    def test_entry_point_installed(self):
        proc = subprocess.run(["amcnet", "generate", "--help"],
                              capture_output=True, text=True, timeout=60)
        assert proc.returncode == 0
        assert "--per-class" in proc.stdout
