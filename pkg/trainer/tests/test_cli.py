"""Command line behavior and exit codes."""

import json

import pytest

from hsitrain import cli


def run(*argv):
    return cli.main([str(a) for a in argv])


class TestParsing:
    def test_no_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            run()
        assert exc.value.code == 2

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            run("frobnicate")
        assert exc.value.code == 2

    def test_train_requires_data_and_out(self):
        with pytest.raises(SystemExit) as exc:
            run("train", "--out", "w.hswt")
        assert exc.value.code == 2

    def test_bad_model_choice(self):
        with pytest.raises(SystemExit) as exc:
            run("gradcheck", "--model", "rnn")
        assert exc.value.code == 2


class TestTrainCommand:
    def test_end_to_end(self, tiny_ds, tmp_path, capsys):
        out = tmp_path / "w.hswt"
        log = tmp_path / "log.json"
        code = run("train", "--data", tiny_ds, "--out", out, "--log", log,
                   "--epochs", 1, "--batch", 8, "--seed", 3,
                   "--patch", 16, "--overlap", 8, "--base", 2, "--depth", 1)
        assert code == 0
        assert out.exists()
        doc = json.loads(log.read_text())
        assert len(doc["epochs"]) == 1
        stdout = capsys.readouterr().out
        assert "val accuracy" in stdout
        assert str(out) in stdout

    def test_missing_dataset_dir(self, tmp_path):
        assert run("train", "--data", tmp_path / "none",
                   "--out", tmp_path / "w.hswt") == 2

    def test_bad_scheme(self, tiny_ds, tmp_path):
        assert run("train", "--data", tiny_ds, "--out", tmp_path / "w.hswt",
                   "--scheme", "six_class") == 2

    def test_bad_split_length(self, tiny_ds, tmp_path):
        assert run("train", "--data", tiny_ds, "--out", tmp_path / "w.hswt",
                   "--split", "0.5,0.5") == 2

    def test_malformed_hidden(self, tiny_ds, tmp_path):
        assert run("train", "--data", tiny_ds, "--out", tmp_path / "w.hswt",
                   "--model", "mlp", "--hidden", "16,banana") == 2


class TestGradcheckCommand:
    def test_default_passes(self, capsys):
        assert run("gradcheck") == 0
        assert "max relative gradient error" in capsys.readouterr().out

    def test_linear_model(self, capsys):
        assert run("gradcheck", "--model", "linear", "--seed", 0,
                   "--threshold", "1e-6") == 0

    def test_impossible_threshold_fails(self):
        assert run("gradcheck", "--threshold", "1e-18") == 1


class TestWeightsInfoCommand:
    def test_lists_tensors(self, tiny_ds, tmp_path, capsys):
        out = tmp_path / "w.hswt"
        assert run("train", "--data", tiny_ds, "--out", out, "--epochs", 1,
                   "--batch", 8, "--seed", 3, "--patch", 16, "--overlap", 8,
                   "--base", 2, "--depth", 1) == 0
        capsys.readouterr()
        assert run("weights-info", "--weights", out) == 0
        stdout = capsys.readouterr().out
        assert "model = unet_f32" in stdout
        assert "enc1.conv1.w" in stdout
        assert "final.b" in stdout

    def test_missing_file(self, tmp_path):
        assert run("weights-info", "--weights", tmp_path / "none.hswt") == 3

    def test_corrupt_file(self, tmp_path):
        bad = tmp_path / "bad.hswt"
        bad.write_bytes(b"HSWT\x01\x00\x05\x00truncated")
        assert run("weights-info", "--weights", bad) == 3


def test_src_does_not_import_the_consumer():
    """The packages talk through files only; no direct import allowed."""
    import hsitrain
    from pathlib import Path

    src = Path(hsitrain.__file__).parent
    offenders = [p.name for p in src.glob("*.py") if "specdrive" in p.read_text()]
    assert offenders == []
