"""Exit codes and argument handling of the export command line."""

import json

import torch

from clozecast_export.cli import main
from conftest import SEED, save_checkpoint, tiny_config
from transformers import BertModel


class TestExportCommand:
    def test_happy_path_writes_bundle_and_reports(self, checkpoint, tmp_path, capsys):
        out = tmp_path / "bundle"
        code = main(["export", "--model", str(checkpoint), "--out", str(out)])
        stdout = capsys.readouterr().out
        assert code == 0
        for name in ("model.onnx", "vocab.txt", "meta.json", "export_manifest.json"):
            assert (out / name).is_file()
        assert f"bundle written to {out}" in stdout
        assert "vocabulary: 45 tokens (mask=4, pad=0, unk=1)" in stdout
        manifest = json.loads((out / "export_manifest.json").read_text())
        assert manifest["graph_sha256"] in stdout

    def test_max_len_option_reaches_meta(self, checkpoint, tmp_path, capsys):
        out = tmp_path / "bundle"
        code = main(
            ["export", "--model", str(checkpoint), "--out", str(out),
             "--max-len", "16"]
        )
        assert code == 0
        assert "max_len: 16" in capsys.readouterr().out
        assert json.loads((out / "meta.json").read_text())["max_len"] == 16

    def test_missing_required_option_exits_one(self, capsys):
        code = main(["export", "--out", "somewhere"])
        assert code == 1
        assert "--model" in capsys.readouterr().err

    def test_unknown_command_exits_one(self, capsys):
        code = main(["compress"])
        assert code == 1
        assert "No such command" in capsys.readouterr().err

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "export" in capsys.readouterr().out

    def test_zero_max_len_is_a_usage_error(self, checkpoint, tmp_path, capsys):
        code = main(
            ["export", "--model", str(checkpoint), "--out", str(tmp_path / "b"),
             "--max-len", "0"]
        )
        assert code == 1
        assert "max-len" in capsys.readouterr().err


class TestErrorMapping:
    def test_headless_checkpoint_reports_error_kind(self, tmp_path, capsys):
        directory = tmp_path / "headless"
        torch.manual_seed(SEED)
        save_checkpoint(directory, BertModel(tiny_config()))
        code = main(["export", "--model", str(directory), "--out", str(tmp_path / "out")])
        err = capsys.readouterr().err
        assert code == 1
        assert "error: NoMLMHead:" in err
        assert not (tmp_path / "out").exists()

    def test_unreadable_checkpoint_reports_error(self, tmp_path, capsys):
        code = main(
            ["export", "--model", str(tmp_path / "missing"),
             "--out", str(tmp_path / "out")]
        )
        assert code == 1
        assert "error: ExportError:" in capsys.readouterr().err
