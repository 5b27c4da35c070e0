"""End-to-end CLI behavior: exit codes, stdout tables, written artifacts."""

from __future__ import annotations

import json

import pytest

from iapas.backends import RecordingBackend, RemoteBackend, ReplayBackend
from iapas.cli import main, resolve_backend
from iapas.errors import ConfigError


def run_cli(capsys, *argv) -> tuple[int, str, str]:
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestResolveBackend:
    def test_replay_spec(self, fixture_dir):
        backend = resolve_backend(f"replay:{fixture_dir}")
        assert isinstance(backend, ReplayBackend)

    def test_http_spec(self):
        backend = resolve_backend("http://127.0.0.1:9")
        assert isinstance(backend, RemoteBackend)

    def test_record_spec(self, tmp_path):
        backend = resolve_backend(f"record:{tmp_path / 'store'}@http://127.0.0.1:9")
        assert isinstance(backend, RecordingBackend)

    def test_record_spec_requires_url(self, tmp_path):
        with pytest.raises(ConfigError, match="record:DIR@URL"):
            resolve_backend(f"record:{tmp_path}")

    def test_unknown_scheme_rejected(self):
        with pytest.raises(ConfigError, match="unrecognized backend spec"):
            resolve_backend("ftp://example.com")

    def test_env_fallback(self, fixture_dir, monkeypatch):
        monkeypatch.setenv("IAPAS_BACKEND", f"replay:{fixture_dir}")
        assert isinstance(resolve_backend(None), ReplayBackend)

    def test_no_backend_anywhere(self, monkeypatch):
        monkeypatch.delenv("IAPAS_BACKEND", raising=False)
        with pytest.raises(ConfigError, match="no backend specified"):
            resolve_backend(None)


class TestExitCodes:
    def test_usage_error_is_one(self, capsys):
        code, _, err = run_cli(capsys, "frobnicate")
        assert code == 1
        assert "usage" in err

    def test_missing_required_flag_is_one(self, capsys):
        code, _, _ = run_cli(capsys, "run", "--dataset", "x")
        assert code == 1

    def test_runtime_error_is_two(self, capsys, tmp_path, fixture_dir):
        code, _, err = run_cli(
            capsys,
            "run",
            "--dataset", str(tmp_path / "missing"),
            "--backend", f"replay:{fixture_dir}",
            "--out", str(tmp_path / "out"),
        )
        assert code == 2
        assert "error:" in err

    def test_fixture_miss_is_two(self, capsys, mini_dataset_dir, tmp_path):
        empty_store = tmp_path / "store"
        empty_store.mkdir()
        code, _, err = run_cli(
            capsys,
            "run",
            "--dataset", str(mini_dataset_dir),
            "--category", "carpet",
            "--backend", f"replay:{empty_store}",
            "--out", str(tmp_path / "out"),
        )
        assert code == 2
        assert "fixture miss" in err


class TestRunCommand:
    def test_single_category(self, capsys, mini_dataset_dir, fixture_dir, tmp_path):
        out = tmp_path / "out"
        code, stdout, _ = run_cli(
            capsys,
            "run",
            "--dataset", str(mini_dataset_dir),
            "--category", "carpet",
            "--backend", f"replay:{fixture_dir}",
            "--out", str(out),
        )
        assert code == 0
        assert stdout.startswith("carpet  AP ")
        assert "F1-max" in stdout
        assert (out / "carpet" / "manifest.json").is_file()
        assert (out / "carpet" / "report.json").is_file()

    def test_all_categories_writes_dataset_report(
        self, capsys, mini_dataset_dir, fixture_dir, tmp_path
    ):
        out = tmp_path / "out"
        code, stdout, _ = run_cli(
            capsys,
            "run",
            "--dataset", str(mini_dataset_dir),
            "--backend", f"replay:{fixture_dir}",
            "--out", str(out),
        )
        assert code == 0
        assert "mean  AP " in stdout
        report = json.loads((out / "report.json").read_text())
        assert report["category"] is None
        assert report["aggregation"] == "mean-over-categories"

    def test_reruns_byte_identical(self, capsys, mini_dataset_dir, fixture_dir, tmp_path):
        argv_for = lambda out: [
            "run",
            "--dataset", str(mini_dataset_dir),
            "--category", "carpet",
            "--backend", f"replay:{fixture_dir}",
            "--out", str(out),
        ]
        assert main(argv_for(tmp_path / "a")) == 0
        assert main(argv_for(tmp_path / "b")) == 0
        capsys.readouterr()
        for name in ["manifest.json", "report.json"]:
            a = (tmp_path / "a" / "carpet" / name).read_bytes()
            b = (tmp_path / "b" / "carpet" / name).read_bytes()
            assert a == b, name

    def test_env_var_backend(self, capsys, mini_dataset_dir, fixture_dir, tmp_path, monkeypatch):
        monkeypatch.setenv("IAPAS_BACKEND", f"replay:{fixture_dir}")
        code, stdout, _ = run_cli(
            capsys,
            "run",
            "--dataset", str(mini_dataset_dir),
            "--category", "carpet",
            "--out", str(tmp_path / "out"),
        )
        assert code == 0
        assert stdout.startswith("carpet  AP ")


class TestPreprocessSegmentSplit:
    def test_two_step_matches_run(self, capsys, mini_dataset_dir, fixture_dir, tmp_path):
        backend_spec = f"replay:{fixture_dir}"
        pre_out = tmp_path / "pre"
        code, stdout, _ = run_cli(
            capsys,
            "preprocess",
            "--dataset", str(mini_dataset_dir),
            "--category", "carpet",
            "--backend", backend_spec,
            "--out", str(pre_out),
        )
        assert code == 0
        assert "prompts:" in stdout
        assert "size_threshold:" in stdout
        preprocess_json = pre_out / "carpet" / "preprocess.json"
        assert preprocess_json.is_file()

        seg_out = tmp_path / "seg"
        code, stdout, _ = run_cli(
            capsys,
            "segment",
            "--dataset", str(mini_dataset_dir),
            "--category", "carpet",
            "--backend", backend_spec,
            "--preprocess", str(preprocess_json),
            "--out", str(seg_out),
        )
        assert code == 0

        run_out = tmp_path / "run"
        run_cli(
            capsys,
            "run",
            "--dataset", str(mini_dataset_dir),
            "--category", "carpet",
            "--backend", backend_spec,
            "--out", str(run_out),
        )
        seg_manifest = (seg_out / "carpet" / "manifest.json").read_bytes()
        run_manifest = (run_out / "carpet" / "manifest.json").read_bytes()
        assert seg_manifest == run_manifest

    def test_bad_preprocess_file(self, capsys, mini_dataset_dir, fixture_dir, tmp_path):
        bad = tmp_path / "pre.json"
        bad.write_text("{not json")
        code, _, err = run_cli(
            capsys,
            "segment",
            "--dataset", str(mini_dataset_dir),
            "--category", "carpet",
            "--backend", f"replay:{fixture_dir}",
            "--preprocess", str(bad),
            "--out", str(tmp_path / "out"),
        )
        assert code == 2
        assert "cannot load preprocess result" in err


class TestEvalCommand:
    @pytest.fixture()
    def predictions(self, capsys, mini_dataset_dir, fixture_dir, tmp_path):
        out = tmp_path / "pred"
        run_cli(
            capsys,
            "run",
            "--dataset", str(mini_dataset_dir),
            "--category", "carpet",
            "--backend", f"replay:{fixture_dir}",
            "--out", str(out),
        )
        return out

    def test_single_category_report(self, capsys, mini_dataset_dir, predictions, tmp_path):
        report_path = tmp_path / "report.json"
        code, stdout, _ = run_cli(
            capsys,
            "eval",
            "--dataset", str(mini_dataset_dir),
            "--category", "carpet",
            "--pred", str(predictions),
            "--report", str(report_path),
        )
        assert code == 0
        assert stdout.startswith("carpet  AP ")
        report = json.loads(report_path.read_text())
        assert set(report) == {
            "dataset", "category", "ap", "f1_max", "pixels", "positives",
            "pooling", "aggregation", "config_digest",
        }
        assert report["category"] == "carpet"
        assert report["pixels"] == 3 * 64 * 64
        assert len(report["config_digest"]) == 64

    def test_eval_matches_run_report(self, capsys, mini_dataset_dir, predictions, tmp_path):
        report_path = tmp_path / "report.json"
        run_cli(
            capsys,
            "eval",
            "--dataset", str(mini_dataset_dir),
            "--category", "carpet",
            "--pred", str(predictions),
            "--report", str(report_path),
        )
        ours = json.loads(report_path.read_text())
        runs = json.loads((predictions / "carpet" / "report.json").read_text())
        assert ours == runs

    def test_all_categories_mean(self, capsys, mini_dataset_dir, predictions, tmp_path):
        report_path = tmp_path / "report.json"
        code, stdout, _ = run_cli(
            capsys,
            "eval",
            "--dataset", str(mini_dataset_dir),
            "--pred", str(predictions),
            "--report", str(report_path),
        )
        assert code == 0
        assert "mean  AP " in stdout
        assert json.loads(report_path.read_text())["category"] is None

    def test_missing_predictions(self, capsys, mini_dataset_dir, tmp_path):
        code, _, err = run_cli(
            capsys,
            "eval",
            "--dataset", str(mini_dataset_dir),
            "--category", "carpet",
            "--pred", str(tmp_path / "nothing"),
            "--report", str(tmp_path / "report.json"),
        )
        assert code == 2
        assert "missing prediction" in err

    def test_percentages_on_stdout_fractions_in_file(
        self, capsys, mini_dataset_dir, predictions, tmp_path
    ):
        report_path = tmp_path / "report.json"
        _, stdout, _ = run_cli(
            capsys,
            "eval",
            "--dataset", str(mini_dataset_dir),
            "--category", "carpet",
            "--pred", str(predictions),
            "--report", str(report_path),
        )
        report = json.loads(report_path.read_text())
        assert 0.0 <= report["ap"] <= 1.0
        shown = float(stdout.split("AP ")[1].split()[0])
        assert shown == pytest.approx(100.0 * report["ap"], abs=0.005)


class TestAblateCommand:
    def test_table_and_json(self, capsys, mini_dataset_dir, fixture_dir, tmp_path):
        out = tmp_path / "out"
        code, stdout, _ = run_cli(
            capsys,
            "ablate",
            "--dataset", str(mini_dataset_dir),
            "--category", "carpet",
            "--backend", f"replay:{fixture_dir}",
            "--out", str(out),
        )
        assert code == 0
        lines = stdout.strip().splitlines()
        assert lines[0].split() == ["Step", "1-1", "Step", "1-3", "Step", "2-2", "AP", "F1-max"]
        assert len(lines) == 7
        flags = [tuple(line.split()[:3]) for line in lines[1:]]
        assert flags == [
            ("X", "X", "X"),
            ("O", "X", "X"),
            ("O", "O", "X"),
            ("X", "O", "X"),
            ("X", "O", "O"),
            ("O", "O", "O"),
        ]
        document = json.loads((out / "ablation.json").read_text())
        assert document["category"] == "carpet"
        assert [row["label"] for row in document["rows"]] == [
            "XXX", "OXX", "OOX", "XOX", "XOO", "OOO",
        ]

    def test_config_file_and_seed_override(
        self, capsys, mini_dataset_dir, fixture_dir, tmp_path
    ):
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({"seed": 111, "iou_threshold": 0.5}))
        code, _, _ = run_cli(
            capsys,
            "run",
            "--dataset", str(mini_dataset_dir),
            "--category", "carpet",
            "--config", str(config_path),
            "--backend", f"replay:{fixture_dir}",
            "--out", str(tmp_path / "out"),
        )
        assert code == 0

    def test_unknown_config_key_is_two(self, capsys, mini_dataset_dir, fixture_dir, tmp_path):
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({"sead": 111}))
        code, _, err = run_cli(
            capsys,
            "run",
            "--dataset", str(mini_dataset_dir),
            "--category", "carpet",
            "--config", str(config_path),
            "--backend", f"replay:{fixture_dir}",
            "--out", str(tmp_path / "out"),
        )
        assert code == 2
        assert "unknown config key" in err


class TestVersionFlag:
    def test_version_exits_zero(self, capsys):
        code, stdout, _ = run_cli(capsys, "--version")
        assert code == 0
        assert stdout.startswith("iapas ")
