from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import pytest

from varroa_scan.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, MASK_SUFFIX, main
from varroa_scan.metrics import parse_report_kv
from varroa_scan.raster import read_mask_png
from varroa_scan.synth import Difficulty, export_suite, generate_suite


def tree_digest(root: Path) -> dict[str, str]:
    """Relative path -> sha256 of bytes, for whole-tree comparisons."""
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


@pytest.fixture(scope="module")
def clean_dataset(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("clean_ds")
    export_suite(generate_suite(3, 300, Difficulty.CLEAN, dims=(300, 150)), root)
    return root


class TestSynthCommand:
    def test_writes_expected_tree(self, tmp_path):
        out = tmp_path / "ds"
        assert main(["synth", "--out", str(out), "--count", "3", "--seed", "5"]) == EXIT_OK
        capture_dirs = list((out / "before").glob("*/*"))
        assert len(capture_dirs) == 3
        for directory in capture_dirs:
            names = {p.name for p in directory.iterdir()}
            assert names == {"white.png", "ir.png", "turquoise.png", "mask.png", "boxes.txt"}
        assert (out / "background" / "ir.png").is_file()

    def test_refuses_nonempty_output_without_force(self, tmp_path):
        out = tmp_path / "ds"
        out.mkdir()
        (out / "stale.txt").write_text("old")
        assert main(["synth", "--out", str(out), "--count", "1"]) == EXIT_DATA
        assert main(["synth", "--out", str(out), "--count", "1", "--force"]) == EXIT_OK

    def test_byte_identical_across_runs(self, tmp_path):
        args = ["synth", "--count", "2", "--seed", "9", "--difficulty", "noisy"]
        first, second = tmp_path / "a", tmp_path / "b"
        assert main(args + ["--out", str(first)]) == EXIT_OK
        assert main(args + ["--out", str(second)]) == EXIT_OK
        assert tree_digest(first) == tree_digest(second)

    def test_usage_errors(self, tmp_path):
        assert main(["synth", "--out", str(tmp_path / "x"), "--count", "-2"]) == EXIT_USAGE
        assert main(["synth"]) == EXIT_USAGE  # argparse: missing required args


class TestDetectCommand:
    def test_end_to_end_on_clean_suite(self, clean_dataset, tmp_path, capsys):
        out = tmp_path / "pred"
        code = main([
            "detect", "--dataset", str(clean_dataset), "--background", "background",
            "--out", str(out),
        ])
        assert code == EXIT_OK
        masks = sorted(out.glob(f"*{MASK_SUFFIX}"))
        assert len(masks) == 3  # one per scene, background excluded
        for mask_path in masks:
            regions_path = out / mask_path.name.replace(MASK_SUFFIX, "_regions.txt")
            assert regions_path.is_file()
            mask = read_mask_png(mask_path)
            listed = [line for line in regions_path.read_text().splitlines()
                      if line and not line.startswith("#")]
            # region listing is consistent with the mask: areas sum to foreground
            assert sum(int(line.split()[1]) for line in listed) == mask.count()
            assert mask.count() > 0  # every clean scene has at least one mite
        captured = capsys.readouterr().out
        assert "3 capture(s) processed, 0 failed" in captured
        assert "ms" in captured  # per-capture wall clock

    def test_missing_background_is_usage_error(self, clean_dataset, tmp_path):
        code = main([
            "detect", "--dataset", str(clean_dataset), "--background", "nope",
            "--out", str(tmp_path / "pred"),
        ])
        assert code == EXIT_USAGE

    def test_empty_dataset_succeeds_with_zero_outputs(self, tmp_path, capsys):
        # a dataset holding only the background capture
        root = tmp_path / "ds"
        export_suite(generate_suite(1, 42, Difficulty.CLEAN, dims=(200, 100)), root)
        for child in (root / "before").rglob("*"):
            pass
        import shutil
        shutil.rmtree(root / "before")
        code = main(["detect", "--dataset", str(root), "--background", "background",
                     "--out", str(tmp_path / "pred")])
        assert code == EXIT_OK
        assert "0 capture(s) processed" in capsys.readouterr().out

    def test_set_overrides_and_unknown_key(self, clean_dataset, tmp_path):
        ok = main([
            "detect", "--dataset", str(clean_dataset), "--background", "background",
            "--out", str(tmp_path / "p1"), "--set", "min_mite_area=0",
        ])
        assert ok == EXIT_OK
        bad = main([
            "detect", "--dataset", str(clean_dataset), "--background", "background",
            "--out", str(tmp_path / "p2"), "--set", "bogus=1",
        ])
        assert bad == EXIT_USAGE
        assert not (tmp_path / "p2").exists()  # rejected before any work

    def test_config_file_and_jobs(self, clean_dataset, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("min_mite_area = 0\n")
        serial = tmp_path / "serial"
        parallel = tmp_path / "parallel"
        assert main(["detect", "--dataset", str(clean_dataset), "--background", "background",
                     "--out", str(serial), "--config", str(cfg)]) == EXIT_OK
        assert main(["detect", "--dataset", str(clean_dataset), "--background", "background",
                     "--out", str(parallel), "--config", str(cfg), "--jobs", "4"]) == EXIT_OK
        a = {p.name: p.read_bytes() for p in serial.glob("*.png")}
        b = {p.name: p.read_bytes() for p in parallel.glob("*.png")}
        assert a == b

    def test_detect_refuses_nonempty_out(self, clean_dataset, tmp_path):
        out = tmp_path / "pred"
        out.mkdir()
        (out / "junk").write_text("x")
        code = main(["detect", "--dataset", str(clean_dataset), "--background", "background",
                     "--out", str(out)])
        assert code == EXIT_DATA


class TestEvalCommand:
    @pytest.fixture()
    def pred_dir(self, clean_dataset, tmp_path) -> Path:
        out = tmp_path / "pred"
        assert main(["detect", "--dataset", str(clean_dataset), "--background", "background",
                     "--out", str(out)]) == EXIT_OK
        return out

    def test_perfect_predictions(self, clean_dataset, pred_dir, tmp_path, capsys):
        report_path = tmp_path / "report.txt"
        code = main(["eval", "--pred", str(pred_dir), "--dataset", str(clean_dataset),
                     "--report", str(report_path)])
        assert code == EXIT_OK
        report = parse_report_kv(report_path.read_text())
        assert report.total.fp == 0 and report.total.fn == 0
        assert report.recall == 1.0
        out = capsys.readouterr().out
        assert "Predicted" in out and "recall = 1.0000 (100%)" in out

    def test_unpaired_predictions_listed_and_excluded(self, clean_dataset, pred_dir,
                                                      tmp_path, capsys):
        stray = pred_dir / f"stranger{MASK_SUFFIX}"
        stray.write_bytes((pred_dir / sorted(pred_dir.glob(f"*{MASK_SUFFIX}"))[0].name).read_bytes())
        report_path = tmp_path / "report.txt"
        code = main(["eval", "--pred", str(pred_dir), "--dataset", str(clean_dataset),
                     "--report", str(report_path)])
        assert code == EXIT_OK
        err = capsys.readouterr().err
        assert "stranger" in err
        report = parse_report_kv(report_path.read_text())
        assert len(report.per_image) == 3

    def test_all_unpaired_is_error(self, clean_dataset, tmp_path):
        lonely = tmp_path / "lonely"
        lonely.mkdir()
        from varroa_scan.raster import BinaryMask, write_mask_png
        write_mask_png(BinaryMask(np.zeros((4, 4), dtype=bool)),
                       lonely / f"ghost{MASK_SUFFIX}")
        code = main(["eval", "--pred", str(lonely), "--dataset", str(clean_dataset),
                     "--report", str(tmp_path / "r.txt")])
        assert code == EXIT_DATA

    def test_existing_report_needs_force(self, clean_dataset, pred_dir, tmp_path):
        report_path = tmp_path / "report.txt"
        report_path.write_text("old")
        assert main(["eval", "--pred", str(pred_dir), "--dataset", str(clean_dataset),
                     "--report", str(report_path)]) == EXIT_DATA
        assert main(["eval", "--pred", str(pred_dir), "--dataset", str(clean_dataset),
                     "--report", str(report_path), "--force"]) == EXIT_OK


class TestMinAreaSweep:
    def test_fp_series_monotone_over_min_area(self, tmp_path):
        # noisy mini-suite: detect unfiltered, then sweep the evaluation filter
        root = tmp_path / "ds"
        export_suite(generate_suite(4, 2600, Difficulty.NOISY, dims=(400, 200)), root)
        pred = tmp_path / "pred"
        assert main(["detect", "--dataset", str(root), "--background", "background",
                     "--out", str(pred), "--set", "min_mite_area=0"]) == EXIT_OK
        fp_series = []
        for min_area in (0, 10, 20, 40):
            report_path = tmp_path / f"report_{min_area}.txt"
            assert main(["eval", "--pred", str(pred), "--dataset", str(root),
                         "--min-area", str(min_area), "--report", str(report_path)]) == EXIT_OK
            fp_series.append(parse_report_kv(report_path.read_text()).total.fp)
        assert all(a >= b for a, b in zip(fp_series, fp_series[1:]))
        assert fp_series[0] > fp_series[-1]


class TestLogging:
    def test_log_level_env_var(self, clean_dataset, tmp_path, monkeypatch):
        # valid and invalid levels must both be harmless; invalid falls back
        for level in ("DEBUG", "NOT_A_LEVEL"):
            monkeypatch.setenv("VARROA_SCAN_LOG", level)
            out = tmp_path / f"pred_{level}"
            assert main(["detect", "--dataset", str(clean_dataset),
                         "--background", "background", "--out", str(out)]) == EXIT_OK


class TestReportCommand:
    def write_report(self, path: Path, entries: list[tuple[str, int, int, int]],
                     min_area: int = 20) -> None:
        lines = ["format = varroa-scan-report-v1", f"min_area = {min_area}"]
        tp = fp = fn = 0
        for cid, t, f, n in entries:
            lines.append(f"image {cid} tp={t} fp={f} fn={n} tn=0")
            tp, fp, fn = tp + t, fp + f, fn + n
        lines.append(f"total tp={tp} fp={fp} fn={fn} tn=0")
        path.write_text("\n".join(lines) + "\n")

    def test_single_report_prints_its_totals(self, tmp_path, capsys):
        path = tmp_path / "r.txt"
        self.write_report(path, [("a", 3, 1, 2)])
        assert main(["report", str(path)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "TP=3" in out and "FP=1" in out and "FN=2" in out and "TN=0" in out

    def test_two_reports_sum_fieldwise(self, tmp_path, capsys):
        r1, r2 = tmp_path / "r1.txt", tmp_path / "r2.txt"
        self.write_report(r1, [("a", 1, 2, 3)])
        self.write_report(r2, [("b", 10, 20, 30)])
        assert main(["report", str(r1), str(r2)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "TP=11" in out and "FP=22" in out and "FN=33" in out

    def test_sharded_equals_whole(self, tmp_path, capsys):
        entries = [(f"img{i}", i, 2 * i, 3 * i) for i in range(6)]
        whole = tmp_path / "whole.txt"
        self.write_report(whole, entries)
        s1, s2 = tmp_path / "s1.txt", tmp_path / "s2.txt"
        self.write_report(s1, entries[:3])
        self.write_report(s2, entries[3:])
        assert main(["report", str(whole)]) == EXIT_OK
        whole_out = capsys.readouterr().out
        assert main(["report", str(s1), str(s2)]) == EXIT_OK
        shard_out = capsys.readouterr().out
        assert whole_out == shard_out

    def test_schema_mismatch_exits_1(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("not a report\n")
        assert main(["report", str(bad)]) == EXIT_DATA

    def test_min_area_disagreement_refused(self, tmp_path):
        r1, r2 = tmp_path / "r1.txt", tmp_path / "r2.txt"
        self.write_report(r1, [("a", 1, 0, 0)], min_area=10)
        self.write_report(r2, [("b", 1, 0, 0)], min_area=20)
        assert main(["report", str(r1), str(r2)]) == EXIT_DATA

    def test_missing_file(self, tmp_path):
        assert main(["report", str(tmp_path / "absent.txt")]) == EXIT_DATA


class TestUsage:
    def test_no_command_is_usage_error(self):
        assert main([]) == EXIT_USAGE

    def test_unknown_command(self):
        assert main(["frobnicate"]) == EXIT_USAGE
