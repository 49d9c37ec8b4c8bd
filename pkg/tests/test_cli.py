"""CLI tests: exit codes, formats, resolution rounding, determinism, and
artifact writing.  Commands run in-process through main()."""

import json

import pytest

from octavenet.cli import (EXIT_OK, EXIT_USAGE, EXIT_VERIFY, main)


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestAnalyze:
    def test_markdown_default(self, capsys):
        code, out, _ = run_cli(capsys, "analyze", "--model", "yolov8-n")
        assert code == EXIT_OK
        assert "| yolov8-n | 3.2 | 8.8 |" in out

    def test_json_has_schema(self, capsys):
        code, out, _ = run_cli(capsys, "analyze", "--model", "octave-yolo-n",
                               "--format", "json")
        assert code == EXIT_OK
        doc = json.loads(out)
        assert doc["schema"] == 1
        assert doc["reports"][0]["model"] == "octave-yolo-n"

    def test_baseline_deltas(self, capsys):
        code, out, _ = run_cli(capsys, "analyze", "--model", "octave-yolo-n",
                               "--baseline", "yolov8-n")
        assert code == EXIT_OK
        assert "-35.8%" in out and "-43.9%" in out

    def test_resolution_rounds_up_with_warning(self, capsys):
        code, out, err = run_cli(capsys, "analyze", "--model", "yolov8-n",
                                 "--res", "600", "--format", "json")
        assert code == EXIT_OK
        assert "rounded up to 608" in err
        assert json.loads(out)["reports"][0]["resolution"] == 608

    def test_strict_resolution_is_usage_error(self, capsys):
        code, _, err = run_cli(capsys, "analyze", "--model", "yolov8-n",
                               "--res", "600", "--strict-res")
        assert code == EXIT_USAGE
        assert "not divisible by 32" in err

    def test_unknown_model_is_usage_error(self, capsys):
        code, _, err = run_cli(capsys, "analyze", "--model", "alexnet")
        assert code == EXIT_USAGE
        assert "unknown model" in err

    def test_quadratic_resolution_scaling(self, capsys):
        _, out640, _ = run_cli(capsys, "analyze", "--model", "octave-yolo-n",
                               "--no-fssa", "--format", "json")
        _, out320, _ = run_cli(capsys, "analyze", "--model", "octave-yolo-n",
                               "--no-fssa", "--res", "320", "--format", "json")
        f640 = json.loads(out640)["reports"][0]["total_flops"]
        f320 = json.loads(out320)["reports"][0]["total_flops"]
        assert f640 == 4 * f320

    def test_seed_stable_json_bytes(self, capsys):
        args = ("analyze", "--model", "octave-yolo-s", "--format", "json",
                "--seed", "3")
        _, a, _ = run_cli(capsys, *args)
        _, b, _ = run_cli(capsys, *args)
        assert a == b


class TestBuild:
    def test_graph_json(self, capsys):
        code, out, _ = run_cli(capsys, "build", "--model", "octave-yolo-n",
                               "--res", "64")
        assert code == EXIT_OK
        doc = json.loads(out)
        assert doc["name"] == "octave-yolo-n"
        assert any(n["kind"] == "FSSA" for n in doc["nodes"])

    def test_flags_shape_the_graph(self, capsys):
        _, out, _ = run_cli(capsys, "build", "--model", "octave-yolo-n",
                            "--res", "64", "--no-fssa", "--no-dsdown")
        doc = json.loads(out)
        kinds = {n["kind"] for n in doc["nodes"]}
        assert "FSSA" not in kinds and "DSDown" not in kinds and "FSB" in kinds


class TestAblation:
    def test_four_rows_markdown(self, capsys):
        code, out, _ = run_cli(capsys, "ablation", "--scale", "n")
        assert code == EXIT_OK
        for name in ("yolov8-n", "octave-yolo-n[f]", "octave-yolo-n[fd]",
                     "octave-yolo-n"):
            assert f"| {name} |" in out

    def test_json_deltas_monotone_flops(self, capsys):
        _, out, _ = run_cli(capsys, "ablation", "--scale", "n", "--format", "json")
        reports = json.loads(out)["reports"]
        flops = [r["total_flops"] for r in reports]
        assert flops[0] > flops[1] > flops[2] < flops[3]


class TestCompare:
    def test_delta_report(self, capsys):
        code, out, _ = run_cli(capsys, "compare", "--model", "octave-yolo-n",
                               "--baseline", "yolov8-n", "--format", "json")
        assert code == EXIT_OK
        reports = json.loads(out)["reports"]
        assert reports[1]["baseline"] == "yolov8-n"
        assert reports[1]["total_deltas"]["params_pct"] < 0


class TestVerify:
    def test_default_passes(self, capsys):
        code, out, _ = run_cli(capsys, "verify")
        assert code == EXIT_OK
        assert json.loads(out)["passed"] is True

    def test_tolerance_below_fd_noise_fails(self, capsys):
        # 1e-12 is under the central-difference noise floor: the gradient
        # suite must fail, proving the check is live
        code, out, _ = run_cli(capsys, "verify", "--tol", "1e-12",
                               "--suite", "gradients")
        assert code == EXIT_VERIFY
        assert json.loads(out)["passed"] is False

    def test_suite_selection(self, capsys):
        code, out, _ = run_cli(capsys, "verify", "--suite", "shapes",
                               "cfp_equivalence")
        assert code == EXIT_OK
        names = [s["name"] for s in json.loads(out)["suites"]]
        assert names == ["shapes", "cfp_equivalence"]


class TestArtifacts:
    def test_out_writes_file(self, tmp_path, capsys):
        path = tmp_path / "report.json"
        code, out, _ = run_cli(capsys, "analyze", "--model", "yolov8-n",
                               "--format", "json", "--out", str(path))
        assert code == EXIT_OK
        assert out == ""
        assert json.loads(path.read_text())["schema"] == 1

    def test_figures_written(self, tmp_path, capsys):
        figs = tmp_path / "figs"
        code, _, _ = run_cli(capsys, "ablation", "--scale", "n",
                             "--figures", str(figs))
        assert code == EXIT_OK
        pngs = list(figs.glob("*.png"))
        assert pngs and all(p.stat().st_size > 0 for p in pngs)

    def test_analyze_figures(self, tmp_path, capsys):
        figs = tmp_path / "figs"
        code, _, _ = run_cli(capsys, "analyze", "--model", "yolov8-n",
                             "octave-yolo-n", "--figures", str(figs))
        assert code == EXIT_OK
        names = {p.name for p in figs.glob("*.png")}
        assert "analyze_costs.png" in names
        assert any(n.startswith("stages_") for n in names)


class TestBench:
    def test_bench_json_schema(self, capsys):
        code, out, _ = run_cli(capsys, "bench", "--model", "yolov8-n",
                               "--res", "64", "--repeats", "20")
        assert code == EXIT_OK
        doc = json.loads(out)
        assert doc["schema"] == 1
        r = doc["results"][0]
        assert r["mode"] == "serial-reference"
        assert r["median_s"] > 0 and r["repeats"] == 20

    def test_bench_figure(self, tmp_path, capsys):
        figs = tmp_path / "figs"
        code, _, _ = run_cli(capsys, "bench", "--model", "yolov8-n",
                             "--res", "64", "96", "--repeats", "20",
                             "--figures", str(figs))
        assert code == EXIT_OK
        assert (figs / "latency.png").exists()
