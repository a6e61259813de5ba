import copy
import json
import shutil
import subprocess

import pytest

from edgeprof.cli import main
from edgeprof.formats import read_pcf, read_ecw

TINY = ["--points", "32", "--k", "4"]
QUICK = ["--runs", "2", "--warmup", "0"]


def run_cli(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


TIMING_KEYS = {"mean_ms", "median_ms", "stddev_ms", "p25_ms", "p75_ms",
               "min_ms", "max_ms", "knn_share", "update_share", "other_share",
               "layer_totals_ms", "end_to_end"}


def mask_timing(node):
    if isinstance(node, dict):
        return {k: ("<t>" if k in TIMING_KEYS else mask_timing(v)) for k, v in node.items()}
    if isinstance(node, list):
        return [mask_timing(v) for v in node]
    return node


class TestBenchCommand:
    def test_json_report(self, capsys):
        code, out, _ = run_cli(capsys, ["bench", *TINY, *QUICK])
        assert code == 0
        report = json.loads(out)
        assert report["metadata"]["k"] == 4
        assert report["metadata"]["n_points"] == 32

    def test_csv_report(self, capsys):
        code, out, _ = run_cli(capsys, ["bench", *TINY, *QUICK, "--format", "csv"])
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0].startswith("name,stage,mean_ms")
        assert len(lines) == 1 + 12  # 4 graph + 4 update + concat/linear/pool/head

    def test_identical_invocations_identical_up_to_timing(self, capsys):
        argv = ["bench", *TINY, *QUICK, "--seed", "5"]
        _, out1, _ = run_cli(capsys, argv)
        _, out2, _ = run_cli(capsys, argv)
        a, b = json.loads(out1), json.loads(out2)
        assert mask_timing(a) == mask_timing(b)

    def test_out_file(self, capsys, tmp_path):
        target = tmp_path / "report.json"
        code, out, _ = run_cli(capsys, ["bench", *TINY, *QUICK, "--out", str(target)])
        assert code == 0 and out == ""
        assert json.loads(target.read_text())["metadata"]["k"] == 4


class TestSweepAndCompareCommands:
    def test_sweep_json(self, capsys):
        code, out, _ = run_cli(capsys, ["sweep-k", *TINY, *QUICK, "--k-list", "2,4"])
        assert code == 0
        assert [r["metadata"]["k"] for r in json.loads(out)["reports"]] == [2, 4]

    def test_sweep_csv_prefixed_by_k(self, capsys):
        code, out, _ = run_cli(capsys, ["sweep-k", *TINY, *QUICK, "--k-list", "2,4",
                                        "--format", "csv"])
        assert code == 0
        assert out.splitlines()[0].startswith("k,name,stage")

    def test_compare_default_tails(self, capsys):
        code, out, _ = run_cli(capsys, ["compare", *TINY, *QUICK])
        assert code == 0
        reports = json.loads(out)["reports"]
        counts = [len([x for x in r["layers"] if x["stage"] == "graph_construction"])
                  for r in reports]
        assert counts == [4, 3, 2]

    def test_bad_k_list_is_usage_error(self, capsys):
        code, _, err = run_cli(capsys, ["sweep-k", *TINY, *QUICK, "--k-list", "a,b"])
        assert code == 1
        assert "usage error" in err


class TestMemReportCommand:
    def test_json(self, capsys):
        code, out, _ = run_cli(capsys, ["mem-report", "--points", "1024", "--k", "20"])
        assert code == 0
        d = json.loads(out)
        assert d["knn_bytes_per_inference"] > 0

    def test_csv(self, capsys):
        code, out, _ = run_cli(capsys, ["mem-report", "--points", "256", "--k", "8",
                                        "--format", "csv"])
        assert code == 0
        assert out.splitlines()[0] == "layer,stage,bytes_persistent,bytes_transient,bytes_peak"


class TestInferCommand:
    def test_synthetic_roundtrip(self, capsys, tmp_path):
        cloud_path = tmp_path / "c.pcf"
        weights_path = tmp_path / "w.ecw"
        assert run_cli(capsys, ["gen-cloud", "--points", "32", "--seed", "3",
                                "--out", str(cloud_path)])[0] == 0
        assert run_cli(capsys, ["gen-weights", *TINY, "--seed", "4",
                                "--out", str(weights_path)])[0] == 0
        code, out, _ = run_cli(capsys, ["infer", *TINY, "--input", str(cloud_path),
                                        "--weights", str(weights_path)])
        assert code == 0
        result = json.loads(out)
        assert 0 <= result["class_index"] < 40
        assert len(result["log_probs"]) == 40

    def test_infer_csv(self, capsys, tmp_path):
        code, out, _ = run_cli(capsys, ["infer", *TINY, "--format", "csv"])
        assert code == 0
        assert out.splitlines()[0] == "class,log_prob,predicted"


class TestGenerators:
    def test_gen_cloud_writes_readable_pcf(self, capsys, tmp_path):
        path = tmp_path / "cloud.pcf"
        code, _, _ = run_cli(capsys, ["gen-cloud", "--points", "64", "--seed", "5",
                                      "--label", "9", "--out", str(path)])
        assert code == 0
        cloud = read_pcf(path)
        assert cloud.n == 64 and cloud.label == 9

    def test_gen_weights_writes_readable_ecw(self, capsys, tmp_path):
        path = tmp_path / "w.ecw"
        code, _, _ = run_cli(capsys, ["gen-weights", *TINY, "--seed", "6",
                                      "--out", str(path)])
        assert code == 0
        tensors = read_ecw(path)
        assert "dec1.linear0.weight" in tensors

    def test_gen_deterministic(self, capsys, tmp_path):
        a, b = tmp_path / "a.pcf", tmp_path / "b.pcf"
        run_cli(capsys, ["gen-cloud", "--points", "16", "--seed", "7", "--out", str(a)])
        run_cli(capsys, ["gen-cloud", "--points", "16", "--seed", "7", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()


class TestConfigFile:
    def test_config_document_with_flag_override(self, capsys, tmp_path):
        cfg_path = tmp_path / "model.cfg"
        cfg_path.write_text("k = 8\nnum_points = 64\nstatic_tail = 1\n")
        code, out, _ = run_cli(capsys, ["bench", *QUICK, "--config", str(cfg_path),
                                        "--k", "4"])
        assert code == 0
        md = json.loads(out)["metadata"]
        assert md["k"] == 4  # flag wins
        assert md["config"]["num_points"] == 64
        assert md["static_tail"] == 1


class TestExitCodes:
    def test_usage_error_unknown_flag(self, capsys):
        assert run_cli(capsys, ["bench", "--bogus"])[0] == 1

    def test_usage_error_no_command(self, capsys):
        assert run_cli(capsys, [])[0] == 1

    def test_io_error_missing_input_file(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, ["infer", *TINY, "--input",
                                        str(tmp_path / "absent.pcf")])
        assert code == 2
        assert "i/o error" in err

    def test_format_error_bad_pcf(self, capsys, tmp_path):
        bad = tmp_path / "bad.pcf"
        bad.write_bytes(b"garbage bytes")
        code, _, err = run_cli(capsys, ["infer", *TINY, "--input", str(bad)])
        assert code == 2

    def test_config_error_static_tail(self, capsys):
        code, _, err = run_cli(capsys, ["bench", *TINY, *QUICK, "--static-tail", "7"])
        assert code == 3
        assert "static_tail" in err

    def test_transport_error_unreachable_server(self, capsys):
        code, _, err = run_cli(capsys, ["mem-report", "--points", "64", "--k", "4",
                                        "--server", "http://127.0.0.1:1"])
        assert code == 2


@pytest.mark.skipif(shutil.which("edgeprof") is None,
                    reason="console script not on PATH")
def test_console_script_runs():
    proc = subprocess.run(["edgeprof", "mem-report", "--points", "128", "--k", "8"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["knn_bytes_per_inference"] > 0


def test_cli_against_running_server(capsys, tmp_path):
    """The same subcommands work over the network against a real server."""
    import socket
    import sys
    import time

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    server = subprocess.Popen(
        [sys.executable, "-m", "uvicorn", "edgeprof.service:app",
         "--host", "127.0.0.1", "--port", str(port), "--log-level", "error"],
        stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    try:
        import httpx
        base = f"http://127.0.0.1:{port}"
        for _ in range(100):
            try:
                if httpx.get(base + "/health", timeout=1.0).status_code == 200:
                    break
            except httpx.TransportError:
                time.sleep(0.1)
        else:
            pytest.fail("server did not come up")
        code, out, _ = run_cli(capsys, ["mem-report", "--points", "256", "--k", "10",
                                        "--server", base])
        assert code == 0
        assert json.loads(out)["metadata"]["k"] == 10
        code, out, _ = run_cli(capsys, ["bench", *TINY, *QUICK, "--server", base])
        assert code == 0
        assert json.loads(out)["metadata"]["n_points"] == 32
    finally:
        server.terminate()
        server.wait(timeout=10)
