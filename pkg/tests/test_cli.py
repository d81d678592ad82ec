import csv
import io
import json

import pytest

from v2vtrack.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, build_parser, main
from v2vtrack.scenario import build_unprotected_left_scenario, dump_scenario
from v2vtrack.v2v import read_capture


@pytest.fixture(scope="module")
def spoof_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("spoof")
    assert main(["run", "--builtin", "unprotected-left", "--seed", "42", "--out", str(out),
                 "--spoof", "ghost-vehicle", "--capture"]) == EXIT_OK
    return out


def test_outputs_written(spoof_run):
    names = {p.name for p in spoof_run.iterdir()}
    assert {"metrics.csv", "summary.txt", "tracks.jsonl", "bsm.capture",
            "gospa_total.png", "gospa_components.png", "scene.png"} <= names
    assert (spoof_run / "scene.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_summary_reports_zero_spoofed_priority_tracks(spoof_run):
    text = (spoof_run / "summary.txt").read_text()
    assert "spoofed temp_ids: 0xDEAD0001" in text
    assert "priority tracks from spoofed temp_ids: 0" in text


def test_metrics_csv_shape(spoof_run):
    rows = list(csv.DictReader(io.StringIO((spoof_run / "metrics.csv").read_text())))
    assert len(rows) == 301 * 3
    assert {r["system"] for r in rows} == {"local", "v2v", "priority"}


def test_tracks_jsonl(spoof_run):
    lines = (spoof_run / "tracks.jsonl").read_text().splitlines()
    assert len(lines) == 301
    rec = json.loads(lines[100])
    assert set(rec) == {"frame", "t", "truth", "local", "v2v", "priority"}
    assert rec["frame"] == 100 and len(rec["truth"]) == 5


def test_capture_contains_spoof(spoof_run):
    with open(spoof_run / "bsm.capture", "rb") as fh:
        records = read_capture(fh)
    assert {m.temp_id for _, m in records} >= {0xDEAD0001}
    assert max(tick for tick, _ in records) == 300


def test_same_seed_byte_identical(spoof_run, tmp_path):
    assert main(["run", "--builtin", "unprotected-left", "--seed", "42", "--out", str(tmp_path),
                 "--spoof", "ghost-vehicle", "--no-plots"]) == EXIT_OK
    assert (tmp_path / "metrics.csv").read_bytes() == (spoof_run / "metrics.csv").read_bytes()
    assert (tmp_path / "tracks.jsonl").read_bytes() == (spoof_run / "tracks.jsonl").read_bytes()
    assert not (tmp_path / "scene.png").exists()


def test_full_drop_degrades_to_local(tmp_path):
    assert main(["run", "--builtin", "unprotected-left", "--out", str(tmp_path), "--channel-drop", "1.0",
                 "--no-plots"]) == EXIT_OK
    rows = list(csv.DictReader(io.StringIO((tmp_path / "metrics.csv").read_text())))
    by = {}
    for r in rows:
        by.setdefault(r["system"], []).append({k: float(v) for k, v in r.items() if k not in ("frame", "system")})
    for comp in ("total", "localization", "missed", "false", "switching"):
        pm = sum(r[comp] for r in by["priority"]) / len(by["priority"])
        lm = sum(r[comp] for r in by["local"]) / len(by["local"])
        assert pm == pytest.approx(lm, abs=1e-9)


def test_scenario_file_and_gospa_flags(tmp_path):
    cfg = build_unprotected_left_scenario()
    path = tmp_path / "s.json"
    path.write_text(dump_scenario(cfg))
    out = tmp_path / "o"
    assert main(["run", "--scenario", str(path), "--out", str(out), "--gospa-c", "10", "--gospa-p", "1",
                 "--no-plots"]) == EXIT_OK
    assert "GOSPA p=1 c=10" in (out / "summary.txt").read_text()


def test_missing_scenario_file(tmp_path):
    assert main(["run", "--scenario", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == EXIT_IO


def test_bad_scenario_json(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    assert main(["run", "--scenario", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG


@pytest.mark.parametrize("flags", [["--channel-drop", "1.5"], ["--channel-latency", "-2"], ["--gospa-c", "0"]])
def test_bad_overrides(tmp_path, flags):
    assert main(["run", "--builtin", "unprotected-left", "--out", str(tmp_path)] + flags) == EXIT_CONFIG


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--builtin", "unprotected-left", "--out", str(blocker / "sub"), "--no-plots"]) == EXIT_IO


@pytest.mark.parametrize("argv", [["run"], ["run", "--builtin", "unprotected-left", "--scenario", "x.json"],
                                  ["run", "--builtin", "nope"], ["run", "--builtin", "unprotected-left",
                                                                 "--spoof", "nope"]])
def test_argument_errors(argv):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args(argv)
    assert exc.value.code == 2
