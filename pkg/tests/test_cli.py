import json
import os
import socket
import subprocess
import sys
import time

import pytest

from draftwatch.cli import main, parse_rules_file
from draftwatch.eventlog import parse_line


@pytest.fixture(scope="module")
def fig5_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("fig5")
    assert main(["simulate", "fig5", "--seed", "1", "--out", str(out)]) == 0
    return out


def fig5_replay_args(fig5_dir, out_dir, speedup="600"):
    return [
        "replay",
        "--course",
        str(fig5_dir / "course.gpx"),
        "--tracks",
        str(fig5_dir / "rider_1.gpx"),
        str(fig5_dir / "rider_2.gpx"),
        "--speedup",
        speedup,
        "--out",
        str(out_dir),
    ]


class TestSimulate:
    def test_writes_course_and_two_rider_files(self, fig5_dir, capsys):
        names = sorted(p.name for p in fig5_dir.iterdir())
        assert names == ["course.gpx", "rider_1.gpx", "rider_2.gpx"]

    def test_deterministic_bytes(self, fig5_dir, tmp_path):
        assert main(["simulate", "fig5", "--seed", "1", "--out", str(tmp_path)]) == 0
        for name in ("course.gpx", "rider_1.gpx", "rider_2.gpx"):
            assert (tmp_path / name).read_bytes() == (fig5_dir / name).read_bytes()

    def test_summary_reports_course_length(self, tmp_path, capsys):
        assert main(["simulate", "fig5", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "course.gpx" in out
        length = float(out.split("(")[1].split(" m")[0])
        assert abs(length - 3332.0) <= 1.0

    def test_unknown_scenario_fails(self, tmp_path, capsys):
        assert main(["simulate", "fig9", "--out", str(tmp_path)]) == 1
        assert "unknown scenario" in capsys.readouterr().err

    def test_scenario_json_file(self, tmp_path):
        spec = {
            "course_length_m": 400.0,
            "riders": [
                {"rider": 1, "phases": [{"duration_s": 30, "speed_ms": 8.0}]},
            ],
        }
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(spec))
        assert main(["simulate", str(path), "--out", str(tmp_path / "out")]) == 0
        assert (tmp_path / "out" / "rider_1.gpx").exists()


class TestReplay:
    def test_fig5_summary_and_log(self, fig5_dir, tmp_path, capsys):
        assert main(fig5_replay_args(fig5_dir, tmp_path)) == 0
        out = capsys.readouterr().out
        assert "2 drafting violation(s)" in out
        assert "rider 2 behind rider 1" in out
        assert "rider 1 behind rider 2" in out
        lines = (tmp_path / "events.ndjson").read_text().splitlines()
        assert len(lines) == 4
        assert [parse_line(l)["type"] for l in lines] == [
            "opened",
            "closed",
            "opened",
            "closed",
        ]

    def test_speedup_does_not_change_the_log(self, fig5_dir, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(fig5_replay_args(fig5_dir, a, speedup="600")) == 0
        assert main(fig5_replay_args(fig5_dir, b, speedup="4000")) == 0
        assert (a / "events.ndjson").read_bytes() == (b / "events.ndjson").read_bytes()

    def test_far_apart_riders_report_zero(self, tmp_path, capsys):
        spec = {
            "course_length_m": 800.0,
            "riders": [
                {"rider": 1, "phases": [{"duration_s": 80, "speed_ms": 10.0}]},
                {
                    "rider": 2,
                    "start_delay_s": 120.0,
                    "phases": [{"duration_s": 80, "speed_ms": 10.0}],
                },
            ],
        }
        (tmp_path / "spec.json").write_text(json.dumps(spec))
        sim = tmp_path / "sim"
        assert main(["simulate", str(tmp_path / "spec.json"), "--out", str(sim)]) == 0
        assert (
            main(
                [
                    "replay",
                    "--course",
                    str(sim / "course.gpx"),
                    "--tracks",
                    str(sim / "rider_1.gpx"),
                    str(sim / "rider_2.gpx"),
                    "--speedup",
                    "1000",
                    "--out",
                    str(tmp_path / "out"),
                ]
            )
            == 0
        )
        out = capsys.readouterr().out
        assert "0 drafting violation(s)" in out

    def test_bad_course_file_exits_nonzero(self, fig5_dir, tmp_path, capsys):
        bad = tmp_path / "bad.gpx"
        bad.write_text("<gpx><trk>")
        args = fig5_replay_args(fig5_dir, tmp_path)
        args[2] = str(bad)
        assert main(args) == 1
        err = capsys.readouterr().err
        assert "line" in err and "column" in err

    def test_rules_file_changes_detection(self, fig5_dir, tmp_path, capsys):
        rules = tmp_path / "rules.txt"
        rules.write_text("draft_gap = 2.0\ngrace = 200\n")
        args = fig5_replay_args(fig5_dir, tmp_path) + ["--rules", str(rules)]
        assert main(args) == 0
        assert "0 drafting violation(s)" in capsys.readouterr().out


class TestReport:
    def test_fig5_report_with_gap_series(self, fig5_dir, tmp_path, capsys):
        assert main(fig5_replay_args(fig5_dir, tmp_path)) == 0
        capsys.readouterr()
        assert (
            main(
                [
                    "report",
                    "--log",
                    str(tmp_path / "events.ndjson"),
                    "--tracks",
                    str(fig5_dir / "rider_1.gpx"),
                    str(fig5_dir / "rider_2.gpx"),
                    "--out",
                    str(tmp_path),
                ]
            )
            == 0
        )
        out = capsys.readouterr().out
        assert "2 drafting violation(s)" in out
        csv_21 = (tmp_path / "gaps_2_1.csv").read_text().splitlines()
        assert csv_21[0] == "t,gap_m,offender_in_zone"
        in_zone_gaps = [
            float(row.split(",")[1]) for row in csv_21[1:] if row.endswith(",1")
        ]
        assert in_zone_gaps and min(in_zone_gaps) < 7.0

    def test_empty_log(self, tmp_path, capsys):
        log = tmp_path / "events.ndjson"
        log.write_text("")
        assert main(["report", "--log", str(log)]) == 0
        assert "no events" in capsys.readouterr().out

    def test_missing_track_warns_but_succeeds(self, fig5_dir, tmp_path, capsys):
        assert main(fig5_replay_args(fig5_dir, tmp_path)) == 0
        capsys.readouterr()
        rc = main(
            [
                "report",
                "--log",
                str(tmp_path / "events.ndjson"),
                "--tracks",
                str(fig5_dir / "rider_1.gpx"),
                "--out",
                str(tmp_path),
            ]
        )
        assert rc == 0
        assert "warning" in capsys.readouterr().err


class TestRulesFile:
    def test_parse(self, tmp_path):
        path = tmp_path / "rules.txt"
        path.write_text(
            "# race day overrides\n"
            "draft_gap = 10.0\n"
            "grace=30\n"
            "lateral_check = false\n"
            "corridor_width = 20\n"
        )
        cfg, corridor = parse_rules_file(str(path))
        assert cfg.draft_gap == 10.0
        assert cfg.grace == 30.0
        assert cfg.lateral_check is False
        assert cfg.stale_after == 3.0  # untouched default
        assert corridor == 20.0

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "rules.txt"
        path.write_text("zone_depth = 9\n")
        with pytest.raises(ValueError, match="unknown rule"):
            parse_rules_file(str(path))

    def test_bad_syntax(self, tmp_path):
        path = tmp_path / "rules.txt"
        path.write_text("draft_gap 9\n")
        with pytest.raises(ValueError, match="key=value"):
            parse_rules_file(str(path))


class TestServe:
    def test_occupied_port_exits_one(self, capsys):
        blocker = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        blocker.bind(("127.0.0.1", 0))
        blocker.listen(1)
        port = blocker.getsockname()[1]
        try:
            rc = main(["serve", "--bind", f"127.0.0.1:{port}"])
        finally:
            blocker.close()
        assert rc == 1
        assert str(port) in capsys.readouterr().err

    def test_serve_and_create_race_over_http(self, fig5_dir, tmp_path):
        env = dict(os.environ, PYTHONUNBUFFERED="1")
        proc = subprocess.Popen(
            [sys.executable, "-m", "draftwatch.cli", "serve", "--bind", "127.0.0.1:0",
             "--out", str(tmp_path)],
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            text=True,
            env=env,
        )
        try:
            line = proc.stdout.readline()
            assert "listening on" in line, line
            port = int(line.strip().rsplit(":", 1)[1])
            import httpx

            course_text = (fig5_dir / "course.gpx").read_text()
            for _ in range(50):
                try:
                    resp = httpx.post(
                        f"http://127.0.0.1:{port}/races",
                        json={"course": course_text, "name": "over-http"},
                        timeout=5.0,
                    )
                    break
                except httpx.ConnectError:
                    time.sleep(0.1)
            assert resp.status_code == 201
            assert resp.json()["id"]
        finally:
            proc.terminate()
            proc.wait(timeout=10)
