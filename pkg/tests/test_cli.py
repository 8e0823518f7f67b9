import json
import shutil
import subprocess
import sys

import pytest

from wmm import corpus
from wmm.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestCheck:
    def test_sb_tso_one_per_cycle(self, capsys):
        code, out, _ = run(capsys, "--model", "tso", "--pairs", "one-per-cycle", "check", corpus.path("sb"))
        assert code == 1
        assert out.startswith("violated") and "pairs=(a,b)" in out

    def test_sb_sc(self, capsys):
        code, out, _ = run(capsys, "--model", "sc", "check", corpus.path("sb"))
        assert code == 0 and out.startswith("safe")

    def test_corpus_name_instead_of_path(self, capsys):
        assert run(capsys, "--model", "power", "check", "iriw+dps")[0] == 1

    def test_json_and_dumps(self, capsys, tmp_path):
        j, d, g = tmp_path / "v.json", tmp_path / "t.wmm", tmp_path / "g.dot"
        code, _, _ = run(capsys, "--model", "tso", "--json", str(j), "--dump", str(d),
                         "--dump-dot", str(g), "check", "sb")
        rep = json.loads(j.read_text())
        assert code == 1 and rep["status"] == "violated" and rep["model"] == "TSO"
        assert ["po", "a", "b"] in rep["pairs"]
        assert "buff_push" in d.read_text()
        assert g.read_text().startswith("digraph")

    def test_bound_exceeded_exit(self, capsys):
        assert run(capsys, "--model", "power", "--max-steps", "5", "check", "iriw")[0] == 2


class TestGraphTransform:
    def test_pgsql_graph_lines(self, capsys, tmp_path):
        j = tmp_path / "c.json"
        code, out, err = run(capsys, "--model", "power", "--json", str(j), "graph", "pgsql")
        assert code == 0 and out.startswith("digraph")
        lines = [sorted(map(tuple, c["lines"])) for c in json.loads(j.read_text())["cycles"]]
        assert sorted([("worker_0", 12), ("worker_0", 15), ("worker_1", 12), ("worker_1", 15)]) in lines
        assert sorted([("worker_0", 15), ("worker_0", 16), ("worker_1", 7), ("worker_1", 12)]) in lines
        assert "worker_0:15" in out and "worker_1:7" in out
        assert "cycle" in err

    def test_transform_to_stdout(self, capsys):
        code, out, _ = run(capsys, "--model", "power", "transform", "iriw+dps")
        assert code == 0 and "buff_take(r1, x, 2);" in out

    @pytest.mark.parametrize("name", ["sb", "mp", "lb", "iriw+dps", "mp+lwfences"])
    def test_composable(self, capsys, tmp_path, name):
        # graph, then transform, then check the dumped program under SC
        for model in ("tso", "power"):
            for pairs in ("all", "one-per-cycle"):
                g, d = tmp_path / "g.json", tmp_path / "t.wmm"
                run(capsys, "--model", model, "--pairs", pairs, "--json", str(g), "graph", name)
                run(capsys, "--model", model, "--pairs", pairs, "--dump", str(d), "transform", name)
                staged, _, _ = run(capsys, "--model", "sc", "check", str(d))
                j = tmp_path / "v.json"
                direct, _, _ = run(capsys, "--model", model, "--pairs", pairs, "--json", str(j), "check", name)
                assert staged == direct
                assert json.loads(g.read_text())["selected"] == json.loads(j.read_text())["pairs"]


class TestOracleCheck:
    def test_agree(self, capsys):
        code, out, _ = run(capsys, "oracle-check", "iriw+dps")
        assert code == 0 and out.startswith("agree")
        assert "POWER" in out

    def test_refuses_loops(self, capsys):
        code, _, err = run(capsys, "oracle-check", "pgsql")
        assert code == 3 and "oracle-check" in err


class TestErrors:
    def test_bad_flag(self, capsys):
        with pytest.raises(SystemExit) as ei:
            main(["--model", "alpha", "check", "sb"])
        assert ei.value.code == 3

    def test_missing_file(self, capsys):
        code, _, err = run(capsys, "check", "/nonexistent.wmm")
        assert code == 3 and "cannot read" in err

    def test_missing_input(self, capsys):
        assert run(capsys, "check")[0] == 3

    def test_parse_error_has_file_and_line(self, capsys, tmp_path):
        bad = tmp_path / "bad.wmm"
        bad.write_text("shared x;\nthread t {\n  x := ;\n}\n")
        code, _, err = run(capsys, "check", str(bad))
        assert code == 3 and f"{bad}:3:" in err

    def test_non_positive_bounds(self, capsys):
        assert run(capsys, "--unwind", "0", "check", "sb")[0] == 3


class TestEntryPoint:
    def test_console_script(self):
        exe = shutil.which("wmm")
        cmd = [exe] if exe else [sys.executable, "-m", "wmm.cli"]
        r = subprocess.run(cmd + ["--model", "tso", "check", corpus.path("sb")], capture_output=True, text=True)
        assert r.returncode == 1 and "violated" in r.stdout
