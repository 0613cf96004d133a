import csv
import json

import pytest

from stablespec.cli import main
from util import PAG_TEXT

UNSTABLE_PAG = "vars: A,Y\nA o-o Y\n"


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Benchmark CSVs, a schema file and the running-example graph file."""
    d = tmp_path_factory.mktemp("cli")
    for name, alpha, seed in (("e1.csv", 4.0, 11), ("e2.csv", 8.0, 12)):
        assert main(["simulate", "--alpha", str(alpha), "--n", "20000",
                     "--seed", str(seed), "--out",
                     str(d / name)]) == 0
    (d / "plain.json").write_text('{"columns": {}}')
    (d / "pag.txt").write_text(PAG_TEXT)
    (d / "unstable.txt").write_text(UNSTABLE_PAG)
    return d


def search_argv(d, out, extra=()):
    return ["search", "--graph", str(d / "pag.txt"),
            "--data", str(d / "e1.csv"), "--data", str(d / "e2.csv"),
            "--schema", str(d / "plain.json"),
            "--target", "Y", "--out", str(out), *extra]


class TestSimulate:
    def test_deterministic_bytes(self, workdir, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (a, b):
            assert main(["simulate", "--alpha", "4", "--n", "50",
                         "--seed", "3", "--out", str(path)]) == 0
        assert a.read_bytes() == b.read_bytes()
        assert len(a.read_text().splitlines()) == 51

    def test_alpha_required(self, tmp_path):
        assert main(["simulate", "--n", "50", "--seed", "3",
                     "--out", str(tmp_path / "x.csv")]) == 2

    def test_out_required(self):
        assert main(["simulate", "--alpha", "4", "--n", "50",
                     "--seed", "3"]) == 2


class TestArgErrors:
    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--bogus", "1"])
        assert exc.value.code == 2

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_missing_file(self, tmp_path):
        assert main(["identify", "--graph", str(tmp_path / "nope.txt"),
                     "--mutable", "A", "--target", "Y"]) == 2


class TestLearnPag:
    def test_writes_graph_and_report(self, workdir, tmp_path):
        out = tmp_path / "run"
        assert main(["learn-pag", "--data", str(workdir / "e1.csv"),
                     "--data", str(workdir / "e2.csv"),
                     "--schema", str(workdir / "plain.json"),
                     "--out", str(out)]) == 0
        graph = (out / "graph.txt").read_text()
        assert graph.startswith("vars: E,X1,X2,X3,Y")
        report = json.loads((out / "report.json").read_text())
        assert report["ci_tests"] > 0
        assert set(report["rule_firings"]) >= {"chain", "ancestor"}
        assert (out / "log.txt").exists()


class TestIdentify:
    def test_prints_expression(self, workdir, capsys):
        assert main(["identify", "--graph", str(workdir / "pag.txt"),
                     "--mutable", "X1", "--target", "Y",
                     "--given", "X2,X3"]) == 0
        text = capsys.readouterr().out
        assert "P(Y | X3)" in text and "P(X2 | X1,Y)" in text
        assert '"kind": "quotient"' in text

    def test_not_identifiable_exits_one(self, workdir):
        assert main(["identify", "--graph", str(workdir / "unstable.txt"),
                     "--mutable", "A", "--target", "Y"]) == 1

    def test_writes_expression_file(self, workdir, tmp_path):
        out = tmp_path / "run"
        assert main(["identify", "--graph", str(workdir / "pag.txt"),
                     "--mutable", "X1", "--target", "Y", "--given", "X2,X3",
                     "--out", str(out)]) == 0
        tree = json.loads((out / "expression.json").read_text())
        assert tree["kind"] == "quotient"


class TestCheck:
    def test_invariant(self, workdir):
        assert main(["check", "--graph", str(workdir / "pag.txt"),
                     "--mutable", "X1", "--target", "Y",
                     "--given", "X3"]) == 0

    def test_not_invariant(self, workdir):
        assert main(["check", "--graph", str(workdir / "pag.txt"),
                     "--mutable", "X1", "--target", "Y",
                     "--given", "X2,X3"]) == 1


class TestSearch:
    def test_end_to_end_winner(self, workdir, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(search_argv(workdir, out)) == 0
        assert capsys.readouterr().out.strip() == "interventional[X2,X3]"
        report = json.loads((out / "candidates.json").read_text())
        assert report["winner"] == "interventional[X2,X3]"
        labels = {f"{c['kind']}[{','.join(c['conditioning_set']) or '-'}]"
                  for c in report["candidates"]}
        assert "conditional[X3]" in labels
        assert all(c["validation_loss"] is not None
                   for c in report["candidates"])

    def test_deterministic_outputs(self, workdir, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(search_argv(workdir, a)) == 0
        assert main(search_argv(workdir, b)) == 0
        assert (a / "candidates.json").read_bytes() == \
            (b / "candidates.json").read_bytes()

    def test_mutable_defaults_to_env_children(self, workdir, tmp_path):
        out = tmp_path / "run"
        assert main(search_argv(workdir, out)) == 0
        log = (out / "log.txt").read_text()
        assert "mutable set: ['X1']" in log

    def test_single_env_requires_mutable(self, workdir, tmp_path):
        argv = ["search", "--graph", str(workdir / "pag.txt"),
                "--data", str(workdir / "e1.csv"),
                "--schema", str(workdir / "plain.json"),
                "--target", "Y", "--mode", "single-env",
                "--out", str(tmp_path / "run")]
        assert main(argv) == 2

    def test_no_candidate_exits_one(self, workdir, tmp_path):
        argv = ["search", "--graph", str(workdir / "unstable.txt"),
                "--data", str(workdir / "e1.csv"),
                "--schema", str(workdir / "plain.json"),
                "--target", "Y", "--mutable", "A",
                "--mode", "single-env", "--out", str(tmp_path / "run")]
        assert main(argv) == 1

    def test_budget_exceeded_exits_two(self, workdir, tmp_path):
        out = tmp_path / "run"
        assert main(search_argv(workdir, out,
                                ["--max-observed", "2"])) == 2


class TestConfig:
    def test_config_supplies_flags(self, workdir, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({
            "graph": str(workdir / "pag.txt"),
            "data": [str(workdir / "e1.csv"), str(workdir / "e2.csv")],
            "schema": [str(workdir / "plain.json")],
            "target": "Y",
            "out": str(tmp_path / "run"),
        }))
        assert main(["--config", str(cfg), "search"]) == 0
        assert capsys.readouterr().out.strip() == "interventional[X2,X3]"

    def test_flags_override_config(self, workdir, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"mode": "full"}))
        out = tmp_path / "run"
        argv = ["--config", str(cfg)] + \
            search_argv(workdir, out, ["--mode", "conditional-only"])
        assert main(argv) == 0
        assert capsys.readouterr().out.strip() == "conditional[X3]"

    def test_unknown_config_key(self, workdir, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        assert main(["--config", str(cfg)] +
                    search_argv(workdir, tmp_path / "run")) == 2

    def test_malformed_config(self, workdir, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text("not json")
        assert main(["--config", str(cfg)] +
                    search_argv(workdir, tmp_path / "run")) == 2


class TestSweep:
    def test_metrics_csv_format(self, workdir, tmp_path):
        out = tmp_path / "run"
        assert main(["sweep", "--graph", str(workdir / "pag.txt"),
                     "--n-train", "5000", "--n-test", "2000",
                     "--grid-points", "3", "--out", str(out)]) == 0
        with open(out / "metrics.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["alpha", "model", "mse"]
        assert len(rows) == 1 + 3 * 3  # three models, three grid points
        alpha, model, mse = rows[1]
        assert alpha == "-5.000000"
        assert model == "interventional[X2,X3]"
        assert len(mse.split(".")[1]) == 6

    def test_graph_required(self, tmp_path):
        assert main(["sweep", "--n-train", "100", "--n-test", "100",
                     "--grid-points", "2",
                     "--out", str(tmp_path / "run")]) == 2
