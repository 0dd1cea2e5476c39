import json

import pytest

from quadricfit import graphio
from quadricfit.cli import main
from quadricfit.sim import synthetic_graph


@pytest.fixture
def graph_path(tmp_path):
    path = tmp_path / "graph.json"
    graphio.save_graph(synthetic_graph(seed=4, noise="L"), path)
    return path


SMALL_CONFIG = {
    "master_seed": 7,
    "noise_levels": ["L"],
    "arcs": [60.0],
    "trials_per_cell": 2,
    "parameterizations": ["rts", "spd"],
    "models": ["semi"],
}


def write_config(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(SMALL_CONFIG))
    return cfg


def test_validate_ok(graph_path, capsys):
    assert main(["validate", "--graph", str(graph_path)]) == 0
    assert "ok" in capsys.readouterr().out


def test_validate_dangling_id(tmp_path, graph_path, capsys):
    graph = json.loads(graph_path.read_text())
    graph["detections"][0]["frame"] = "ghost"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(graph))
    assert main(["validate", "--graph", str(bad)]) == 1
    assert "ghost" in capsys.readouterr().err


def test_solve_writes_outputs(tmp_path, graph_path, capsys):
    out = tmp_path / "out"
    code = main(["solve", "--graph", str(graph_path), "--param", "spd",
                 "--model", "semi", "--out", str(out)])
    assert code == 0
    solved = json.loads((out / "solved.json").read_text())
    assert solved["estimates"][0]["param"] == "spd"
    report = json.loads((out / "report.json").read_text())
    kinds = set(report["cost_breakdown"])
    assert kinds == {"box-semi", "orientation", "shape", "size", "support"}
    assert "against_truth" in report
    assert report["against_truth"]["obj"]["iou"] > 0.5


def test_solve_size_form_flag(tmp_path, graph_path):
    out = tmp_path / "out2"
    code = main(["solve", "--graph", str(graph_path), "--param", "rts",
                 "--size-form", "paper", "--out", str(out)])
    assert code == 0
    assert json.loads((out / "report.json").read_text())["size_form"] == "paper"


def test_simulate_and_eval(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg), "--jobs", "1", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "success F+S+O" in text
    result = out / "result.json"
    assert result.exists()
    assert (out / "plot_traces.py").exists()
    assert list(out.glob("trace_*.csv"))

    assert main(["eval", "--result", str(result), "--format", "table"]) == 0
    assert "success F+S+O" in capsys.readouterr().out

    assert main(["eval", "--result", str(result), "--format", "json"]) == 0
    summaries = json.loads(capsys.readouterr().out)
    assert main(["eval", "--result", str(result), "--format", "csv"]) == 0
    csv_lines = capsys.readouterr().out.strip().splitlines()
    assert len(csv_lines) == 1 + len(summaries)  # header + one row per cell
    header = csv_lines[0].split(",")
    row = dict(zip(header, csv_lines[1].split(",")))
    assert float(row["mean_iou"]) == summaries[0]["mean_iou"]


def test_simulate_determinism_across_jobs(tmp_path):
    cfg = write_config(tmp_path)
    docs = []
    for jobs, name in ((1, "a"), (4, "b")):
        out = tmp_path / name
        assert main(["simulate", "--config", str(cfg), "--seed", "7",
                     "--jobs", str(jobs), "--out", str(out)]) == 0
        docs.append(json.loads((out / "result.json").read_text()))
    for doc in docs:
        doc.pop("created")
        doc.pop("timing")
    assert docs[0] == docs[1]


def test_cells_filter(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "filtered"
    assert main(["simulate", "--config", str(cfg), "--cells", "param=rts",
                 "--jobs", "1", "--out", str(out)]) == 0
    doc = json.loads((out / "result.json").read_text())
    assert {r["parameterization"] for r in doc["records"]} == {"rts"}


def test_usage_errors_exit_1(tmp_path):
    assert main(["simulate", "--cells", "nonsense"]) == 1
    assert main(["simulate", "--cells", "bogus=1"]) == 1
    assert main(["nope"]) == 1
    assert main(["solve", "--graph", "/does/not/exist.json", "--param", "rts"]) == 1


def test_eval_detects_tampered_summaries(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "sim2"
    assert main(["simulate", "--config", str(cfg), "--jobs", "1", "--out", str(out)]) == 0
    doc = json.loads((out / "result.json").read_text())
    doc["summaries"][0]["mean_iou"] = 0.123
    (out / "result.json").write_text(json.dumps(doc))
    assert main(["eval", "--result", str(out / "result.json")]) == 2
    assert "do not match" in capsys.readouterr().err


def test_env_var_out_dir(tmp_path, graph_path, monkeypatch):
    env_out = tmp_path / "envout"
    monkeypatch.setenv("QUADRICFIT_OUT", str(env_out))
    assert main(["solve", "--graph", str(graph_path), "--param", "rts"]) == 0
    assert (env_out / "solved.json").exists()
