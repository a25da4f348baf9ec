import json

import pytest

from ssalab.cli import load_config, main
from ssalab.codec.io import read_traces
from ssalab.codec.layout import parse_layout


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def run(*args):
    return main([str(a) for a in args])


def test_gen_traces_parseable_and_deterministic(tmp_path):
    cfg = write(tmp_path / "g.json", {"domain": "sat-planted", "params": {"n": 10, "alpha": 4.0}, "count": 500})
    assert run("gen-traces", "--config", cfg, "--seed", 42, "--out", tmp_path / "a") == 0
    assert run("gen-traces", "--config", cfg, "--seed", 42, "--out", tmp_path / "b") == 0
    traces = read_traces(tmp_path / "a" / "traces" / "traces.txt")
    assert len(traces) == 500
    for tr in traces:
        assert len(parse_layout(tr.tokens).blocks) == len(tr.blocks)
    for name in ("traces.txt", "traces.layout.json", "vocab.json", "events_00499.jsonl"):
        assert (tmp_path / "a" / "traces" / name).read_bytes() == (tmp_path / "b" / "traces" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["command"] == "gen-traces" and manifest["seeds"] == [42]
    assert "traces/traces.txt" in manifest["outputs"]
    for rel in manifest["outputs"]:
        assert (tmp_path / "a" / rel).exists()


def test_gen_zero_traces(tmp_path):
    cfg = write(tmp_path / "g.json", {"count": 0, "params": {"n": 6}})
    assert run("gen-traces", "--config", cfg, "--out", tmp_path / "z") == 0
    assert json.loads((tmp_path / "z" / "manifest.json").read_text())["outputs"]
    assert read_traces(tmp_path / "z" / "traces" / "traces.txt") == []


@pytest.mark.parametrize("domain,params", [("gc", {"n": 6, "p": 0.4, "k": 3}), ("tree", {"nodes": 10}),
                                           ("peg", {"length": 5})])
def test_gen_other_domains(tmp_path, domain, params):
    cfg = write(tmp_path / "g.json", {"domain": domain, "params": params, "count": 3})
    assert run("gen-traces", "--config", cfg, "--out", tmp_path / "o") == 0
    assert len(read_traces(tmp_path / "o" / "traces" / "traces.txt")) == 3


def _pipeline(tmp_path, name):
    out = tmp_path / name
    g = write(tmp_path / "g.json", {"params": {"n": 6, "alpha": 4.0}, "count": 8})
    t = write(tmp_path / "t.json", {"model": {"layers": 1, "dim": 16, "heads": 2, "ffn": 32, "slots": 2},
                                    "train": {"epochs": 2, "lr": 0.003}})
    e = write(tmp_path / "e.json", {"params": {"n": 6, "alpha": 4.0}, "count": 4, "budget": 120,
                                    "rollouts_per_instance": 3})
    assert run("gen-traces", "--config", g, "--out", out) == 0
    assert run("train", "--config", t, "--out", out) == 0
    assert run("eval", "--config", e, "--out", out) == 0
    assert run("transplant", "--config", e, "--out", out) == 0
    return out


def test_golden_pipeline_reproducible(tmp_path):
    a = _pipeline(tmp_path, "a")
    b = _pipeline(tmp_path, "b")
    for name in ("gen_traces.csv", "train_loss.csv", "eval.csv", "transplant.csv"):
        assert (a / "metrics" / name).read_bytes() == (b / "metrics" / name).read_bytes()
    rows = (a / "metrics" / "eval.csv").read_text().splitlines()
    assert rows[0].startswith("model,protocol,seed,instance_seed")
    assert {r.split(",")[1] for r in rows[1:]} == {"cumulative", "state-rebuilt"}
    assert run("report", "--out", a) == 0
    assert (a / "report.md").exists() and (a / "plots" / "eval.svg").exists()
    svg = (a / "plots" / "eval.svg").read_bytes()
    assert run("report", "--out", a) == 0
    assert (a / "plots" / "eval.svg").read_bytes() == svg


def test_theory_command(tmp_path, capsys):
    cfg = write(tmp_path / "t.json", {"worlds": 20})
    assert run("theory", "--config", cfg, "--out", tmp_path / "th", "--format", "json") == 0
    assert json.loads(capsys.readouterr().out.strip()) == {"all_pass": True}
    text = (tmp_path / "th" / "metrics" / "theory.csv").read_text()
    assert text.splitlines()[0] == "check,lhs,rhs,tolerance,pass"
    assert "False" not in text


def test_corruption_command(tmp_path):
    cfg = write(tmp_path / "c.json", {"n": 10, "count": 5, "grid": [0.0, 0.3], "seeds": [0]})
    assert run("corruption", "--config", cfg, "--out", tmp_path / "c") == 0
    assert run("report", "--out", tmp_path / "c") == 0
    assert (tmp_path / "c" / "plots" / "corruption.svg").exists()


def test_exit_codes(tmp_path, monkeypatch):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run("report", "--out", empty) == 3
    assert run("report", "--out", tmp_path / "missing") == 3
    assert run("eval", "--out", tmp_path / "noeval") == 3
    assert run("train", "--config", tmp_path / "absent.json", "--out", tmp_path / "x") == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("theory", "--config", bad, "--out", tmp_path / "x") == 2
    monkeypatch.setenv("SSALAB_COUNT", "-3")
    assert run("gen-traces", "--out", tmp_path / "y") == 2
    monkeypatch.delenv("SSALAB_COUNT")
    cfg = write(tmp_path / "m.json", {"model": {"colour": 1}})
    run("gen-traces", "--config", write(tmp_path / "g.json", {"params": {"n": 5}, "count": 2}),
        "--out", tmp_path / "r")
    assert run("train", "--config", cfg, "--out", tmp_path / "r") == 2


def test_precedence(tmp_path):
    path = write(tmp_path / "c.json", {"count": 5, "seed": 1, "domain": "gc"})
    cfg = load_config(path, env={"SSALAB_COUNT": "7", "SSALAB_DOMAIN": "tree", "OTHER": "x"})
    assert cfg == {"count": 7, "seed": 1, "domain": "tree"}
    monkey = {"SSALAB_SEED": "3"}
    assert load_config(None, env=monkey) == {"seed": 3}


def test_flag_seed_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("SSALAB_SEED", "5")
    cfg = write(tmp_path / "g.json", {"params": {"n": 5}, "count": 1})
    assert run("gen-traces", "--config", cfg, "--seed", 9, "--out", tmp_path / "s") == 0
    assert json.loads((tmp_path / "s" / "manifest.json").read_text())["seeds"] == [9]
    assert run("gen-traces", "--config", cfg, "--out", tmp_path / "t") == 0
    assert json.loads((tmp_path / "t" / "manifest.json").read_text())["seeds"] == [5]
