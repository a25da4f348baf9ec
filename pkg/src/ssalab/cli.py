"""Command-line experiment runner.

Every command writes into a run directory::

    runs/<name>/manifest.json
    runs/<name>/traces/       token files, layout sidecars, vocabulary, event logs
    runs/<name>/checkpoints/
    runs/<name>/metrics/      CSV with a header row
    runs/<name>/plots/        SVG

Configuration comes from a JSON file (--config), environment variables
prefixed SSALAB_ (top-level keys, JSON-decoded when possible) and flags, in
increasing order of precedence.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidParams, MissingArtifact, SsaLabError

log = logging.getLogger("ssalab")

COMMANDS = ("gen-traces", "train", "eval", "transplant", "probe-bench", "corruption", "theory", "star-sweep",
            "report")
ENV_PREFIX = "SSALAB_"


# configuration

def load_config(path, env=None) -> dict:
    cfg: dict = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} not found")
        try:
            cfg = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {p} is not valid JSON: {e}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a single JSON object")
    env = os.environ if env is None else env
    for key, raw in env.items():
        if key.startswith(ENV_PREFIX) and len(key) > len(ENV_PREFIX):
            name = key[len(ENV_PREFIX):].lower()
            try:
                cfg[name] = json.loads(raw)
            except json.JSONDecodeError:
                cfg[name] = raw
    return cfg


def _pick(cfg: dict, cls, drop=()):
    known = {f.name for f in fields(cls)} - set(drop)
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return {k: (tuple(v) if isinstance(v, list) else v) for k, v in cfg.items()}


# run directory

class RunDir:
    def __init__(self, root, command: str, config: dict, seed: int):
        self.root = Path(root)
        for sub in ("traces", "checkpoints", "metrics", "plots"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        self.command = command
        self.config = config
        self.seed = seed
        self.outputs: list = []
        self.inputs: list = []
        self.started = time.strftime("%Y-%m-%dT%H:%M:%S")

    def path(self, *parts) -> Path:
        p = self.root.joinpath(*parts)
        self.outputs.append(str(p.relative_to(self.root)))
        return p

    def write_csv(self, name: str, rows: list) -> Path:
        p = self.path("metrics", name)
        if not rows:
            p.write_text("", encoding="utf-8")
            return p
        cols = list(rows[0].keys())
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: _fmt(v) for k, v in r.items()})
        return p

    def finish(self) -> Path:
        h = hashlib.sha256(json.dumps({"command": self.command, "config": self.config, "seed": self.seed},
                                      sort_keys=True, default=str).encode())
        for inp in sorted(self.inputs):
            h.update(Path(inp).read_bytes())
        manifest = {"command": self.command, "config": self.config, "seeds": [self.seed],
                    "input_hash": h.hexdigest(), "inputs": sorted(self.inputs), "started": self.started,
                    "finished": time.strftime("%Y-%m-%dT%H:%M:%S"), "outputs": sorted(set(self.outputs))}
        p = self.root / "manifest.json"
        p.write_text(json.dumps(manifest, indent=1, sort_keys=True, default=str), encoding="utf-8")
        return p


def _fmt(v):
    if isinstance(v, float):
        return repr(round(v, 12))
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(v)
    return v


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingArtifact(f"{what} not found at {p}")
    return p


# commands

def cmd_gen_traces(cfg: dict, seed: int, run: RunDir) -> dict:
    from .codec.encode import encode_trace, encode_tree_trace, make_codec
    from .codec.io import write_event_log, write_traces
    from .codec.vocab import Vocabulary, build_vocabulary
    from .domains import Tree, generate_instance, make_adapter
    from .search.core import ReactiveOracle, run_search
    from .search.policies import make_policy

    domain = cfg.get("domain", "sat-planted")
    params = dict(cfg.get("params", {}))
    fmt = cfg.get("format", "simple" if domain in ("tree", "star-tree") else "enriched")
    count = int(cfg.get("count", 10))
    if count < 0:
        raise InvalidParams("count must be >= 0")
    traces, logs, vocab = [], [], Vocabulary()
    for i in range(count):
        inst = generate_instance(domain, params, seed * 1_000_003 + i)
        if isinstance(inst, Tree):
            tr = encode_tree_trace(inst, fmt, cfg.get("order", "dfs"), cfg.get("prefix_order", "stored"))
            traces.append(tr)
            continue
        adapter = make_adapter(inst)
        policy = make_policy(cfg.get("policy", "topk"))
        res, events = run_search(adapter, policy, ReactiveOracle(), None, np.random.default_rng([seed, i]),
                                 max_steps=cfg.get("max_steps", 5000))
        traces.append(encode_trace(events, make_codec(adapter, fmt), termination=res.termination))
        logs.append(events)
    if domain.startswith("sat"):
        n = int(params.get("n", 50))
        m = int(round(float(params.get("alpha", 4.0 if domain == "sat-planted" else 4.26)) * n))
        vocab = build_vocabulary("sat", num_vars=n, num_clauses=m, max_level=n)
    elif domain.startswith("gc"):
        vocab = build_vocabulary("gc", num_nodes=int(params.get("n", 30)), num_colors=int(params.get("k", 4)))
    elif domain in ("tree", "star-tree"):
        pool = params.get("id_pool") or max(int(params.get("nodes", 20)), int(params.get("k", 4)) + 1)
        vocab = build_vocabulary("tree", id_pool=int(pool))
    elif domain == "peg":
        vocab = build_vocabulary("peg", max_len=int(params.get("length", 8)) + 2)
    for tr in traces:
        for t in tr.tokens:
            vocab.add(t)
    write_traces(run.path("traces", "traces.txt"), traces)
    run.outputs.append("traces/traces.layout.json")
    run.path("traces", "vocab.json").write_text(vocab.to_json(), encoding="utf-8")
    for i, events in enumerate(logs):
        write_event_log(run.path("traces", f"events_{i:05d}.jsonl"), events)
    lengths = [len(t.tokens) for t in traces]
    rows = [{"traces": count, "mean_length": float(np.mean(lengths)) if lengths else 0.0,
             "max_length": max(lengths, default=0), "vocab_size": len(vocab)}]
    run.write_csv("gen_traces.csv", rows)
    return rows[0]


def cmd_train(cfg: dict, seed: int, run: RunDir) -> dict:
    from .codec.io import read_traces
    from .codec.vocab import Vocabulary
    from .model import ModelConfig, TrainConfig, example_from_trace, save_checkpoint, train

    tdir = _require(cfg.get("traces", run.root / "traces"), "trace directory")
    tfile = _require(Path(tdir) / "traces.txt", "trace file")
    vfile = _require(Path(tdir) / "vocab.json", "vocabulary")
    run.inputs += [str(tfile), str(vfile)]
    traces = read_traces(tfile)
    if not traces:
        raise MissingArtifact("trace file is empty")
    vocab = Vocabulary.from_json(vfile.read_text(encoding="utf-8"))
    mcfg_d = dict(cfg.get("model", {}))
    longest = max(len(t.tokens) for t in traces)
    mcfg_d.setdefault("max_position", longest + int(mcfg_d.get("slots", 8)) + 1024)
    mcfg = ModelConfig(vocab_size=len(vocab), **_pick(mcfg_d, ModelConfig, drop=("vocab_size",)))
    tcfg_d = dict(cfg.get("train", {}))
    tcfg_d["seed"] = seed
    tcfg = TrainConfig(**_pick(tcfg_d, TrainConfig))
    examples = [example_from_trace(t, vocab, tcfg.loss_mask) for t in traces]
    model, hist = train(mcfg, tcfg, examples)
    save_checkpoint(model, run.path("checkpoints", "model.ckpt"), extra={"vocab": vocab.tokens})
    run.write_csv("train_loss.csv", [{"epoch": i, "loss": l} for i, l in enumerate(hist)])
    return {"epochs": len(hist), "final_loss": hist[-1] if hist else None}


def _load_model(cfg: dict, run: RunDir):
    from .codec.vocab import Vocabulary
    from .model import load_checkpoint

    ck = _require(cfg.get("checkpoint", run.root / "checkpoints" / "model.ckpt"), "checkpoint")
    run.inputs.append(str(ck))
    model, extra = load_checkpoint(ck)
    if "vocab" not in extra:
        raise MissingArtifact("checkpoint has no vocabulary")
    return model, Vocabulary(extra["vocab"])


def _instances(cfg: dict, default_first: int = 1_000_000):
    from .domains import generate_instance
    domain = cfg.get("domain", "sat-planted")
    params = cfg.get("params", {})
    first = int(cfg.get("first_seed", default_first))
    return [generate_instance(domain, params, first + i) for i in range(int(cfg.get("count", 20)))]


def cmd_eval(cfg: dict, seed: int, run: RunDir) -> dict:
    from .inference import ProtocolConfig, evaluate

    model, vocab = _load_model(cfg, run)
    insts = _instances(cfg)
    rows = []
    for proto in cfg.get("protocols", ["cumulative", "state-rebuilt"]):
        pc = ProtocolConfig(protocol=proto, budget=cfg.get("budget", 820), policy=cfg.get("policy", "model"),
                            verifier=cfg.get("verifier", "model"), fmt=cfg.get("format", "enriched"))
        m = evaluate(model, vocab, insts, pc, seed=seed)
        rows.append({"model": Path(cfg.get("checkpoint", "model.ckpt")).stem, "protocol": proto, "seed": seed,
                     "instance_seed": int(cfg.get("first_seed", 1_000_000)), **m.as_row()})
    run.write_csv("eval.csv", rows)
    return {r["protocol"]: r["solve_rate"] for r in rows}


def _rollouts(cfg: dict, seed: int):
    from .diagnostics import collect_rollouts
    return collect_rollouts(_instances(cfg), int(cfg.get("rollouts_per_instance", 4)), seed,
                            cfg.get("format", "enriched"))


def cmd_transplant(cfg: dict, seed: int, run: RunDir) -> dict:
    from .diagnostics import build_transplant_pairs, transplant_metrics

    model, vocab = _load_model(cfg, run)
    pairs = build_transplant_pairs(_rollouts(cfg, seed))
    agree, kl, kls = transplant_metrics(model, vocab, pairs, cfg.get("protocol", "cumulative"))
    row = {"pairs": len(pairs), "agreement_pct": agree, "mean_sym_kl": kl, "max_sym_kl": max(kls, default=0.0)}
    run.write_csv("transplant.csv", [row])
    return row


def cmd_probe_bench(cfg: dict, seed: int, run: RunDir) -> dict:
    from .diagnostics import bank_to_json, build_probe_bank, score_bank, verifier_metrics

    model, vocab = _load_model(cfg, run)
    bank = build_probe_bank(_rollouts(cfg, seed))
    if not bank:
        raise InvalidParams("probe bank is empty; raise count or rollouts_per_instance")
    run.path("metrics", "probe_bank.json").write_text(bank_to_json(bank), encoding="utf-8")
    s_cum, y = score_bank(model, vocab, bank, "cumulative")
    s_sr, _ = score_bank(model, vocab, bank, "state-rebuilt")
    rows = []
    for proto, s, other in (("cumulative", s_cum, s_sr), ("state-rebuilt", s_sr, None)):
        vm = verifier_metrics(s, y, other)
        rows.append({"protocol": proto, "entries": len(bank), "scored": len(y), **vm.as_row(),
                     "scores_equal": bool(np.array_equal(s_cum, s_sr))})
    run.write_csv("probe_bench.csv", rows)
    return rows[0]


def cmd_corruption(cfg: dict, seed: int, run: RunDir) -> dict:
    from .domains import generate_instance
    from .search.policies import make_policy
    from .threshold import run_corruption_sweep, survival_lower_bound

    n = int(cfg.get("n", 20))
    insts = [generate_instance("sat-planted", {"n": n, "alpha": cfg.get("alpha", 4.0)}, i)
             for i in range(int(cfg.get("count", 100)))]
    seeds = tuple(cfg.get("seeds", [seed, seed + 1, seed + 2]))
    policy = make_policy(cfg.get("policy", "exhaustive"))
    rows = []
    kinds = cfg.get("kinds", ["fp", "fn"])
    for kind in kinds:
        grid = cfg.get("grid", [0.0, 0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5])
        sweep, m_bar = run_corruption_sweep(insts, grid, kind, seeds, policy, cfg.get("structure", "iid"))
        for r in sweep:
            rows.append({**r.as_row(), "mean_branch_points": m_bar,
                         "bound": survival_lower_bound(r.rate, m_bar) if kind == "fp" else None})
    run.write_csv("corruption.csv", rows)
    return {"rows": len(rows)}


def cmd_theory(cfg: dict, seed: int, run: RunDir) -> dict:
    from .theory import run_theory_suite

    rows = [{"check": c, "lhs": l, "rhs": r, "tolerance": t, "pass": bool(p)}
            for c, l, r, t, p in run_theory_suite(int(cfg.get("worlds", 100)), seed)]
    run.write_csv("theory.csv", rows)
    return {"all_pass": all(r["pass"] for r in rows)}


def cmd_star_sweep(cfg: dict, seed: int, run: RunDir) -> dict:
    from .experiments.star import StarConfig, run_star_sweep

    sc = StarConfig(**_pick(cfg, StarConfig))
    res = run_star_sweep(sc, seed, log=log.info)
    rows = [{"encoding": fmt, "k": k, "accuracy": acc,
             "predicted": res.predicted.get(k) if fmt == "simple" else None}
            for (fmt, k), acc in sorted(res.accuracy.items())]
    run.write_csv("star_sweep.csv", rows)
    return {"r_hat": res.r_hat}


def cmd_report(cfg: dict, seed: int, run: RunDir) -> dict:
    from .report import render_report

    mdir = run.root / "metrics"
    csvs = sorted(p for p in mdir.glob("*.csv") if p.stat().st_size > 0) if mdir.exists() else []
    if not csvs:
        raise MissingArtifact(f"no metric CSVs under {mdir}")
    run.inputs += [str(p) for p in csvs]
    outputs = render_report(run.root, csvs)
    run.outputs += outputs
    return {"tables": len(csvs), "plots": len([o for o in outputs if o.endswith(".svg")])}


HANDLERS = {
    "gen-traces": cmd_gen_traces, "train": cmd_train, "eval": cmd_eval, "transplant": cmd_transplant,
    "probe-bench": cmd_probe_bench, "corruption": cmd_corruption, "theory": cmd_theory,
    "star-sweep": cmd_star_sweep, "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ssalab", description="Selective state attention experiment runner")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="random seed (default: config 'seed' or 0)")
    p.add_argument("--workers", type=int, help="torch thread count")
    p.add_argument("--out", help="run directory (default runs/<command>)")
    p.add_argument("--format", choices=("csv", "json"), default=None, help="summary format on stdout")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else int(cfg.pop("seed", 0))
        cfg.pop("seed", None)
        workers = args.workers if args.workers is not None else cfg.pop("workers", None)
        cfg.pop("workers", None)
        out = args.out or cfg.pop("out", None) or os.path.join("runs", args.command)
        cfg.pop("out", None)
        fmt = args.format or cfg.pop("format_out", "csv")
        if workers:
            import torch
            torch.set_num_threads(int(workers))
        if args.command == "report" and not Path(out).exists():
            raise MissingArtifact(f"run directory {out} does not exist")
        run = RunDir(out, args.command, cfg, seed)
        summary = HANDLERS[args.command](cfg, seed, run)
        run.finish()
    except (ConfigError, InvalidParams) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except MissingArtifact as e:
        print(f"missing artifact: {e}", file=sys.stderr)
        return 3
    except SsaLabError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - surfaced as an internal error
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    if fmt == "json":
        print(json.dumps(summary, default=str, sort_keys=True))
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(list(summary.keys()))
        w.writerow([_fmt(v) for v in summary.values()])
    return 0


if __name__ == "__main__":
    sys.exit(main())
