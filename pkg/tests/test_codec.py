import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssalab.codec import (GC_FORMATS, SAT_FORMATS, TREE_FORMATS, Vocabulary, apply_history_reduction, assemble,
                          build_vocabulary, encode_trace, encode_tree_trace, make_codec, parse_layout,
                          state_rebuild, trace_from_tokens)
from ssalab.codec.io import read_event_log, read_traces, write_event_log, write_traces
from ssalab.codec.layout import split_trace
from ssalab.domains import ColoringAdapter, PegAdapter, SatAdapter, cycle_graph, generate_instance
from ssalab.errors import IndexOutOfRange, InvalidParams, MalformedTrace, UnknownToken
from ssalab.search.core import ReactiveOracle, run_search
from ssalab.search.policies import TopKSampler, exhaustive_policy

from conftest import sat_episode


def test_example1_text(example1_events):
    adapter, events = example1_events
    tr = encode_trace(events, make_codec(adapter))
    assert " ".join(tr.tokens).startswith("[BOS] [CLAUSES] C0 : +v0 +v1 +v2")
    assert len(parse_layout(tr.tokens).blocks) == 3
    assert tr.tokens[-6:] == ["CONFLICT", "C2", "BJ", "L1", "SOLVED", "[EOS]"]


def test_conflict_block_ends_with_backjump():
    for seed in range(50):
        adapter, events = sat_episode(n=10, seed=seed)
        tr = encode_trace(events, make_codec(adapter))
        for t, ev in enumerate(events, 1):
            block = tr.block_tokens(t)
            if ev.action.kind == "backtrack" and not ev.outcome.solved and ev.outcome.kind == "conflict":
                assert block[-4] == "CONFLICT" and block[-2] == "BJ"
                assert block[-1] == f"L{ev.outcome.target - 1}"


def test_gc_cycle_trace():
    a = ColoringAdapter(cycle_graph(4))
    _, events = run_search(a, exhaustive_policy, ReactiveOracle())
    tr = encode_trace(events, make_codec(a))
    b2 = tr.block_tokens(2)
    assert b2[:2] == ["STATE", "DS3"]
    assert " ".join(b2).endswith("N1 M0111 C2 OK")
    assert tr.tokens[-3:] == ["OK", "SOLVED", "[EOS]"]


def test_parse_layout_cases():
    lay = parse_layout(["[BOS]", "[CLAUSES]", "[SEARCH]"])
    assert lay.prefix == (0, 3) and lay.blocks == []
    prefix = ["[BOS]", "[SEARCH]"]
    b1 = ["STATE", "v0", "U", "SEP", "v0", "T", "OK"]
    b2 = ["STATE", "v0", "T", "SEP", "CONFLICT"]
    lay = parse_layout(prefix + b1 + b2)
    assert lay.blocks == [(2, 9), (9, 14)]
    with pytest.raises(MalformedTrace):
        parse_layout(["[BOS]", "STATE"])
    with pytest.raises(MalformedTrace):
        parse_layout(["[BOS]", "[SEARCH]", "v0", "STATE"])


def test_state_rebuild(example1_events):
    adapter, events = example1_events
    tr = encode_trace(events, make_codec(adapter))
    sr = state_rebuild(tr, 2)
    assert sr.tokens[: tr.prefix_len] == tr.prefix
    assert sr.tokens[tr.prefix_len:tr.prefix_len + 7] == ["STATE", "v0", "T", "v1", "F", "v2", "U"]
    assert sr.tokens[-1] == "[/PROP]"
    one = state_rebuild(tr, 1)
    assert one.tokens == tr.tokens[: tr.state_end(1)]
    with pytest.raises(IndexOutOfRange):
        state_rebuild(tr, 4)


def test_state_rebuild_length_independent_of_t():
    adapter, events = sat_episode(n=10, seed=1)
    tr = encode_trace(events, make_codec(adapter))
    lens = {len(state_rebuild(tr, t).tokens) for t in range(1, len(tr.blocks) + 1)}
    # enriched SAT states differ only in the PROP clause width (always 3 literals)
    assert len(lens) <= 2


def test_history_reductions():
    adapter, events = sat_episode(n=10, seed=2)
    tr = encode_trace(events, make_codec(adapter))
    assert len(tr.blocks) >= 5
    t = 5
    null = apply_history_reduction(tr, "null", t=t)
    assert null.tokens == tr.prefix + tr.block_tokens(t)
    win = apply_history_reduction(tr, "window", t=t, k=3)
    assert win.tokens == tr.prefix + tr.block_tokens(2) + tr.block_tokens(3) + tr.block_tokens(4) + tr.block_tokens(5)
    d0 = apply_history_reduction(tr, "dropout", np.random.default_rng(0), t=len(tr.blocks), p=0.0)
    assert d0.tokens == tr.tokens
    with pytest.raises(InvalidParams):
        apply_history_reduction(tr, "dropout", p=1.5)
    with pytest.raises(InvalidParams):
        apply_history_reduction(tr, "window", k=-1)


def test_vocabulary_round_trip_and_unknown():
    v = build_vocabulary("sat", num_vars=5, num_clauses=20)
    assert Vocabulary.from_json(v.to_json()) == v
    assert v.decode(v.encode(["[BOS]", "v3", "C19"])) == ["[BOS]", "v3", "C19"]
    assert len(set(v.tokens)) == len(v)
    with pytest.raises(UnknownToken):
        v.encode(["v5"])
    adapter, events = sat_episode(n=8, seed=0)
    small = build_vocabulary("sat", num_vars=4, num_clauses=4)
    with pytest.raises(UnknownToken):
        encode_trace(events, make_codec(adapter), vocab=small)


def test_trace_files(tmp_path):
    trs = []
    for seed in range(3):
        adapter, events = sat_episode(n=6, seed=seed)
        trs.append(encode_trace(events, make_codec(adapter)))
        write_event_log(tmp_path / f"ev{seed}.jsonl", events)
        back = read_event_log(tmp_path / f"ev{seed}.jsonl")
        assert [e.action for e in back] == [e.action for e in events]
        assert [e.state_before.assignment for e in back] == [e.state_before.assignment for e in events]
    write_traces(tmp_path / "t.txt", trs)
    back = read_traces(tmp_path / "t.txt")
    assert [b.tokens for b in back] == [t.tokens for t in trs]
    assert [b.blocks for b in back] == [t.blocks for t in trs]
    side = json.loads((tmp_path / "t.layout.json").read_text())
    assert len(side) == 3


def _episodes(seed):
    rng = np.random.default_rng(seed)
    out = []
    cnf = generate_instance("sat-planted", {"n": 8, "alpha": 4.0}, seed)
    a = SatAdapter(cnf)
    _, ev = run_search(a, TopKSampler(), ReactiveOracle(), rng=rng)
    out += [(a, ev, f) for f in SAT_FORMATS]
    g = generate_instance("gc", {"n": 7, "p": 0.4, "k": 3}, seed)
    a = ColoringAdapter(g)
    _, ev = run_search(a, TopKSampler(), ReactiveOracle(), rng=rng)
    out += [(a, ev, f) for f in GC_FORMATS]
    a = PegAdapter(generate_instance("peg", {"length": 6}, seed))
    _, ev = run_search(a, exhaustive_policy, ReactiveOracle())
    out.append((a, ev, "enriched"))
    return out


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_round_trip_every_format(seed):
    for a, events, fmt in _episodes(seed):
        tr = encode_trace(events, make_codec(a, fmt))
        back = trace_from_tokens(tr.tokens)
        assert back.tokens == tr.tokens and back.blocks == tr.blocks
        assert len(back.blocks) == len(events)
    tree = generate_instance("tree", {"nodes": 12}, seed)
    for fmt in TREE_FORMATS:
        for order in ("dfs", "bfs"):
            tr = encode_tree_trace(tree, fmt, order)
            back = trace_from_tokens(tr.tokens)
            assert back.tokens == tr.tokens and back.blocks == tr.blocks


def test_stripped_and_residual_formats():
    adapter, events = sat_episode(n=8, seed=4)
    stripped = encode_trace(events, make_codec(adapter, "stripped"))
    assert "?" in stripped.tokens
    assert not {"T", "F", "U"} & set(stripped.tokens[stripped.prefix_len:stripped.state_end(1)])
    resid = encode_trace(events, make_codec(adapter, "residual-cnf"))
    first = resid.block_tokens(1)
    assert first[1].startswith("C") and first.count(":") <= 25 + 1


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_conflict_evidence_is_local(seed):
    adapter, events = sat_episode(n=10, seed=seed)
    tr = encode_trace(events, make_codec(adapter))
    for t, ev in enumerate(events, 1):
        if ev.state_before.conflict is None:
            continue
        state = tr.tokens[tr.blocks[t - 1][0]:tr.state_end(t)]
        j = ev.state_before.conflict
        prop = state[state.index("[PROP]"):]
        assert prop[1] == f"C{j}"
        for lit in adapter.cnf.clauses[j]:
            assert (f"+v{lit - 1}" if lit > 0 else f"-v{-lit - 1}") in prop
        assert prop[-2] == "CONFLICT"


def test_split_and_assemble_inverse():
    adapter, events = sat_episode(n=8, seed=5)
    tr = encode_trace(events, make_codec(adapter))
    prefix, blocks = split_trace(tr.tokens)
    assert assemble(prefix, blocks).tokens == tr.tokens
