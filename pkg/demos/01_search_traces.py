"""Walk through a tiny SAT search and the token traces it produces.

Run: python3 demos/01_search_traces.py
"""
from ssalab.codec import encode_trace, make_codec, state_rebuild
from ssalab.domains import SatAdapter, example1_cnf
from ssalab.search.core import ReactiveOracle, run_search
from ssalab.search.policies import exhaustive_policy

# four clauses, three variables
cnf = example1_cnf()
print("clauses:", cnf.clauses)

# with full propagation the first decision already settles everything
res, events = run_search(SatAdapter(cnf), exhaustive_policy, ReactiveOracle())
print("fixpoint propagation:", res.termination, "decisions", res.decisions, "backtracks", res.backtracks)

# one round of propagation per step leaves room for a conflict and a backjump
adapter = SatAdapter(cnf, chained=False)
res, events = run_search(adapter, exhaustive_policy, ReactiveOracle())
print("single-round propagation:", res.termination, "decisions", res.decisions, "backtracks", res.backtracks)

trace = encode_trace(events, make_codec(adapter, "enriched"), termination=res.termination)
print("\nprefix:", " ".join(trace.prefix))
for t in range(1, len(trace.blocks) + 1):
    print(f"block {t}:", " ".join(trace.block_tokens(t)))

# the state-rebuilt view keeps the prefix and only the current block
last = state_rebuild(trace, len(trace.blocks))
print("\nstate-rebuilt context for the last step:", len(last.tokens), "tokens vs", len(trace.tokens), "cumulative")

# the stripped format drops propagation evidence, so conflicts are no longer visible in the block
stripped = encode_trace(events, make_codec(adapter, "stripped"), termination=res.termination)
print("stripped last block:", " ".join(stripped.block_tokens(len(stripped.blocks))))
