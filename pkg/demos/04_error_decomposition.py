"""Exact error bookkeeping on small discrete worlds.

A world has a true state S, a history H and a trace summary T = phi(S).
A predictor f(T, H) pays for noise, for T merging states, for its own
approximation error and for leaning on H.  The four parts add up exactly.
"""
import numpy as np

from ssalab.theory import decomposition_terms, random_world, run_theory_suite, transplant_identity

rng = np.random.default_rng(0)
w = random_world(rng, 6, 4, 3, premise=True)
d = decomposition_terms(w)
print(f"total {d.total:.6f} = irreducible {d.irreducible:.6f} + aliasing {d.aliasing:.6f} "
      f"+ approximation {d.approximation:.6f} + entanglement {d.entanglement:.6f}")

ent, half = transplant_identity(w)
print(f"entanglement {ent:.6f}, half the mean squared change under a history redraw {half:.6f}")

# a predictor that ignores H has no entanglement at all
m = random_world(rng, 6, 4, 3, premise=False, measurable=True)
print("entanglement of a history-blind predictor:", decomposition_terms(m).entanglement)

print()
for check, lhs, rhs, tol, ok in run_theory_suite(100, seed=0):
    print(f"{check:24s} worst {lhs:.2e} (tolerance {tol:g}) {'ok' if ok else 'FAILED'}")
