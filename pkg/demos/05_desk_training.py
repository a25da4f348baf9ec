"""Train an SSA model and a causal model on the same SAT traces and compare
them under state-rebuilt inference, history transplant and the probe bank.

The default desk configuration takes about ten minutes on one CPU; pass a
smaller epoch count for a quicker look:  python3 demos/05_desk_training.py 3
"""
import logging
import sys

from ssalab.experiments.desk import DeskConfig, run_desk_seed

logging.basicConfig(level=logging.INFO, format="%(message)s")
epochs = int(sys.argv[1]) if len(sys.argv) > 1 else DeskConfig.epochs
res = run_desk_seed(DeskConfig(epochs=epochs), seed=0)

for (variant, protocol), m in res.solve.items():
    print(f"{variant:7s} {protocol}: solve {m.solve_rate:.2f}, decisions {m.mean_decisions:.1f}, "
          f"backtracks {m.mean_backtracks:.1f}")
for variant, (agree, mean_kl, max_kl, pairs) in res.transplant.items():
    print(f"{variant:7s} transplant over {pairs} pairs: agreement {agree:.3f}%, max symmetric KL {max_kl:.2e}")
for variant, (delta, equal, size) in res.delta_auroc.items():
    print(f"{variant:7s} probe bank of {size}: AUROC change {delta:.4f}, identical scores {equal}")
print(f"{res.seconds:.0f}s")
