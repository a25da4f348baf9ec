import numpy as np
import pytest

from ssalab.domains import SatAdapter, example1_cnf, generate_instance
from ssalab.search.core import ReactiveOracle, run_search
from ssalab.search.policies import TopKSampler, exhaustive_policy


@pytest.fixture
def example1():
    return example1_cnf()


@pytest.fixture
def example1_events():
    adapter = SatAdapter(example1_cnf(), chained=False)
    _, events = run_search(adapter, exhaustive_policy, ReactiveOracle())
    return adapter, events


def sat_episode(n=8, seed=0, ratio=4.0):
    cnf = generate_instance("sat-planted", {"n": n, "alpha": ratio}, seed)
    adapter = SatAdapter(cnf)
    _, events = run_search(adapter, TopKSampler(), ReactiveOracle(), rng=np.random.default_rng(seed))
    return adapter, events


def random_sat_model(n, mask="ssa-selective", positions="block-relative", seed=0, scale=0.3):
    """Randomly initialised SAT model with weights large enough to be opinionated."""
    import torch

    from ssalab.codec import sat_vocab
    from ssalab.model import ModelConfig, TinyTransformer

    vocab = sat_vocab(n, int(4 * n))
    cfg = ModelConfig(vocab_size=len(vocab), layers=2, dim=32, heads=4, ffn=64, slots=4, mask=mask,
                      positions=positions, max_position=8192)
    model = TinyTransformer(cfg, seed=seed)
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            p.copy_(torch.randn(p.shape, generator=gen) * scale)
    return model, vocab


# acceptance summary: one line per criterion, echoed after the run
ACCEPTANCE_LINES: list = []


def record(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'} {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
