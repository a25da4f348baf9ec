import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from ssalab.codec import encode_trace, make_codec, sat_vocab
from ssalab.errors import InvalidParams, MalformedTrace, NonFiniteLoss, PositionOverflow, ShapeMismatch
from ssalab.masks import layout_from_lengths
from ssalab.model import (ModelConfig, TinyTransformer, TrainConfig, batch_loss, example_from_trace,
                          load_checkpoint, next_token_dist, p_backtrack_from_dist, save_checkpoint, token_accuracy,
                          train)

from conftest import sat_episode

V = 40


def random_pair(rng):
    p = int(rng.integers(1, 8))
    cur = int(rng.integers(1, 8))
    h1 = [int(x) for x in rng.integers(1, 6, size=rng.integers(0, 4))]
    h2 = [int(x) for x in rng.integers(1, 6, size=rng.integers(0, 4))]
    prefix = rng.integers(0, V, p)
    block = rng.integers(0, V, cur)
    seqs = []
    for hist in (h1, h2):
        ids = np.concatenate([prefix, *[rng.integers(0, V, n) for n in hist], block])
        seqs.append((ids, layout_from_lengths(0, p, [*hist, cur])))
    return seqs, cur


def small(mask="ssa-selective", positions="block-relative", seed=0, **kw):
    cfg = ModelConfig(vocab_size=V, layers=2, dim=32, heads=4, ffn=64, slots=3, mask=mask, positions=positions,
                      max_position=128, **kw)
    return TinyTransformer(cfg, seed=seed)


def scramble(model, seed, scale=0.5):
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            p.copy_(torch.randn(p.shape, generator=gen) * scale)
    return model


def test_ssa_logits_exactly_equal():
    rng = np.random.default_rng(0)
    for i in range(25):
        model = scramble(small(seed=i), i)
        ((a, la), (b, lb)), cur = random_pair(rng)
        ya = model.forward_exact(a, la)[-cur:]
        yb = model.forward_exact(b, lb)[-cur:]
        assert torch.equal(ya, yb)


def test_hidden_states_unchanged_layer_by_layer():
    rng = np.random.default_rng(1)
    model = scramble(small(seed=3), 3)
    p, hist, cur = 4, [3, 5], 4
    lay = layout_from_lengths(0, p, [*hist, cur])
    ids = rng.integers(0, V, lay.length)
    other = ids.copy()
    other[p:p + 3] = rng.integers(0, V, 3)
    _, ha = model.forward_exact(ids, lay, return_hidden=True)
    _, hb = model.forward_exact(other, lay, return_hidden=True)
    assert len(ha) == 3
    for x, y in zip(ha, hb):
        assert torch.equal(x[-cur:], y[-cur:])
        assert torch.equal(x[:p], y[:p])


def test_causal_history_permutation_changes_logits():
    rng = np.random.default_rng(2)
    changed = 0
    for i in range(10):
        model = scramble(small("causal", "absolute", seed=i), i)
        p, h, cur = 3, [3, 4], 3
        lay = layout_from_lengths(0, p, [*h, cur])
        ids = rng.integers(0, V, lay.length)
        perm = np.concatenate([ids[:p], ids[p + 3:p + 7], ids[p:p + 3], ids[-cur:]])
        lay2 = layout_from_lengths(0, p, [4, 3, cur])
        changed += not torch.equal(model.forward_exact(ids, lay)[-cur:], model.forward_exact(perm, lay2)[-cur:])
    assert changed >= 9


def test_dense_matches_exact():
    rng = np.random.default_rng(3)
    for mask, pos in [("ssa-selective", "block-relative"), ("causal", "absolute"), ("ssa-blanket", "absolute")]:
        model = small(mask, pos, seed=1)
        lay = layout_from_lengths(0, 5, [4, 6, 3])
        ids = rng.integers(0, V, lay.length)
        with torch.no_grad():
            dense = model(torch.as_tensor(ids)[None], [lay])[0]
        assert torch.allclose(dense, model.forward_exact(ids, lay), atol=1e-5)


def test_zero_head_gives_uniform():
    model = small()
    with torch.no_grad():
        model.head.weight.zero_()
        model.head.bias.zero_()
    lay = layout_from_lengths(0, 3, [4])
    dist = next_token_dist(model, np.arange(7), lay)
    assert np.allclose(dist, 1.0 / V)


def test_next_token_dist_properties():
    model = scramble(small(seed=5), 5)
    lay = layout_from_lengths(0, 3, [4])
    ids = np.arange(7) % V
    dist = next_token_dist(model, ids, lay)
    assert abs(dist.sum() - 1) < 1e-6
    one = next_token_dist(model, ids, lay, admissible=[7])
    assert one[7] == pytest.approx(1.0) and one.sum() == pytest.approx(1.0)
    with pytest.raises(InvalidParams):
        next_token_dist(model, ids, lay, admissible=[])
    with pytest.raises(MalformedTrace):
        next_token_dist(model, [], layout_from_lengths(0, 0, []))


def test_p_backtrack_arithmetic():
    dist = np.array([0.2, 0.5, 0.1, 0.2])
    assert p_backtrack_from_dist(dist, 0, [1, 2]) == pytest.approx(0.25)
    assert p_backtrack_from_dist(np.array([0.0, 1.0]), 0, [1]) == 0.0
    assert p_backtrack_from_dist(dist, 0, []) == 1.0


def test_errors():
    model = small()
    with pytest.raises(ShapeMismatch):
        model.forward_exact(np.arange(5), layout_from_lengths(0, 2, [2]))
    with pytest.raises(ShapeMismatch):
        model.forward_exact(np.array([V, 1]), layout_from_lengths(0, 1, [1]))
    with pytest.raises(PositionOverflow):
        model.forward_exact(np.zeros(200, dtype=int), layout_from_lengths(0, 100, [100]))
    with pytest.raises(InvalidParams):
        ModelConfig(vocab_size=V, dim=30, heads=4)
    with pytest.raises(InvalidParams):
        TrainConfig(lr=0)


def test_checkpoint_round_trip(tmp_path):
    model = scramble(small(seed=2), 2)
    save_checkpoint(model, tmp_path / "m.ckpt", extra={"vocab": ["a", "b"]})
    back, extra = load_checkpoint(tmp_path / "m.ckpt")
    assert extra == {"vocab": ["a", "b"]}
    assert back.cfg == model.cfg
    for (n1, p1), (n2, p2) in zip(model.state_dict().items(), back.state_dict().items()):
        assert n1 == n2 and torch.equal(p1, p2)
    raw = (tmp_path / "m.ckpt").read_bytes()
    save_checkpoint(back, tmp_path / "n.ckpt", extra={"vocab": ["a", "b"]})
    assert (tmp_path / "n.ckpt").read_bytes() == raw


def _examples(count=6, n=5):
    vocab = sat_vocab(n, 20)
    out = []
    for s in range(count):
        adapter, events = sat_episode(n=n, seed=s)
        out.append(example_from_trace(encode_trace(events, make_codec(adapter)), vocab))
    return vocab, out


def test_zero_epochs_returns_init():
    vocab, ex = _examples(2)
    cfg = ModelConfig(vocab_size=len(vocab), layers=1, dim=16, heads=2, ffn=32, slots=2)
    model, hist = train(cfg, TrainConfig(epochs=0, seed=4), ex)
    ref = TinyTransformer(cfg, seed=4)
    assert hist == []
    for a, b in zip(model.parameters(), ref.parameters()):
        assert torch.equal(a, b)


def test_training_deterministic_and_decreasing():
    vocab, ex = _examples(6)
    cfg = ModelConfig(vocab_size=len(vocab), layers=1, dim=16, heads=2, ffn=32, slots=2)
    tc = TrainConfig(epochs=4, lr=3e-3, seed=9, batch_size=2)
    m1, h1 = train(cfg, tc, ex)
    m2, h2 = train(cfg, tc, ex)
    assert h1 == h2
    for a, b in zip(m1.parameters(), m2.parameters()):
        assert torch.equal(a, b)
    assert h1[-1] < h1[0]


def test_non_finite_loss_aborts():
    vocab, ex = _examples(2)
    cfg = ModelConfig(vocab_size=len(vocab), layers=1, dim=16, heads=2, ffn=32, slots=2)
    model = TinyTransformer(cfg)
    with torch.no_grad():
        model.head.bias.fill_(float("nan"))
    with pytest.raises(NonFiniteLoss):
        train(cfg, TrainConfig(epochs=1), ex, model=model)


def test_gradient_check():
    vocab, ex = _examples(2, n=4)
    cfg = ModelConfig(vocab_size=len(vocab), layers=2, dim=16, heads=2, ffn=32, slots=2)
    model = scramble(TinyTransformer(cfg, seed=0), 0, scale=0.3).double()
    loss, _ = batch_loss(model, ex)
    model.zero_grad()
    loss.backward()
    rng = np.random.default_rng(0)
    eps = 1e-6
    checked = 0
    for name, p in model.named_parameters():
        flat = p.data.view(-1)
        for idx in rng.choice(flat.numel(), size=min(3, flat.numel()), replace=False):
            old = flat[idx].item()
            with torch.no_grad():
                flat[idx] = old + eps
                up = batch_loss(model, ex)[0].item()
                flat[idx] = old - eps
                down = batch_loss(model, ex)[0].item()
                flat[idx] = old
            fd = (up - down) / (2 * eps)
            an = p.grad.view(-1)[idx].item()
            if abs(fd) + abs(an) < 1e-8:
                continue
            assert abs(fd - an) / max(abs(fd), abs(an)) < 1e-3, name
            checked += 1
    assert checked > 20


@pytest.mark.slow
def test_memorization_fixture():
    vocab, ex = _examples(50, n=5)
    cfg = ModelConfig(vocab_size=len(vocab), mask="causal", positions="absolute")
    model, hist = train(cfg, TrainConfig(epochs=150, lr=1e-3, seed=0), ex)
    assert token_accuracy(model, ex) >= 0.99
