"""Exact finite checks of the state-equivalence framework.

A discrete world has a state S, history H, binary label Y with Y
independent of H given S, a trace map T = phi(S) and a predictor table
f(T, H).  Every expectation is a finite sum.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateFeatures, InvalidParams

MAX_SUPPORT = 8


@dataclass
class DiscreteWorld:
    p_sh: np.ndarray  # joint p(s, h)
    eta_s: np.ndarray  # Pr(Y=1 | s)
    phi: np.ndarray  # trace index per state
    f: np.ndarray  # predictor table over (t, h)

    def __post_init__(self):
        self.p_sh = np.asarray(self.p_sh, dtype=float)
        self.eta_s = np.asarray(self.eta_s, dtype=float)
        self.phi = np.asarray(self.phi, dtype=int)
        self.f = np.asarray(self.f, dtype=float)
        n_s, n_h = self.p_sh.shape
        if max(n_s, n_h, self.n_t) > MAX_SUPPORT:
            raise InvalidParams(f"supports are capped at {MAX_SUPPORT}")
        if abs(self.p_sh.sum() - 1.0) > 1e-12 or (self.p_sh < 0).any():
            raise InvalidParams("joint table must be a probability distribution")
        if self.eta_s.shape != (n_s,) or self.phi.shape != (n_s,) or self.f.shape != (self.n_t, n_h):
            raise InvalidParams("table shapes disagree")

    @property
    def n_t(self) -> int:
        return int(self.phi.max()) + 1

    def p_th(self) -> np.ndarray:
        out = np.zeros((self.n_t, self.p_sh.shape[1]))
        np.add.at(out, self.phi, self.p_sh)
        return out

    def p_y1_th(self) -> np.ndarray:
        """Joint Pr(Y=1, t, h)."""
        out = np.zeros((self.n_t, self.p_sh.shape[1]))
        np.add.at(out, self.phi, self.p_sh * self.eta_s[:, None])
        return out


def random_world(rng: np.random.Generator, n_s: int = 6, n_h: int = 4, n_t: int = 3,
                 premise: bool = True, measurable: bool = False) -> DiscreteWorld:
    """With ``premise`` the history depends on S only through T, which makes
    Y independent of H given T."""
    phi = np.concatenate([np.arange(n_t), rng.integers(0, n_t, n_s - n_t)])
    rng.shuffle(phi)
    p_s = rng.dirichlet(np.ones(n_s))
    if premise:
        p_h_t = rng.dirichlet(np.ones(n_h), size=n_t)
        p_sh = p_s[:, None] * p_h_t[phi]
    else:
        p_sh = p_s[:, None] * rng.dirichlet(np.ones(n_h), size=n_s)
    p_sh = p_sh / p_sh.sum()
    eta = rng.random(n_s)
    f = np.repeat(rng.random((n_t, 1)), n_h, axis=1) if measurable else rng.random((n_t, n_h))
    return DiscreteWorld(p_sh, eta, phi, f)


def _cond_var(values: np.ndarray, weights: np.ndarray) -> float:
    """Weighted variance around the first value; exactly 0 for constant rows."""
    if weights.sum() == 0:
        return 0.0
    w = weights / weights.sum()
    d = values - values[0]
    m = float(w @ d)
    return float(w @ (d - m) ** 2)


def _cond_mean(values, weights) -> float:
    if weights.sum() == 0:
        return 0.0
    return float(values[0] + (weights / weights.sum()) @ (values - values[0]))


@dataclass
class Decomposition:
    irreducible: float
    aliasing: float
    approximation: float
    entanglement: float
    total: float
    cross: float


def decomposition_terms(w: DiscreteWorld) -> Decomposition:
    p_th = w.p_th()
    p_t = p_th.sum(1)
    p_s = w.p_sh.sum(1)
    eta_t = np.divide(w.p_y1_th().sum(1), p_t, out=np.zeros_like(p_t), where=p_t > 0)
    eta_th = np.divide(w.p_y1_th(), p_th, out=np.zeros_like(p_th), where=p_th > 0)
    ef_t = np.array([_cond_mean(w.f[t], p_th[t]) for t in range(w.n_t)])
    irreducible = float(p_s @ (w.eta_s * (1 - w.eta_s)))
    aliasing = float(p_s @ (w.eta_s - eta_t[w.phi]) ** 2)
    approximation = float(p_t @ (eta_t - ef_t) ** 2)
    entanglement = float(sum(p_t[t] * _cond_var(w.f[t], p_th[t]) for t in range(w.n_t)))
    f_sh = w.f[w.phi]
    total = float(np.sum(w.p_sh * (w.eta_s[:, None] * (1 - f_sh) ** 2 + (1 - w.eta_s[:, None]) * f_sh ** 2)))
    cross = float(-2 * np.sum(p_th * (eta_th - eta_t[:, None]) * (w.f - ef_t[:, None])))
    return Decomposition(irreducible, aliasing, approximation, entanglement, total, cross)


def transplant_identity(w: DiscreteWorld) -> tuple[float, float]:
    """(expected conditional variance of f, half the expected squared
    disagreement under an independent history redraw)."""
    p_th = w.p_th()
    p_t = p_th.sum(1)
    ent = sum(p_t[t] * _cond_var(w.f[t], p_th[t]) for t in range(w.n_t))
    half = 0.0
    for t in range(w.n_t):
        if p_t[t] == 0:
            continue
        q = p_th[t] / p_t[t]
        diff = w.f[t][:, None] - w.f[t][None, :]
        half += 0.5 * p_t[t] * float(q @ diff ** 2 @ q)
    return float(ent), float(half)


def _xlogy(x, y):
    return np.where(x > 0, x * np.log(np.where(y > 0, y, 1.0)), 0.0)


def conditional_mi(w: DiscreteWorld) -> float:
    """I(Y; H | T) = sum p(y,t,h) log[p(y,h|t) / (p(y|t) p(h|t))]."""
    p1 = w.p_y1_th()
    p_th = w.p_th()
    p0 = p_th - p1
    p_t = p_th.sum(1, keepdims=True)
    total = 0.0
    for py in (p0, p1):
        py_t = py.sum(1, keepdims=True)
        num = py * p_t
        den = py_t * p_th
        ratio = np.divide(num, den, out=np.ones_like(num), where=den > 0)
        total += float(_xlogy(py, ratio).sum())
    return total


def _entropy_y_given(joint1: np.ndarray, joint: np.ndarray) -> float:
    p1 = joint1
    p0 = joint - joint1
    q1 = np.divide(p1, joint, out=np.zeros_like(p1), where=joint > 0)
    q0 = np.divide(p0, joint, out=np.zeros_like(p0), where=joint > 0)
    return float(-(_xlogy(p1, q1).sum() + _xlogy(p0, q0).sum()))


def logloss_identity(w: DiscreteWorld) -> tuple[float, float]:
    """(H(Y|T) - H(Y|T,H), I(Y;H|T)), computed independently."""
    p1 = w.p_y1_th()
    p_th = w.p_th()
    h_t = _entropy_y_given(p1.sum(1), p_th.sum(1))
    h_th = _entropy_y_given(p1, p_th)
    return h_t - h_th, conditional_mi(w)


def pinsker_check(w: DiscreteWorld) -> tuple[float, float]:
    """(Bayes 0-1 risk gap R*(T) - R*(T,H), sqrt(I(Y;H|T) / 2))."""
    p1 = w.p_y1_th()
    p_th = w.p_th()
    r_t = float(np.minimum(p1.sum(1), p_th.sum(1) - p1.sum(1)).sum())
    r_th = float(np.minimum(p1, p_th - p1).sum())
    return r_t - r_th, float(np.sqrt(max(conditional_mi(w), 0.0) / 2))


def fit_rk(acc_by_k: dict, anchor: int = 4) -> tuple[float, dict]:
    """Per-token retrieval accuracy from the anchor point and the r^k curve."""
    a = acc_by_k.get(anchor)
    if a is None or not 0 < a <= 1:
        raise InvalidParams(f"accuracy at k={anchor} must lie in (0, 1]")
    r = a ** (1.0 / anchor)
    return r, {k: r ** k for k in sorted(acc_by_k)}


@dataclass
class ProbeResult:
    acc_state: float
    acc_history: float
    lift: float
    lift_std: float


def _drop_constant(x: np.ndarray) -> np.ndarray:
    if x.size == 0:
        return x.reshape(len(x), 0)
    keep = np.ptp(x, axis=0) > 0
    return x[:, keep]


def history_irrelevance_probe(x_state, x_history, y, seeds=(0, 1, 2), test_frac: float = 0.3) -> ProbeResult:
    """Logistic-regression accuracy on state features versus state plus
    history features, over random train/test splits."""
    from sklearn.linear_model import LogisticRegression

    x_state = np.asarray(x_state, dtype=float)
    x_history = np.asarray(x_history, dtype=float).reshape(len(x_state), -1)
    y = np.asarray(y).astype(int)
    if len(y) < 4 or len(np.unique(y)) < 2:
        raise DegenerateFeatures("probe needs at least two label classes")
    xs = _drop_constant(x_state)
    xh = _drop_constant(np.hstack([x_state, x_history]))
    if xs.shape[1] == 0 and xh.shape[1] == 0:
        raise DegenerateFeatures("every feature column is constant")

    def fit_score(x, tr, te):
        if x.shape[1] == 0:
            major = np.bincount(y[tr]).argmax()
            return float(np.mean(y[te] == major))
        mu, sd = x[tr].mean(0), x[tr].std(0)
        sd[sd == 0] = 1.0
        clf = LogisticRegression(tol=1e-8, max_iter=10_000, C=1e4)
        clf.fit((x[tr] - mu) / sd, y[tr])
        return float(clf.score((x[te] - mu) / sd, y[te]))

    a_s, a_h = [], []
    for seed in seeds:
        perm = np.random.default_rng(seed).permutation(len(y))
        cut = max(1, int(len(y) * test_frac))
        te, tr = perm[:cut], perm[cut:]
        if len(np.unique(y[tr])) < 2:
            raise DegenerateFeatures("training split has a single class")
        a_s.append(fit_score(xs, tr, te))
        a_h.append(fit_score(xh, tr, te) if xh.shape[1] != xs.shape[1] else a_s[-1])
    lifts = np.array(a_h) - np.array(a_s)
    return ProbeResult(float(np.mean(a_s)), float(np.mean(a_h)), float(lifts.mean()), float(lifts.std()))


def run_theory_suite(n_worlds: int = 100, seed: int = 0) -> list:
    """Rows (check, lhs, rhs, tolerance, pass) over seeded random worlds."""
    rng = np.random.default_rng(seed)
    rows = []
    worst = {"transplant": 0.0, "logloss": 0.0, "decomposition": 0.0, "pinsker_violations": 0,
             "measurable_entanglement": 0.0}
    for _ in range(n_worlds):
        n_s = int(rng.integers(3, MAX_SUPPORT + 1))
        n_t = int(rng.integers(1, n_s + 1))
        n_h = int(rng.integers(2, MAX_SUPPORT + 1))
        w = random_world(rng, n_s, n_h, n_t, premise=True)
        a, b = transplant_identity(w)
        worst["transplant"] = max(worst["transplant"], abs(a - b))
        a, b = logloss_identity(w)
        worst["logloss"] = max(worst["logloss"], abs(a - b))
        d = decomposition_terms(w)
        worst["decomposition"] = max(worst["decomposition"], abs(
            d.total - (d.irreducible + d.aliasing + d.approximation + d.entanglement)))
        free = random_world(rng, n_s, n_h, n_t, premise=False)
        gap, bound = pinsker_check(free)
        worst["pinsker_violations"] += int(gap < -1e-15 or gap > bound + 1e-15)
        m = random_world(rng, n_s, n_h, n_t, premise=False, measurable=True)
        worst["measurable_entanglement"] = max(worst["measurable_entanglement"], decomposition_terms(m).entanglement)
    rows.append(("transplant_identity", worst["transplant"], 0.0, 1e-12, worst["transplant"] <= 1e-12))
    rows.append(("logloss_identity", worst["logloss"], 0.0, 1e-12, worst["logloss"] <= 1e-12))
    rows.append(("pinsker_bound", worst["pinsker_violations"], 0, 0, worst["pinsker_violations"] == 0))
    rows.append(("decomposition_sum", worst["decomposition"], 0.0, 1e-10, worst["decomposition"] <= 1e-10))
    rows.append(("measurable_entanglement", worst["measurable_entanglement"], 0.0, 0.0,
                 worst["measurable_entanglement"] == 0.0))
    return rows
