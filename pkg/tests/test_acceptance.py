"""Acceptance criteria, one test per criterion.

Each test records a single PASS/FAIL/SKIP line, shown in the pytest
terminal summary (and printed immediately when run with ``-s``).
Criteria 8 and 11 need the public Chatbot Arena count export; point
``ARENA_DATA`` at a CSV/JSON count file to enable them and set
``ARENA_EXTENDED=1`` to include the slow Model 18 fit.
"""

import itertools
import math
import os
import time

import numpy as np
import pytest

from arena_rank.analysis import (
    agglomerate,
    classical_mds,
    doubly_centered,
    kendall_tau_b,
    s_map,
)
from arena_rank.data import parse_dataset, read_dataset
from arena_rank.estimation import (
    FitOptions,
    constraint_value,
    fit,
    nll,
    nll_gradient,
    pack,
    param_count,
    unpack,
)
from arena_rank.evaluation import cross_entropies
from arena_rank.models import Family, ModelConfig, ParameterSet, dct_basis, pair_probabilities, simulate

from conftest import all_configs, random_dataset
from test_analysis import brute_tau, order_cost, tree_orders
from test_estimation import brute_constraint
from test_models import random_params

RESULTS: dict[int, str] = {}


def record(number, title, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}" + (f" ({detail})" if detail else "")
    RESULTS[number] = line
    print(line)
    assert ok, line


def record_skip(number, title, reason):
    line = f"[SKIP] criterion {number:>2}: {title} ({reason})"
    RESULTS[number] = line
    print(line)
    pytest.skip(reason)


def test_01_gradient_oracle():
    rng = np.random.default_rng(101)
    h = 1e-6
    worst = 0.0
    start = time.perf_counter()
    for config in all_configs():
        data = random_dataset(rng)
        params = random_params(rng, config, 5)
        theta = pack(params)
        g = nll_gradient(data, config, params)
        for k in range(theta.size):
            e = np.zeros_like(theta)
            e[k] = h
            fd = (nll(data, config, unpack(theta + e, config, 5)) - nll(data, config, unpack(theta - e, config, 5))) / (2 * h)
            worst = max(worst, abs(g[k] - fd) / max(abs(fd), 1e-5))
    elapsed = time.perf_counter() - start
    record(1, "analytic gradient vs central differences", worst < 1e-5 and elapsed < 1.0,
           f"{len(all_configs())} configs, max rel err {worst:.2e}, {elapsed:.2f} s")


def test_02_symmetry_suite():
    rng = np.random.default_rng(102)
    configs = all_configs()
    cov_configs = [c for c in configs if c.has_cov]
    worst = 0.0
    for trial in range(100):
        config = configs[trial % len(configs)]
        data = random_dataset(rng)
        p = random_params(rng, config, 5)
        base = nll(data, config, p)
        c = rng.normal(scale=5)
        worst = max(worst, abs(nll(data, config, ParameterSet(p.mu + c, p.eta, p.G, p.delta, p.Lambda)) - base))
        worst = max(worst, abs(nll_gradient(data, config, p)[:5].sum()))

        config = cov_configs[trial % len(cov_configs)]
        p = random_params(rng, config, 5)
        base = nll(data, config, p)
        for t in (0.5, 2.0, 10.0):
            lam = None if p.Lambda is None else t * p.Lambda
            worst = max(worst, abs(nll(data, config, ParameterSet(t * p.mu, p.eta, p.G, p.delta + 2 * math.log(t), lam)) - base))
        if p.Lambda is not None:
            moved = p.Lambda + rng.normal(size=p.Lambda.shape[1])
            worst = max(worst, abs(nll(data, config, ParameterSet(p.mu, p.eta, p.G, p.delta, moved)) - base))
    record(2, "shift, scale and factor-translation invariance; score gradient sums to zero", worst <= 1e-10,
           f"100 trials, max deviation {worst:.1e}")


def test_03_closed_form_mle():
    r = fit(parse_dataset([("A", "B", 3, 1, 0)]), ModelConfig(Family.BT))
    target = np.array([0.5 * math.log(3), -0.5 * math.log(3)])
    err = float(np.max(np.abs(r.params.mu - target)))
    record(3, "two-competitor BT MLE on (3,1,0)", err <= 1e-5, f"max error {err:.1e}")


def test_04_reduction_equivalences():
    rng = np.random.default_rng(104)
    m = 7
    i, j = np.triu_indices(m, 1)
    exact_rk = True
    dv_gap = scalar_gap = factor_gap = 0.0
    for _ in range(50):
        mu = rng.normal(scale=3, size=m)
        delta = rng.normal(size=m)
        lam = rng.normal(size=(m, 2))
        for k_cov, extra in ((None, {}), (0, {"delta": delta}), (2, {"delta": delta, "Lambda": lam})):
            bt = pair_probabilities(ModelConfig(Family.BT, k_cov=k_cov), ParameterSet(mu=mu, **extra), i, j)
            rk0 = pair_probabilities(ModelConfig(Family.RAO_KUPPER, k_cov, 0), ParameterSet(mu=mu, eta=0.0, **extra), i, j)
            rkg = pair_probabilities(ModelConfig(Family.RAO_KUPPER, k_cov, 3), ParameterSet(mu=mu, G=np.zeros((m, 3)), **extra), i, j)
            exact_rk &= bool(np.array_equal(rk0, bt) and np.array_equal(rkg, bt))
            dv = pair_probabilities(ModelConfig(Family.DAVIDSON, k_cov, 0), ParameterSet(mu=mu, eta=-30.0, **extra), i, j)
            dv_gap = max(dv_gap, float(np.max(np.abs(dv - bt))))

        # scalar threshold against the strength (pi) forms, and a constant-H factor model
        eta = float(rng.uniform(0.05, 2.0))
        a, b, th = np.exp(mu[i]), np.exp(mu[j]), math.exp(eta)
        rk_pi = np.stack([a / (a + th * b), b / (b + th * a), (th * th - 1) * a * b / ((a + th * b) * (b + th * a))], 1)
        den = a + b + th * np.sqrt(a * b)
        dv_pi = np.stack([a / den, b / den, th * np.sqrt(a * b) / den], 1)
        phi = dct_basis(m, m)
        G = 0.5 * eta * np.outer(np.ones(m), phi.sum(axis=0))
        for fam, ref in ((Family.RAO_KUPPER, rk_pi), (Family.DAVIDSON, dv_pi)):
            scalar = pair_probabilities(ModelConfig(fam, k_tie=0), ParameterSet(mu=mu, eta=eta), i, j)
            scalar_gap = max(scalar_gap, float(np.max(np.abs(scalar - ref) / ref)))
            factored = pair_probabilities(ModelConfig(fam, k_tie=m), ParameterSet(mu=mu, G=G), i, j)
            factor_gap = max(factor_gap, float(np.max(np.abs(factored - scalar))))
    ok = exact_rk and dv_gap <= 1e-9 and scalar_gap <= 1e-12 and factor_gap <= 1e-12
    record(4, "RK(eta=0) == BT bitwise, Davidson(eta=-30) ~ BT, k_tie=0 == scalar-threshold forms", ok,
           f"RK exact={exact_rk}, Davidson gap {dv_gap:.1e}, pi-form rel gap {scalar_gap:.1e}, constant-H factor gap {factor_gap:.1e}")


def test_05_constraint_propositions():
    rng = np.random.default_rng(105)
    worst_sum = worst_trace = worst_kernel = 0.0
    for m in (2, 3, 4, 6):
        for k in (0, 1, 3):
            p = ParameterSet(mu=np.zeros(m), delta=rng.normal(size=m), Lambda=None if k == 0 else rng.normal(size=(m, k)))
            c = constraint_value(p)
            worst_sum = max(worst_sum, abs(c - brute_constraint(p)))
            worst_trace = max(worst_trace, abs(np.trace(doubly_centered(p.covariance())) - c))
    p = ParameterSet(mu=np.zeros(6), delta=rng.normal(size=6), Lambda=rng.normal(size=(6, 3)))
    sigma = p.covariance()
    S = s_map(sigma)
    one = np.ones(6)
    for _ in range(100):
        v = rng.normal(scale=3, size=6)
        worst_kernel = max(worst_kernel, float(np.max(np.abs(s_map(sigma + np.outer(v, one) + np.outer(one, v)) - S))))
    ok = worst_sum <= 1e-12 and worst_trace <= 1e-12 and worst_kernel <= 1e-12
    record(5, "constraint = mean pair variance = trace(P Sigma P); S invariant on v1'+1v'", ok,
           f"gaps {worst_sum:.1e}, {worst_trace:.1e}, {worst_kernel:.1e}")


REFERENCE_COUNTS = {
    1: (Family.BT_COLLAPSED, None, None, 129), 2: (Family.BT_COLLAPSED, 0, None, 258), 3: (Family.BT_COLLAPSED, 3, None, 645),
    4: (Family.BT, None, None, 129), 5: (Family.BT, 0, None, 258), 6: (Family.BT, 3, None, 645),
    7: (Family.RAO_KUPPER, None, 0, 130), 8: (Family.RAO_KUPPER, None, 1, 258),
    9: (Family.RAO_KUPPER, None, 10, 1419), 10: (Family.RAO_KUPPER, None, 20, 2709),
    11: (Family.RAO_KUPPER, 0, 0, 259), 12: (Family.RAO_KUPPER, 0, 1, 387),
    13: (Family.RAO_KUPPER, 0, 10, 1548), 14: (Family.RAO_KUPPER, 0, 20, 2838),
    15: (Family.RAO_KUPPER, 3, 0, 646), 16: (Family.RAO_KUPPER, 3, 1, 774),
    17: (Family.RAO_KUPPER, 3, 10, 1935), 18: (Family.RAO_KUPPER, 3, 20, 3225),
    19: (Family.DAVIDSON, None, 0, 130), 20: (Family.DAVIDSON, None, 1, 258),
    21: (Family.DAVIDSON, None, 10, 1419), 22: (Family.DAVIDSON, None, 20, 2709),
    23: (Family.DAVIDSON, 0, 0, 259), 24: (Family.DAVIDSON, 0, 1, 387),
    25: (Family.DAVIDSON, 0, 10, 1548), 26: (Family.DAVIDSON, 0, 20, 2838),
    27: (Family.DAVIDSON, 3, 0, 646), 28: (Family.DAVIDSON, 3, 1, 774),
    29: (Family.DAVIDSON, 3, 10, 1935), 30: (Family.DAVIDSON, 3, 20, 3225),
}


def model_config(number):
    fam, k_cov, k_tie, _ = REFERENCE_COUNTS[number]
    return ModelConfig(fam, k_cov, k_tie)


def test_06_parameter_counts():
    wrong = [n for n, (_, _, _, count) in REFERENCE_COUNTS.items() if param_count(model_config(n), 129) != count]
    record(6, "parameter counts for the 30 configurations at m=129", not wrong and len(REFERENCE_COUNTS) == 30,
           "all 30 match" if not wrong else f"mismatch in models {wrong}")


def test_07_nll_decomposition():
    rng = np.random.default_rng(107)
    worst = 0.0
    fits = 0
    for config in all_configs():
        data = random_dataset(rng, m=6, max_count=25)
        report = fit(data, config, FitOptions(seed=fits))
        h = cross_entropies(data, config, report.params)
        worst = max(worst, abs(sum(v for v in h if v is not None) - report.nll))
        fits += 1
    record(7, "fitted nll equals the sum of outcome cross-entropies", worst <= 1e-12,
           f"{fits} fitted models, max gap {worst:.1e}")


ARENA_DATA = os.environ.get("ARENA_DATA")
REFERENCE_NLL = {1: 0.6554, 4: 0.6351, 7: 1.0095, 19: 1.0100}


@pytest.fixture(scope="module")
def arena():
    if not ARENA_DATA:
        return None
    return read_dataset(ARENA_DATA)


def test_08_dataset_reproduction(arena):
    title = "reference NLLs on the Chatbot Arena counts"
    if arena is None:
        record_skip(8, title, "ARENA_DATA not set; dataset not available")
    n = arena.total
    problems = []
    if (arena.m, arena.n_pairs, int(round(n))) != (129, 3455, 1374996):
        problems.append(f"dataset totals m={arena.m}, |E|={arena.n_pairs}, n={n:.0f}")
    targets = dict(REFERENCE_NLL)
    if os.environ.get("ARENA_EXTENDED") == "1":
        targets[18] = 1.0044
    details = []
    for number, expected in targets.items():
        start = time.perf_counter()
        report = fit(arena, model_config(number))
        elapsed = time.perf_counter() - start
        details.append(f"M{number} {report.nll:.4f} vs {expected} in {elapsed:.0f}s")
        if abs(report.nll - expected) > 0.002:
            problems.append(f"model {number} nll {report.nll:.4f}")
        if number != 18 and elapsed > 60:
            problems.append(f"model {number} took {elapsed:.0f}s")
    record(8, title, not problems, "; ".join(details + problems))


def test_09_synthetic_recovery():
    m = 6
    mu = np.array([0.9, 0.5, 0.1, -0.2, -0.5, -0.8])
    truth = ParameterSet(mu=mu - mu.mean(), eta=-0.3)
    config = ModelConfig(Family.DAVIDSON, k_tie=0)
    pairs = list(itertools.combinations(range(m), 2))
    counts = np.full(len(pairs), 10**5 // len(pairs))
    counts[: 10**5 - counts.sum()] += 1
    data = simulate(config, truth, pairs, counts, seed=109)
    r = fit(data, config)
    i, j = np.triu_indices(m, 1)
    diff_err = float(np.max(np.abs((r.params.mu[i] - r.params.mu[j]) - (truth.mu[i] - truth.mu[j]))))
    eta_err = abs(r.params.eta - truth.eta)
    record(9, "Davidson synthetic recovery from 1e5 votes", diff_err <= 0.05 and eta_err <= 0.05 and data.total == 10**5,
           f"max score-difference error {diff_err:.4f}, eta error {eta_err:.4f}")


def test_10_embedding_and_clustering_oracles():
    rng = np.random.default_rng(110)
    pts = rng.normal(size=(4, 2))
    D = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    X = classical_mds(D, 2).coordinates
    mds_err = float(np.max(np.abs(np.sqrt(((X[:, None] - X[None]) ** 2).sum(-1)) - D)))

    olo_ok = True
    for m in (2, 3, 4, 5):
        for _ in range(40):
            P = rng.normal(size=(m, 2))
            Dm = np.sqrt(((P[:, None] - P[None]) ** 2).sum(-1))
            for linkage in ("single", "complete", "average"):
                dendro = agglomerate(Dm, linkage)
                candidates = tree_orders(dendro.merges, m)
                best = min(order_cost(o, Dm) for o in candidates)
                olo_ok &= list(dendro.leaf_order) in candidates and abs(order_cost(dendro.leaf_order, Dm) - best) <= 1e-12

    tau_ok = True
    for k in range(200):
        size = int(rng.integers(2, 15))
        a = rng.integers(0, 5, size) if k % 2 else rng.normal(size=size)
        b = rng.integers(0, 5, size) if k % 3 else rng.normal(size=size)
        if len(set(a.tolist())) < 2 or len(set(b.tolist())) < 2:
            a, b = np.arange(size), rng.permutation(size)
        tau_ok &= kendall_tau_b(a, b) == brute_tau(a.tolist(), b.tolist())
    record(10, "MDS reconstruction, optimal leaf order vs exhaustive search, tau-b vs enumeration",
           mds_err <= 1e-8 and olo_ok and tau_ok, f"MDS error {mds_err:.1e}, leaf order ok={olo_ok}, tau exact={tau_ok}")


def test_11_cross_model_agreement(arena):
    title = "Kendall tau between fitted configurations within [0.96, 1]"
    if arena is None:
        record_skip(11, title, "ARENA_DATA not set; dataset not available")
    scores = [fit(arena, model_config(n)).params.mu for n in (1, 4, 7, 11, 19, 20, 23)]
    taus = [kendall_tau_b(a, b) for a, b in itertools.combinations(scores, 2)]
    record(11, title, min(taus) >= 0.96, f"tau range [{min(taus):.3f}, {max(taus):.3f}]")
