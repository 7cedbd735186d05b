"""Acceptance criteria 1 to 8, each at its stated tolerance and runtime budget.

Run with ``pytest tests/test_acceptance.py`` or ``python tests/test_acceptance.py``;
one PASS/FAIL line per criterion is printed in the terminal summary.
"""

import itertools
import time
from pathlib import Path

import numpy as np
import pytest

from distortlab.attack import fit_regret
from distortlab.distributions import js_alpha, js_alpha_kl_bound, log_ratio_bound, mixture, random_dist, root_e
from distortlab.harness.cli import main
from distortlab.harness.config import load_config
from distortlab.harness.runner import run_scenario, sweep_frontier, verify_bayes_suite
from distortlab.numerics import (
    Dataset,
    finite_diff_grad,
    grad_params,
    init_model,
    input_gradients,
    loss_mean,
    per_sample_loss,
)
from distortlab.seeding import derive_rng

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
TOL = 1e-9


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def test_criterion_1_gradients(record):
    start = time.perf_counter()
    worst = {}
    for kind, hidden in (("linear", 0), ("logistic", 0), ("mlp", 4)):
        errs = []
        for i in range(100):
            rng = derive_rng(1, f"acceptance-grad-{kind}", i)
            d, n = int(rng.integers(1, 6)), int(rng.integers(1, 5))
            model = init_model(kind, d, hidden, rng=rng, scale=1.0)
            X = rng.uniform(size=(n, d))
            y = rng.normal(size=n) if kind == "linear" else rng.integers(0, 2, n).astype(float)
            data = Dataset(X, y)
            fd = finite_diff_grad(lambda p: loss_mean(model.with_params(p), data), model.params)
            errs.append(_rel(grad_params(model, data), fd))
            G = input_gradients(model, X, y)
            fd_x = finite_diff_grad(lambda x: per_sample_loss(model, x[None, :], y[:1])[0], X[0])
            errs.append(_rel(G[0], fd_x))
        worst[kind] = max(errs)
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-5 and elapsed <= 10
    detail = "max rel err " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f" ({elapsed:.1f}s)"
    record(1, ok, detail)
    assert ok, detail


def _triples(n_instances=1000):
    for i in range(n_instances):
        rng = derive_rng(2, "acceptance-divergence", i)
        n = int(rng.integers(2, 7))
        conc = float(rng.choice([0.2, 0.5, 1.0, 3.0]))
        P, Q, R = (random_dist(rng, n, conc) for _ in range(3))
        yield rng, P, Q, R, float(rng.uniform())


def test_criterion_2_divergence_lemmas(record):
    start = time.perf_counter()
    bad = dict.fromkeys(["lemma1", "property1", "property2", "log_bound", "kl_dominance"], 0)
    for rng, P, Q, R, alpha in _triples():
        if root_e(js_alpha(P, R, alpha)) > root_e(js_alpha(P, Q, alpha)) + root_e(js_alpha(Q, R, alpha)) + TOL:
            bad["lemma1"] += 1
        if np.sqrt(js_alpha(P, R)) > np.sqrt(js_alpha(P, Q)) + np.sqrt(js_alpha(Q, R)) + TOL:
            bad["property1"] += 1
        M = mixture(P, Q, 0.5).probs
        pos = Q.probs > 0
        if np.any(P.probs[pos] / M[pos] > M[pos] / Q.probs[pos] + TOL):
            bad["property2"] += 1
        a, b = np.exp(rng.uniform(-8, 8, size=2))
        lhs, rhs = log_ratio_bound(a, b)
        if lhs > rhs + TOL:
            bad["log_bound"] += 1
        if js_alpha(P, Q, alpha) > js_alpha_kl_bound(P, Q, alpha) + TOL:
            bad["kl_dominance"] += 1
    elapsed = time.perf_counter() - start
    ok = not any(bad.values()) and elapsed <= 10
    detail = "violations/1000 " + ", ".join(f"{k} {v}" for k, v in bad.items()) + f" ({elapsed:.1f}s)"
    record(2, ok, detail)
    assert ok, detail


@pytest.fixture(scope="module")
def bayes_report():
    start = time.perf_counter()
    report = verify_bayes_suite(load_config(CONFIGS / "reference_bayes.toml"))
    return report, time.perf_counter() - start


@pytest.mark.parametrize("check", ["lemma_gjsd", "lemma_dtv", "thm1_first", "thm2_first", "utility_lower_bound"])
def test_criterion_3_appendix_bounds(record, bayes_report, check):
    report, elapsed = bayes_report
    stats = report.summary["checks"][check]
    ok = stats["asserted"] > 0 and stats["violations"] == 0 and elapsed <= 60
    detail = f"{check} {stats['violations']}/{stats['asserted']}"
    if check == "utility_lower_bound":
        detail += f" ({elapsed:.1f}s)"
    record(3, ok, detail)
    assert ok, detail


def test_criterion_4_recoverability(record):
    start = time.perf_counter()
    run = run_scenario(load_config(CONFIGS / "reference_linear.toml"))
    elapsed = time.perf_counter() - start
    cfg = load_config(CONFIGS / "reference_linear.toml")
    per_seed = {}
    for row in run.rows:
        per_seed.setdefault(row["seed"], []).append(row["eps_p"] or 0.0)
    mean = float(np.mean([np.mean(v) for v in per_seed.values()]))
    ok = (len(per_seed) == 10 and cfg.attack.iters == 500 and cfg.federation.samples_per_client == 1
          and mean >= 0.9 and elapsed <= 60)
    detail = f"mean eps_p {mean:.4f} over {len(per_seed)} seeds ({elapsed:.1f}s)"
    record(4, ok, detail)
    assert ok, detail


@pytest.fixture(scope="module")
def reference_sweep():
    cfg = load_config(CONFIGS / "reference_sweep.toml")
    start = time.perf_counter()
    run, frontier = sweep_frontier(cfg, cfg.sweep.eps1)
    return run, frontier, time.perf_counter() - start


def test_criterion_5_leakage_bound(record, reference_sweep):
    run, _, elapsed = reference_sweep
    gated = [r for r in run.rows if r["gate"]]
    violations = [r for r in gated if r["eps_p"] is not None and r["eps_p"] > r["leak_bound"] + 0.05]
    ok = run.constants is not None and not violations and elapsed <= 180
    c = run.constants
    detail = (f"{len(violations)} violations on {len(gated)}/{len(run.rows)} gated rows"
              f" (c2 {c.c2:.3g}, c_b {c.c_b:.3g}, p {c.p:.3g}; {elapsed:.1f}s)")
    record(5, ok, detail)
    assert ok, detail


def test_criterion_6_monotone_tradeoff(record, reference_sweep):
    _, frontier, elapsed = reference_sweep
    eps_p = [f["mean_eps_p"] for f in frontier]
    eps_u = [f["mean_eps_u"] for f in frontier]
    ok = ([f["eps1"] for f in frontier] == [0.0, 0.5, 1.0, 2.0]
          and all(b <= a + 0.05 for a, b in zip(eps_p, eps_p[1:]))
          and all(b >= a - 0.05 for a, b in zip(eps_u, eps_u[1:]))
          and elapsed <= 180)
    detail = ("eps_p " + " ".join(f"{v:.3f}" for v in eps_p)
              + " | eps_u " + " ".join(f"{v:.4f}" for v in eps_u))
    record(6, ok, detail)
    assert ok, detail


def test_criterion_7_regret_exponents(record):
    start = time.perf_counter()
    fitted = {}
    for p in (0.3, 0.5, 1.0):
        traces = [2.0 * (np.arange(1, n + 1) ** p - np.arange(n) ** p) for n in (60, 150, 400)]
        fitted[p] = fit_regret(traces)[0]
    elapsed = time.perf_counter() - start
    ok = all(abs(fitted[p] - p) <= 0.05 for p in fitted) and elapsed <= 5
    detail = "fitted " + ", ".join(f"{p}->{v:.3f}" for p, v in fitted.items()) + f" ({elapsed:.2f}s)"
    record(7, ok, detail)
    assert ok, detail


SUITE = [
    ("run", "reference_linear.toml"),
    ("sweep", "reference_sweep.toml"),
    ("verify-bayes", "reference_bayes.toml"),
]


def _run_suite(out, jobs):
    for command, config in SUITE:
        main([command, str(CONFIGS / config), "--out", str(out), "--jobs", str(jobs)])
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*.csv"))}


def test_criterion_8_determinism(record, tmp_path):
    runs = {(label, jobs): _run_suite(tmp_path / f"{label}-{jobs}", jobs)
            for label, jobs in (("a", 1), ("b", 1), ("c", 2))}
    names = set(next(iter(runs.values())))
    same = all(set(r) == names for r in runs.values()) and all(
        a[n] == b[n] for a, b in itertools.combinations(runs.values(), 2) for n in names)
    ok = same and len(names) >= 4
    detail = f"{len(names)} CSVs byte-identical across 2 serial runs and --jobs 2: {same}"
    record(8, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
