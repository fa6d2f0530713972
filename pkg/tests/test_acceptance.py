"""End-to-end acceptance checks.

Each test prints exactly one pass/fail line (visible with ``pytest -s`` or
on failure) and then asserts, so the suite doubles as a human-readable
scorecard. Run just this file with::

    python3 -m pytest tests/test_acceptance.py -v -s
"""

import json
import textwrap

import numpy as np
import pytest

from powsim import analytic, metrics
from powsim.cli import main as cli_main
from powsim.engine import StopCondition, finalize_chain, run_coordinated, run_coupled, run_p2p
from powsim.metrics import closeness_centrality, correlations, gini
from powsim.params import LatencyVector, SystemParams
from powsim.scenarios import (
    build_bitcoin_approx,
    build_three_miner,
    build_two_miner,
    build_world_capitals,
)


def report(num: int, ok: bool, desc: str, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[{status}] criterion {num:02d}: {desc}{suffix}", flush=True)
    assert ok, f"criterion {num:02d}: {desc}{suffix}"


def random_instance(rng, n):
    caps = rng.dirichlet(np.ones(n))
    tau = 10.0 ** rng.uniform(-2, 2)
    lats = 10.0 ** rng.uniform(-3, 1, size=n)
    return SystemParams(caps, tau), LatencyVector(lats)


def race_oracle(params, vector, n_races, seed):
    """Monte-Carlo renewal race: sample the winner and the cycle length."""
    rng = np.random.default_rng(seed)
    rates = params.effective_rates
    finishes = vector.round_trips[None, :] + rng.exponential(
        1.0 / rates[None, :], size=(n_races, rates.size)
    )
    winners = np.argmin(finishes, axis=1)
    cycle = finishes[np.arange(n_races), winners]
    p_hat = np.bincount(winners, minlength=rates.size) / n_races
    return cycle.mean(), cycle.std(ddof=1) / np.sqrt(n_races), p_hat


def sim_coordinated_efficiency(params, vector, blocks, seeds):
    """Mean overall and per-miner efficiency over independent seeds."""
    reports = []
    for seed in seeds:
        trace = run_coordinated(params, vector, StopCondition.blocks(blocks), seed)
        chain = finalize_chain(trace, seed)
        reports.append(metrics.efficiency_from_trace(trace, chain, params))
    agg = metrics.aggregate(reports)
    return agg


def test_criterion_01_analytic_vs_simulation():
    tau = 1e-3
    params = SystemParams(np.array([0.3, 0.7]), tau)
    worst = 0.0
    for l2 in np.linspace(0.5e-3, 3e-3, 6):
        vector = LatencyVector(np.array([0.5e-3, l2]))
        exact = analytic.efficiency_coordinated(params, vector)
        agg = sim_coordinated_efficiency(params, vector, 100_000, range(10))
        rel = abs(agg.overall_mean - exact.overall) / exact.overall
        rel_i = np.max(np.abs(agg.individual_mean - exact.individual) / exact.individual)
        worst = max(worst, rel, rel_i)
    report(
        1,
        worst < 0.01,
        "simulated coordinated efficiencies match the closed form within 1%",
        f"worst relative error {worst:.2e}",
    )


def test_criterion_02_equidistant_closed_form():
    rng = np.random.default_rng(2)
    worst_exact, worst_sim = 0.0, 0.0
    for n in (2, 5, 10):
        caps = rng.dirichlet(np.ones(n))
        tau = 10.0 ** rng.uniform(-1, 1)
        dist = 10.0 ** rng.uniform(-1, 0.5)
        params = SystemParams(caps, tau)
        vector = LatencyVector(np.full(n, dist))
        exact = analytic.efficiency_coordinated(params, vector)
        expected = tau / (2.0 * dist + tau)
        worst_exact = max(worst_exact, abs(exact.overall - expected))
        agg = sim_coordinated_efficiency(params, vector, 100_000, range(3))
        worst_sim = max(worst_sim, abs(agg.overall_mean - expected) / expected)
    report(
        2,
        worst_exact < 1e-12 and worst_sim < 0.01,
        "equidistant efficiency equals hardness/(round trip + hardness)",
        f"closed-form error {worst_exact:.2e}, simulation error {worst_sim:.2e}",
    )


def test_criterion_03_self_consistency():
    rng = np.random.default_rng(3)
    worst_sum, worst_mix, worst_two = 0.0, 0.0, 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 11))
        params, vector = random_instance(rng, n)
        res = analytic.efficiency_coordinated(params, vector)
        worst_sum = max(worst_sum, abs(res.win_probs.sum() - 1.0))
        mix = float(np.dot(params.capacities, res.individual))
        worst_mix = max(worst_mix, abs(mix - res.overall))
        if n == 2:
            worst_two = max(
                worst_two,
                abs(analytic.taubar_two_miners(params, vector) - res.taubar)
                / res.taubar,
                np.max(
                    np.abs(
                        analytic.win_probability_two_miners(params, vector)
                        - res.win_probs
                    )
                ),
            )
    report(
        3,
        worst_sum < 1e-9 and worst_mix < 1e-9 and worst_two < 1e-12,
        "win probabilities and efficiencies are self-consistent",
        f"sum {worst_sum:.1e}, mix {worst_mix:.1e}, two-miner {worst_two:.1e}",
    )


def test_criterion_04_latency_monotonicity():
    rng = np.random.default_rng(4)
    hits = 0
    for _ in range(200):
        n = int(rng.integers(2, 11))
        caps = rng.dirichlet(np.ones(n))
        tau = 10.0 ** rng.uniform(-1, 1)
        # keep rate*latency exponents representable so a 10% increase does
        # not vanish into an exact tie in double precision
        lats = tau * 10.0 ** rng.uniform(-2, 1, size=n)
        params = SystemParams(caps, tau)
        base = analytic.efficiency_coordinated(params, LatencyVector(lats)).overall
        bumped = lats.copy()
        bumped[rng.integers(n)] *= 1.1
        worse = analytic.efficiency_coordinated(params, LatencyVector(bumped)).overall
        hits += worse < base
    report(
        4,
        hits == 200,
        "increasing any latency strictly lowers overall efficiency",
        f"{hits}/200",
    )


def test_criterion_05_merging_equidistant_pair():
    rng = np.random.default_rng(5)
    hits = 0
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(3, 9))
        params, vector = random_instance(rng, n)
        i, j = rng.choice(n, size=2, replace=False)
        lats = vector.entries.copy()
        lats[j] = lats[i]
        vector = LatencyVector(lats)
        before = analytic.efficiency_coordinated(params, vector).overall
        merged_params, merged_vector = analytic.merge_equidistant(
            params, vector, int(i), int(j)
        )
        after = analytic.efficiency_coordinated(merged_params, merged_vector).overall
        err = abs(after - before)
        worst = max(worst, err)
        hits += err < 1e-12
    report(
        5,
        hits == 200,
        "merging an equidistant pair preserves overall efficiency",
        f"{hits}/200, worst error {worst:.1e}",
    )


def test_criterion_06_coupled_dominance():
    scenarios = [
        build_two_miner([0.3, 0.7], 1.0),
        build_three_miner([0.2, 0.3, 0.5]),
    ]
    combos = [
        (cfg, lam, seed)
        for cfg in scenarios
        for lam in (0.1, 1.0, 10.0)
        for seed in range(9)
    ][:50]
    held = 0
    p2p_sums: dict[tuple[str, float], list[float]] = {}
    for cfg, lam, seed in combos:
        scen = cfg.with_lambda(lam)
        horizon = 500.0 * scen.params.hardness
        p2p, coord = run_coupled(
            scen.params, scen.matrix, scen.vector, horizon=horizon, seed=seed
        )
        len_p2p = finalize_chain(p2p, seed).length
        len_coord = finalize_chain(coord, seed).length
        held += len_coord <= len_p2p
        eta = len_p2p * scen.params.hardness / horizon
        p2p_sums.setdefault((cfg.name, lam), []).append(eta)
    mean_ok = True
    for (name, lam), etas in p2p_sums.items():
        cfg = scenarios[0] if name == "two-miner" else scenarios[1]
        scen = cfg.with_lambda(lam)
        exact = analytic.efficiency_coordinated(scen.params, scen.vector).overall
        mean_ok &= float(np.mean(etas)) >= exact
    report(
        6,
        held == len(combos) and mean_ok,
        "coordinated chain never outgrows the coupled P2P chain",
        f"{held}/{len(combos)} realizations, P2P mean above closed form: {mean_ok}",
    )


def test_criterion_07_monte_carlo_oracle():
    rng = np.random.default_rng(7)
    worst_sigma = 0.0
    for k in range(20):
        n = int(rng.integers(2, 6))
        params, vector = random_instance(rng, n)
        mean, se, p_hat = race_oracle(params, vector, 1_000_000, seed=700 + k)
        res = analytic.efficiency_coordinated(params, vector)
        worst_sigma = max(worst_sigma, abs(res.taubar - mean) / se)
        p = res.win_probs
        p_se = np.sqrt(p * (1 - p) / 1_000_000)
        # the normal approximation needs a well-populated outcome
        usable = 1_000_000 * p * (1 - p) >= 25.0
        if usable.any():
            worst_sigma = max(
                worst_sigma, np.max(np.abs(p - p_hat)[usable] / p_se[usable])
            )
    report(
        7,
        worst_sigma < 3.0,
        "closed forms agree with an independent sampled-race oracle",
        f"worst deviation {worst_sigma:.2f} standard errors",
    )


def test_criterion_08_gini_fixtures():
    fixtures = [
        ((0.4, 0.6), 0.1),
        ((0.3, 0.7), 0.2),
        ((0.1, 0.9), 0.4),
        ((0.3, 0.4, 0.3), 1.0 / 15.0),
        ((0.2, 0.6, 0.2), 4.0 / 15.0),
        ((0.1, 0.8, 0.1), 7.0 / 15.0),
    ]
    worst = max(abs(gini(np.array(v)) - expected) for v, expected in fixtures)
    report(
        8,
        worst < 1e-12,
        "Gini index matches hand-computed fixtures exactly",
        f"worst error {worst:.1e}",
    )


def test_criterion_09_geography_mean_delay():
    cfg = build_bitcoin_approx()
    mean_ms = cfg.meta["mean_latency_s"] * 1e3
    report(
        9,
        abs(mean_ms - 52.0) <= 5.2,
        "five-city mean pairwise one-way delay is 52 ms +/- 10%",
        f"measured {mean_ms:.1f} ms",
    )


def test_criterion_10_p2p_lambda_trend():
    cfg = build_two_miner([0.5, 0.5], 1.0, protocol="p2p")
    lambdas = [0.01, 0.1, 1.0, 10.0, 100.0]
    means, ses = [], []
    for lam in lambdas:
        scen = cfg.with_lambda(lam)
        etas = []
        for seed in range(5):
            trace = run_p2p(scen.params, scen.matrix, StopCondition.blocks(20_000), seed)
            chain = finalize_chain(trace, seed)
            etas.append(
                metrics.efficiency_from_trace(trace, chain, scen.params).overall
            )
        means.append(float(np.mean(etas)))
        ses.append(float(np.std(etas, ddof=1) / np.sqrt(len(etas))))
    nondecreasing = all(
        means[k + 1] >= means[k] - 2.0 * np.hypot(ses[k], ses[k + 1])
        for k in range(len(lambdas) - 1)
    )
    floor = min(means) >= 0.5
    saturates = means[-1] >= 0.99
    report(
        10,
        nondecreasing and floor and saturates,
        "P2P efficiency rises with lambda, stays above the two-miner floor",
        "eta " + ", ".join(f"{lam:g}:{m:.3f}" for lam, m in zip(lambdas, means)),
    )


def test_criterion_11_equidistant_fairness():
    params = SystemParams(np.array([0.1, 0.8, 0.1]), 1.0)
    vector = LatencyVector(np.full(3, 0.5))
    agg = sim_coordinated_efficiency(params, vector, 100_000, range(10))
    gamma_e = gini(agg.individual_mean)
    report(
        11,
        gamma_e < 0.01,
        "equidistant coordinated mining equalizes individual efficiency",
        f"efficiency Gini {gamma_e:.5f}",
    )


def test_criterion_12_centrality_correlation():
    scen = build_world_capitals(subset=15).with_lambda(1.0)
    reports = []
    for seed in range(3):
        trace = run_p2p(scen.params, scen.matrix, StopCondition.blocks(100_000), seed)
        chain = finalize_chain(trace, seed)
        reports.append(metrics.efficiency_from_trace(trace, chain, scen.params))
    eta = metrics.aggregate(reports).individual_mean
    centrality = closeness_centrality(scen.matrix)
    pearson, spearman = correlations(centrality, eta)
    report(
        12,
        pearson >= 0.95 and spearman >= 0.93,
        "individual P2P efficiency tracks closeness centrality",
        f"pearson {pearson:.3f}, spearman {spearman:.3f}",
    )


def test_criterion_13_instability_bound():
    scen = build_world_capitals(subset=15).with_lambda(100.0)
    total_blocks = 0
    max_depth = 0
    for seed in range(4):
        trace = run_p2p(scen.params, scen.matrix, StopCondition.blocks(50_000), seed)
        chain = finalize_chain(trace, seed)
        total_blocks += chain.length
        inst = metrics.instability(trace, chain)
        max_depth = max(max_depth, int(inst.max_fork_depth.max()))
    # coordinated runs cannot fork at the coordinator by construction
    vector = LatencyVector(scen.matrix.entries[:, 0])
    trace = run_coordinated(scen.params, vector, StopCondition.blocks(20_000), seed=0)
    coordinator_forks = len(trace.views[-1].switch_log)
    report(
        13,
        total_blocks >= 200_000 and max_depth <= 3 and coordinator_forks == 0,
        "fast communication keeps forks shallow and the coordinator fork-free",
        f"{total_blocks} blocks, max fork depth {max_depth}, "
        f"coordinator forks {coordinator_forks}",
    )


def test_criterion_14_cli_determinism(tmp_path):
    config = tmp_path / "scenario.yaml"
    config.write_text(
        textwrap.dedent(
            """\
            name: determinism-check
            protocol: both
            capacities: [0.3, 0.7]
            topology:
              kind: two_miner
              inter_latency: 1.0
            stop:
              blocks: 5000
            seeds: [0, 1, 2]
            """
        )
    )
    out1, out2 = tmp_path / "run1", tmp_path / "run2"
    code1 = cli_main(["simulate", str(config), "--out", str(out1)])
    code2 = cli_main(["simulate", str(config), "--out", str(out2)])
    identical = code1 == code2 == 0
    names1 = sorted(p.name for p in out1.iterdir())
    for name in names1:
        if name == "manifest.json":
            m1 = json.loads((out1 / name).read_text())
            m2 = json.loads((out2 / name).read_text())
            for key in ("timestamp", "outputs"):
                m1.pop(key), m2.pop(key)
            identical &= m1 == m2
        else:
            identical &= (out1 / name).read_bytes() == (out2 / name).read_bytes()
    report(
        14,
        identical,
        "rerunning a command reproduces every data file byte for byte",
        f"{len(names1)} files compared",
    )
