"""Named verification suites at their certification sizes.

Each suite builds its fixtures deterministically from one seed, runs the
relevant checks from :mod:`demon_sampling.verification` on the bundled
benchmark mixtures, and returns a list of LemmaReports. The CLI prints one
pass/fail line per report and exits 0 only when every report passed.
"""

from __future__ import annotations

import numpy as np

from .benchmarks import load_benchmark
from .core import karras_schedule, ode_map, sample_prior
from .engine import DemonConfig, sample_ensemble
from .rewards import (
    ClosedFormSource,
    GaussianBumpReward,
    LinearReward,
    QuadraticReward,
)
from .verification import (
    LemmaReport,
    P_THRESHOLD,
    _evolve_ode_segment,
    curves_reports,
    distribution_equivalence,
    estimator_spread_table,
    improvement_curves,
    lemma1_residual,
    martingale_check,
    max_onestep_check,
    sphere_concentration,
    spread_trend_reports,
)

__all__ = ["SUITE_NAMES", "run_suite"]

SUITE_NAMES = ("lemma1", "martingale", "lemma3", "lemma4", "lemma5", "spread", "curves")

BENCH_LINEAR = LinearReward(np.array([1.0, 0.4]))
BENCH_QUADRATIC = QuadraticReward(
    np.array([[0.3, 0.1], [0.1, 0.2]]), np.array([0.2, -0.1])
)
BENCH_BUMP = GaussianBumpReward(np.array([0.5, 0.5]), 0.8)


def _benchmark_state(model, t, seed, prep_steps=60):
    """A reproducible typical state at noise level t: flowed prior draw."""
    prior = sample_prior(model.dim, 14.648, np.random.default_rng(seed))
    return _evolve_ode_segment(model, prior[None], 14.648, t, prep_steps, 7.0)[0]


def suite_lemma1(seed: int = 0) -> list[LemmaReport]:
    """Residual identity across rewards and noise-injection rates.

    Nine (reward, beta) combinations, the exact beta = 0 case on matching
    grids, and the negative-sign case of a sharp bump centered on the clean
    completion of the evaluation state.
    """
    model = load_benchmark("gmm2d")
    t_eval = 2.0
    x_t = _benchmark_state(model, t_eval, seed + 5)
    reports = []
    for reward_idx, (name, spec) in enumerate(
        (
            ("linear", BENCH_LINEAR),
            ("quadratic", BENCH_QUADRATIC),
            ("bump", BENCH_BUMP),
        )
    ):
        for beta in (0.05, 0.1, 0.2):
            rep = lemma1_residual(
                model,
                x_t,
                t_eval,
                beta,
                spec,
                n_paths=1200,
                n_sde_steps=48,
                ode_steps=64,
                rng=np.random.default_rng([seed, reward_idx, int(beta * 1000)]),
            )
            reports.append(
                LemmaReport.from_values(
                    f"residual_identity[{name},beta={beta}]",
                    rep.lhs,
                    rep.rhs,
                    rep.tolerance,
                    rep.diagnostics,
                )
            )
    zero = lemma1_residual(
        model,
        x_t,
        t_eval,
        0.0,
        BENCH_LINEAR,
        n_paths=64,
        n_sde_steps=48,
        ode_steps=48,
        rng=np.random.default_rng(seed),
    )
    exact = zero.diagnostics["lhs_mean"] == 0.0 and zero.diagnostics["rhs_mean"] == 0.0
    reports.append(
        LemmaReport.from_values(
            "residual_identity[beta=0,exact]",
            0.0 if exact else 1.0,
            0.0,
            0.0,
            {"lhs_mean": zero.diagnostics["lhs_mean"], "rhs_mean": zero.diagnostics["rhs_mean"]},
        )
    )
    peak = ode_map(model, x_t, t_eval, 64)
    sharp = GaussianBumpReward(peak, 0.25)
    rep = lemma1_residual(
        model,
        x_t,
        t_eval,
        0.2,
        sharp,
        n_paths=1200,
        n_sde_steps=48,
        ode_steps=64,
        rng=np.random.default_rng(seed + 11),
    )
    reports.append(
        LemmaReport.from_values(
            "residual_identity[bump_at_peak]",
            rep.lhs,
            rep.rhs,
            rep.tolerance,
            rep.diagnostics,
        )
    )
    lhs_mean = rep.diagnostics["lhs_mean"]
    reports.append(
        LemmaReport.from_values(
            "residual_negative_at_sharp_peak",
            max(lhs_mean, 0.0),
            0.0,
            0.0,
            {"lhs_mean": lhs_mean, "lhs_stderr": rep.diagnostics["lhs_stderr"]},
        )
    )
    return reports


def _random_points(model, n_points, seed, index_range=(4, 56)):
    rng = np.random.default_rng(seed)
    schedule = karras_schedule(64, 7.0, 0.002, 14.648)
    points = []
    for _ in range(n_points):
        i = int(rng.integers(*index_range))
        t = float(schedule.times[i])
        delta = float(schedule.deltas[i])
        x = _benchmark_state(model, t, int(rng.integers(2**31)))
        points.append((x, t, delta))
    return points


def suite_martingale(seed: int = 0, n_points: int = 20) -> list[LemmaReport]:
    model = load_benchmark("gmm2d")
    rng = np.random.default_rng(seed + 1)
    reports = []
    for j, (x, t, delta) in enumerate(_random_points(model, n_points, seed)):
        rep = martingale_check(model, x, t, delta, 0.1, BENCH_LINEAR, rng=rng)
        reports.append(
            LemmaReport.from_values(
                f"martingale[{j},t={t:.3f}]", rep.lhs, rep.rhs, rep.tolerance, rep.diagnostics
            )
        )
    return reports


def suite_lemma3(seed: int = 0, n_points: int = 20) -> list[LemmaReport]:
    model = load_benchmark("gmm2d")
    rng = np.random.default_rng(seed + 2)
    reports = []
    for j, (x, t, delta) in enumerate(_random_points(model, n_points, seed + 100)):
        rep = max_onestep_check(model, x, t, delta, 0.1, BENCH_LINEAR, rng=rng)
        reports.append(
            LemmaReport.from_values(
                f"onestep_max_bound[{j},t={t:.3f}]",
                rep.lhs,
                rep.rhs,
                rep.tolerance,
                rep.diagnostics,
            )
        )
    return reports


def suite_lemma4(seed: int = 0, samples_per_arm: int = 2000) -> list[LemmaReport]:
    """Uniform-weight guidance must be indistinguishable from plain sampling,
    while real tanh guidance must be detected as a shift (positive control)."""
    model = load_benchmark("gmm8d")
    spec = LinearReward(np.ones(8))
    uniform_cfg = DemonConfig(
        kind="boltzmann", temperature=np.inf, n_candidates=16, n_steps=128, beta=0.1, ode_steps=1
    )
    plain_cfg = DemonConfig(kind="none", n_candidates=1, n_steps=128, beta=0.1)
    tanh_cfg = DemonConfig(kind="tanh", n_candidates=16, n_steps=128, beta=0.1, ode_steps=1)
    uniform, _ = sample_ensemble(model, uniform_cfg, ClosedFormSource(spec), samples_per_arm, seed=seed + 41)
    plain, _ = sample_ensemble(model, plain_cfg, ClosedFormSource(spec), samples_per_arm, seed=seed + 42)
    shifted, _ = sample_ensemble(model, tanh_cfg, ClosedFormSource(spec), samples_per_arm, seed=seed + 43)
    equiv = distribution_equivalence(
        uniform, plain, rng=np.random.default_rng(seed + 44), check_id="uniform_matches_plain"
    )
    control = distribution_equivalence(
        shifted, plain, rng=np.random.default_rng(seed + 45), check_id="tanh_shift_raw"
    )
    detected = LemmaReport.from_values(
        "tanh_shift_detected",
        max(control.diagnostics["min_p"] - P_THRESHOLD, 0.0),
        0.0,
        0.0,
        {"min_p": control.diagnostics["min_p"], "expects": "guided ensemble differs from plain"},
    )
    return [equiv, detected]


def suite_lemma5(seed: int = 0) -> list[LemmaReport]:
    main = sphere_concentration(10**4, 10**4, np.random.default_rng(seed + 51))
    wide = sphere_concentration(
        10**6, 100, np.random.default_rng(seed + 52), half_width=4.0, chunk=8
    )
    return [main, wide]


def suite_spread(seed: int = 0, timing: bool = False) -> list[LemmaReport]:
    model = load_benchmark("gmm2d")
    rows = estimator_spread_table(
        model,
        BENCH_LINEAR,
        rng=np.random.default_rng(seed + 61),
        timing=timing,
    )
    return spread_trend_reports(rows)


def suite_curves(seed: int = 0, n_seeds: int = 50, timing: bool = False) -> list[LemmaReport]:
    model = load_benchmark("gmm2d")
    seeds = [seed + 1000 + j for j in range(n_seeds)]
    arms = improvement_curves(model, BENCH_LINEAR, seeds, timing=timing)
    return curves_reports(arms)


def run_suite(name: str, seed: int = 0, timing: bool = False) -> list[LemmaReport]:
    if name == "lemma1":
        return suite_lemma1(seed)
    if name == "martingale":
        return suite_martingale(seed)
    if name == "lemma3":
        return suite_lemma3(seed)
    if name == "lemma4":
        return suite_lemma4(seed)
    if name == "lemma5":
        return suite_lemma5(seed)
    if name == "spread":
        return suite_spread(seed, timing=timing)
    if name == "curves":
        return suite_curves(seed, timing=timing)
    raise KeyError(f"unknown suite {name!r}")
