import numpy as np
import pytest

from propspace.hydro import HydroResult
from propspace.moo import (
    Entry,
    GaConfig,
    OptimizationProblem,
    ParetoArchive,
    constrained_before,
    dominates,
    hypervolume,
    optimize,
    population_size_for,
)


def entry(eta=0.7, back=0.1, kt=0.17, face=0.0, feasible=True, valid=True, violation=0.0):
    res = HydroResult(kt=kt, kq=0.04, eta=eta, a_cav_back=back, a_cav_face=face, converged=True)
    e = Entry(x=np.zeros(2), generation=0, valid=valid, result=res if valid else None)
    e.feasible = feasible
    e.violation = violation if not feasible else 0.0
    return e


def test_dominance_examples():
    a = entry(eta=0.70, back=0.1)
    b = entry(eta=0.69, back=0.2)
    assert dominates(a, b) and not dominates(b, a)
    c = entry(eta=0.70, back=0.2)
    d = entry(eta=0.69, back=0.1)
    assert not dominates(c, d) and not dominates(d, c)


def test_constrained_ordering_feasible_first():
    feas = entry(feasible=True)
    infeas = entry(feasible=False, violation=0.01)
    assert constrained_before(feas, infeas) < 0
    assert constrained_before(infeas, feas) > 0
    worse = entry(feasible=False, violation=0.05)
    assert constrained_before(infeas, worse) < 0
    assert constrained_before(infeas, infeas) == 0


def test_hypervolume_examples():
    assert hypervolume([(1.0, 0.0)], (0.0, 1.0)) == pytest.approx(1.0)
    assert hypervolume([(1.0, 0.5), (0.5, 0.0)], (0.0, 1.0)) == pytest.approx(0.75)
    assert hypervolume([], (0.0, 1.0)) == 0.0
    with pytest.raises(ValueError):
        hypervolume([(0.5, 0.5)], (0.6, 1.0))  # reference not dominated


def test_hypervolume_ignores_dominated_points():
    pts = [(1.0, 0.5), (0.5, 0.0), (0.4, 0.4)]  # third dominated by second
    assert hypervolume(pts, (0.0, 1.0)) == pytest.approx(0.75)


def test_population_sizing_rule():
    assert population_size_for(5) == 150
    assert population_size_for(6) == 180


def test_ga_config_validation():
    with pytest.raises(ValueError):
        GaConfig(population=3, generations=5)
    with pytest.raises(ValueError):
        GaConfig(population=7, generations=5)
    with pytest.raises(ValueError):
        GaConfig(population=8, generations=0)


def quadratic_problem(dim=3, seed_target=0):
    rng = np.random.default_rng(seed_target)
    target = rng.uniform(-0.4, 0.4, dim)

    def toy(x):
        eta = 1.0 - float(np.sum((x - target) ** 2))
        return (
            HydroResult(kt=0.17, kq=0.05, eta=eta, a_cav_back=0.0, a_cav_face=0.0, converged=True),
            True,
        )

    problem = OptimizationProblem(
        lower=-np.ones(dim), upper=np.ones(dim), evaluate_fn=toy, kt_reference=0.17
    )
    return problem, target


def test_toy_convergence_to_analytic_optimum():
    problem, _ = quadratic_problem()
    archive = optimize(problem, GaConfig(population=30, generations=30, seed=5))
    best = max(e.objectives[0] for e in archive.front())
    assert 1.0 - best <= 1e-2


def test_archive_bookkeeping_and_elitism():
    problem, _ = quadratic_problem(seed_target=3)
    config = GaConfig(population=20, generations=10, seed=9)
    archive = optimize(problem, config)
    assert len(archive.entries) == config.population * (config.generations + 1)
    best = archive.best_eta_by_generation()
    assert len(best) == config.generations + 1
    assert np.all(np.diff(best) >= -1e-15)


def test_min_back_cavitation_non_increasing():
    """Elitism on the second objective: the running minimum feasible back
    cavitation never worsens across generations."""

    def evaluate(x):
        return (
            HydroResult(kt=0.17, kq=0.05, eta=float(x[0]), a_cav_back=float(abs(x[1])),
                        a_cav_face=0.0, converged=True),
            True,
        )

    problem = OptimizationProblem(
        lower=-np.ones(2), upper=np.ones(2), evaluate_fn=evaluate, kt_reference=0.17
    )
    archive = optimize(problem, GaConfig(population=16, generations=10, seed=21))
    gens = max(e.generation for e in archive.entries)
    best = np.full(gens + 1, np.inf)
    for e in archive.entries:
        if e.feasible:
            best[e.generation] = min(best[e.generation], e.objectives[1])
    running = np.minimum.accumulate(best)
    assert np.all(np.diff(running) <= 1e-15)


def test_front_passes_brute_force_oracle():
    problem, _ = quadratic_problem(seed_target=7)
    archive = optimize(problem, GaConfig(population=24, generations=8, seed=2))
    front = archive.front()
    feasible = archive.feasible_entries()
    for e in front:
        assert e.feasible
        assert not any(dominates(other, e) for other in feasible)


def test_determinism_same_seed():
    problem, _ = quadratic_problem(seed_target=1)
    a = optimize(problem, GaConfig(population=16, generations=6, seed=11))
    b = optimize(problem, GaConfig(population=16, generations=6, seed=11))
    xa = np.stack([e.x for e in a.entries])
    xb = np.stack([e.x for e in b.entries])
    assert np.array_equal(xa, xb)


def test_kt_constraint_enforced_on_front():
    """Designs outside the thrust band never reach the front even when they
    dominate on objectives."""

    def evaluate(x):
        kt = 0.17 + 0.2 * float(x[0])  # wanders far outside the band
        eta = 0.9 - 0.1 * float(abs(x[1]))
        return (
            HydroResult(kt=kt, kq=0.05, eta=eta, a_cav_back=float(abs(x[1])), a_cav_face=0.0,
                        converged=True),
            True,
        )

    problem = OptimizationProblem(
        lower=-np.ones(2), upper=np.ones(2), evaluate_fn=evaluate, kt_reference=0.17
    )
    archive = optimize(problem, GaConfig(population=20, generations=12, seed=4))
    kt_min, kt_max = problem.kt_limits
    front = archive.front()
    assert front
    for e in front:
        assert kt_min <= e.result.kt <= kt_max
    assert any(not e.feasible for e in archive.entries)


def test_face_cavitation_filtered_from_front_kept_in_archive():
    def evaluate(x):
        face = 0.2 if x[0] > 0 else 0.0
        eta = 0.7 + 0.2 * float(x[0])  # face-cavitating designs look better
        return (
            HydroResult(kt=0.17, kq=0.05, eta=eta, a_cav_back=0.1, a_cav_face=face,
                        converged=True),
            True,
        )

    problem = OptimizationProblem(
        lower=-np.ones(1), upper=np.ones(1), evaluate_fn=evaluate, kt_reference=0.17
    )
    archive = optimize(problem, GaConfig(population=12, generations=6, seed=8))
    assert any(e.result and e.result.a_cav_face > 0 for e in archive.entries)
    for e in archive.front():
        assert e.result.a_cav_face == 0.0
    unfiltered = archive.front(require_face_free=False)
    assert any(e.result.a_cav_face > 0 for e in unfiltered)


def test_invalid_designs_skip_evaluator_and_rank_worst():
    calls = {"n": 0}

    def evaluate(x):
        if x[0] < 0:
            return None, False
        calls["n"] += 1
        return (
            HydroResult(kt=0.17, kq=0.05, eta=float(x[0]), a_cav_back=0.0, a_cav_face=0.0,
                        converged=True),
            True,
        )

    problem = OptimizationProblem(
        lower=-np.ones(1), upper=np.ones(1), evaluate_fn=evaluate, kt_reference=0.17
    )
    archive = optimize(problem, GaConfig(population=10, generations=5, seed=3))
    invalid = [e for e in archive.entries if not e.valid]
    assert invalid and all(not e.feasible and e.violation == np.inf for e in invalid)
    valid = [e for e in archive.entries if e.valid]
    assert calls["n"] == len(valid)
    assert all(e.result is None for e in invalid)


def test_evaluator_exception_marks_infeasible():
    def evaluate(x):
        if x[0] > 0.5:
            raise RuntimeError("solver blew up")
        return (
            HydroResult(kt=0.17, kq=0.05, eta=0.5, a_cav_back=0.0, a_cav_face=0.0, converged=True),
            True,
        )

    problem = OptimizationProblem(
        lower=np.zeros(1), upper=np.ones(1), evaluate_fn=evaluate, kt_reference=0.17
    )
    archive = optimize(problem, GaConfig(population=8, generations=4, seed=6))
    assert any(not e.valid for e in archive.entries)
    assert any(e.valid for e in archive.entries)


def _picklable_toy(x):
    eta = 1.0 - float(np.sum((x - 0.2) ** 2))
    return (
        HydroResult(kt=0.17, kq=0.05, eta=eta, a_cav_back=float(abs(x[0])), a_cav_face=0.0,
                    converged=True),
        True,
    )


def test_parallel_evaluation_matches_serial():
    problem = OptimizationProblem(
        lower=-np.ones(2), upper=np.ones(2), evaluate_fn=_picklable_toy, kt_reference=0.17
    )
    cfg = GaConfig(population=12, generations=4, seed=13)
    serial = optimize(problem, cfg, workers=1)
    parallel = optimize(problem, cfg, workers=2)
    assert np.array_equal(
        np.stack([e.x for e in serial.entries]), np.stack([e.x for e in parallel.entries])
    )
    assert [e.feasible for e in serial.entries] == [e.feasible for e in parallel.entries]
    assert [e.result.eta for e in serial.entries] == [e.result.eta for e in parallel.entries]


def test_archive_front_requires_kt_band():
    archive = ParetoArchive(kt_min=0.16, kt_max=0.18)
    archive.add(entry(eta=0.9, back=0.0, kt=0.30))  # outside band
    archive.add(entry(eta=0.6, back=0.1, kt=0.17))
    front = archive.front()
    assert len(front) == 1
    assert front[0].result.eta == 0.6
