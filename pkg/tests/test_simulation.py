import math

import numpy as np
import pytest

from rkhsflr.grid import make_uniform_grid
from rkhsflr.simulation import (
    METHODS,
    SimScenario,
    TruthModel,
    beta0_on_grid,
    cosine_basis,
    estimation_error,
    fit_rate,
    prediction_error,
    run_replicates,
    simulate_dataset,
    zeta_sequence,
)


def test_truth_model_coefficients():
    truth = TruthModel(decay=2.0, num_terms=5)
    expected = [4.0, -1.0, 4.0 / 9.0, -0.25, 4.0 / 25.0]
    assert np.allclose(truth.coefficients, expected, rtol=0, atol=1e-15)
    with pytest.raises(ValueError):
        TruthModel(decay=0.0)
    with pytest.raises(ValueError):
        TruthModel(num_terms=0)


def test_cosine_basis_orthonormal():
    # cosine products have vanishing odd endpoint derivatives, so trapezoid
    # quadrature integrates them to near machine precision
    grid = make_uniform_grid(201)
    basis = cosine_basis(12, grid)
    gram = (basis * grid.weights[None, :]) @ basis.T
    assert np.abs(gram - np.eye(12)).max() < 1e-12
    assert np.allclose(basis[0], 1.0)
    assert basis[3, 0] == pytest.approx(math.sqrt(2.0), rel=1e-15)


def test_zeta_frozen_values():
    well = zeta_sequence("well", 4.0, 10)
    assert well[0] == pytest.approx(1.0, rel=1e-15)
    assert well[1] == pytest.approx(-0.25, rel=1e-15)
    assert well[2] == pytest.approx(3.0**-2.0, rel=1e-14)

    close = zeta_sequence("close", 2.0, 12)
    assert close[0] == pytest.approx(1.0, rel=1e-15)
    assert close[1] == pytest.approx(-0.2 * (1.0 - 0.0002), rel=1e-14)
    assert close[2] == pytest.approx(0.2 * (1.0 - 0.0003), rel=1e-14)
    # k = 5 starts the first power-law block: 0.2 * (5^-1 - 0) with sign +
    assert close[4] == pytest.approx(0.04, rel=1e-14)
    # k = 6 sits just below it within the same block
    assert close[5] == pytest.approx(-0.2 * (0.2 - 0.0001), rel=1e-14)
    # k = 10 opens the next block at 10^-1
    assert close[9] == pytest.approx(-0.2 * 0.1, rel=1e-14)

    with pytest.raises(ValueError):
        zeta_sequence("tight", 2.0, 5)
    with pytest.raises(ValueError):
        zeta_sequence("well", 1.0, 5)


def test_beta0_on_grid_matches_direct_sum():
    grid = make_uniform_grid(51)
    truth = TruthModel(decay=2.0, num_terms=20)
    values = beta0_on_grid(truth, grid)
    for j in (0, 17, 50):
        t = grid.points[j]
        direct = 4.0
        for k in range(2, 21):
            direct += (
                4.0
                * (-1.0) ** (k + 1)
                * k**-2.0
                * math.sqrt(2.0)
                * math.cos((k - 1) * math.pi * t)
            )
        assert values[j] == pytest.approx(direct, rel=1e-12)


def test_simulate_dataset_deterministic_per_replicate():
    scenario = SimScenario(
        spacing="well", nu=2.0, sigma=0.5, n=8, num_replicates=3, grid_points=51
    )
    first = simulate_dataset(scenario, 2)
    again = simulate_dataset(scenario, 2)
    assert np.array_equal(first.curve_matrix, again.curve_matrix)
    assert np.array_equal(first.responses, again.responses)
    other = simulate_dataset(scenario, 3)
    assert not np.array_equal(first.responses, other.responses)
    with pytest.raises(ValueError):
        simulate_dataset(scenario, -1)


def test_simulate_dataset_noiseless_responses():
    # with sigma = 0 each response equals the integral of the curve against
    # the truth; curves live in the cosine span, so quadrature recovers their
    # coefficients essentially exactly
    scenario = SimScenario(
        spacing="well", nu=2.0, sigma=0.0, n=6, num_replicates=1, grid_points=201
    )
    dataset = simulate_dataset(scenario, 0)
    grid = dataset.grid
    truth = scenario.truth()
    basis = cosine_basis(scenario.series_terms, grid)
    coeffs = dataset.curve_matrix @ (basis * grid.weights[None, :]).T
    expected = coeffs @ truth.coefficients
    assert np.abs(dataset.responses - expected).max() < 1e-10


def test_simulate_dataset_score_moments():
    scenario = SimScenario(
        spacing="well", nu=3.0, sigma=0.0, n=4000, num_replicates=1, grid_points=101
    )
    dataset = simulate_dataset(scenario, 0)
    grid = dataset.grid
    basis = cosine_basis(scenario.series_terms, grid)
    coeffs = dataset.curve_matrix @ (basis * grid.weights[None, :]).T
    zeta = zeta_sequence("well", 3.0, scenario.series_terms)
    # scores are unit variance uniforms, so coefficient k has variance zeta_k^2
    sample_var = coeffs[:, :4].var(axis=0)
    assert np.abs(sample_var / zeta[:4] ** 2 - 1.0).max() < 0.1
    assert np.abs(coeffs[:, :4].mean(axis=0)).max() < 0.05


def test_estimation_error_oracle():
    grid = make_uniform_grid(201)
    truth = TruthModel(decay=2.0, num_terms=10)
    beta0 = beta0_on_grid(truth, grid)
    assert estimation_error(beta0, beta0, grid) == 0.0
    basis = cosine_basis(10, grid)
    bumped = beta0 + 0.3 * basis[4]
    assert estimation_error(bumped, beta0, grid) == pytest.approx(0.09, rel=1e-10)


def test_prediction_error_oracle():
    grid = make_uniform_grid(201)
    truth = TruthModel(decay=2.0, num_terms=10)
    zeta = zeta_sequence("well", 2.0, 10)
    beta0 = beta0_on_grid(truth, grid)
    assert prediction_error(beta0, grid, zeta, truth) == pytest.approx(0.0, abs=1e-20)
    basis = cosine_basis(10, grid)
    bumped = beta0 + 0.5 * basis[2]
    expected = zeta[2] ** 2 * 0.25
    assert prediction_error(bumped, grid, zeta, truth) == pytest.approx(expected, rel=1e-10)
    with pytest.raises(ValueError):
        prediction_error(beta0, grid, zeta[:5], truth)


def test_scenario_validation():
    good = dict(spacing="well", nu=2.0, sigma=0.5, n=20, num_replicates=2)
    SimScenario(**good)
    with pytest.raises(ValueError):
        SimScenario(**{**good, "spacing": "far"})
    with pytest.raises(ValueError):
        SimScenario(**{**good, "nu": 1.0})
    with pytest.raises(ValueError):
        SimScenario(**{**good, "sigma": -0.1})
    with pytest.raises(ValueError):
        SimScenario(**{**good, "n": 1})
    with pytest.raises(ValueError):
        SimScenario(**{**good, "order": 5})
    with pytest.raises(ValueError):
        SimScenario(**{**good, "truth_decay": 0.0})


def small_scenario():
    return SimScenario(
        spacing="well",
        nu=2.0,
        sigma=0.3,
        n=30,
        num_replicates=5,
        seed=11,
        grid_points=101,
        series_terms=30,
    )


def test_run_replicates_structure_and_oracle_dominance():
    batch = run_replicates(small_scenario())
    assert batch.num_failures == 0
    assert len(batch.results) == 5 * len(METHODS)
    by_rep = {}
    for result in batch.results:
        assert result.method in METHODS
        assert result.lam > 0
        assert math.isfinite(result.est_error) and result.est_error >= 0
        assert math.isfinite(result.pred_error) and result.pred_error >= 0
        by_rep.setdefault(result.replicate_index, {})[result.method] = result
    assert sorted(by_rep) == list(range(5))
    for methods in by_rep.values():
        assert len(methods) == len(METHODS)
        # each oracle minimizes its own criterion over the shared lam grid
        best_pred = methods["oracle_pred"].pred_error
        best_est = methods["oracle_est"].est_error
        for result in methods.values():
            assert best_pred <= result.pred_error + 1e-15
            assert best_est <= result.est_error + 1e-15


def test_run_replicates_deterministic():
    a = run_replicates(small_scenario())
    b = run_replicates(small_scenario())
    rows_a = [
        (r.replicate_index, r.method, r.lam, r.est_error, r.pred_error)
        for r in a.results
    ]
    rows_b = [
        (r.replicate_index, r.method, r.lam, r.est_error, r.pred_error)
        for r in b.results
    ]
    assert rows_a == rows_b


def test_fit_rate_exact_on_power_law():
    ns = [50, 100, 200, 500]
    errors = [2.5 * n**-0.7 for n in ns]
    fit = fit_rate(ns, errors)
    assert fit.slope == pytest.approx(-0.7, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(2.5), abs=1e-12)
    assert fit.stderr == pytest.approx(0.0, abs=1e-10)
    assert fit.sample_sizes == (50.0, 100.0, 200.0, 500.0)


def test_fit_rate_validation():
    with pytest.raises(ValueError):
        fit_rate([50, 100], [1.0, 0.5])
    with pytest.raises(ValueError):
        fit_rate([50, 50, 50], [1.0, 0.9, 0.8])
    with pytest.raises(ValueError):
        fit_rate([50, 100, 200], [1.0, -0.5, 0.2])
    with pytest.raises(ValueError):
        fit_rate([50, 100, 200], [1.0, 0.5])
