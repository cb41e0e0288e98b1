import numpy as np
import pytest

from rkhsflr.errors import DegenerateDesignError, DerivativeOrderError
from rkhsflr.estimator import (
    FLRConfig,
    LambdaSearch,
    SolverWorkspace,
    _argmin_last,
    assemble_sigma,
    assemble_t_matrix,
    evaluate_beta,
    evaluate_beta_derivative,
    gcv_score,
    hat_matrix,
    predict,
    select_lambda_gcv,
    solve,
)
from rkhsflr.grid import Curve, center_dataset, dataset_from_matrix, make_uniform_grid
from rkhsflr.kernels import SobolevKernel, kernel_matrix, null_space_basis


def make_dataset(n=20, num_points=51, seed=3, decay=1.5):
    """Smooth random curves with responses from a fixed functional."""
    rng = np.random.default_rng(seed)
    grid = make_uniform_grid(num_points)
    k = np.arange(1, 9, dtype=float)
    basis = np.sqrt(2.0) * np.cos(np.outer(grid.points, k) * np.pi)
    scores = rng.normal(size=(n, k.size)) * k[None, :] ** -decay
    curves = scores @ basis.T + rng.normal(size=(n, 1))
    beta = np.sin(2.0 * np.pi * grid.points)
    responses = curves @ (grid.weights * beta) + 0.1 * rng.normal(size=n)
    return dataset_from_matrix(grid, curves, responses)


def centered_quantities(dataset, order=2):
    _, _, centered = center_dataset(dataset)
    kern = SobolevKernel.of_order(order)
    return centered, kern


def test_sigma_matches_direct_double_quadrature():
    dataset = make_dataset()
    centered, kern = centered_quantities(dataset)
    sigma = assemble_sigma(centered, kern)
    grid = dataset.grid
    kmat = kernel_matrix(kern, grid.points, grid.points)
    x = centered.curve_matrix
    w = grid.weights
    # independent route: plain dense weighted product, no triangular reuse
    oracle = (x * w[None, :]) @ kmat @ (x * w[None, :]).T
    scale = np.abs(oracle).max()
    assert np.abs(sigma - oracle).max() < 1e-12 * scale
    assert np.array_equal(sigma, sigma.T)


def test_t_matrix_matches_direct_quadrature():
    dataset = make_dataset()
    centered, _ = centered_quantities(dataset)
    tmat = assemble_t_matrix(centered, 3)
    grid = dataset.grid
    basis = null_space_basis(3, grid)
    oracle = np.array(
        [
            [float(np.dot(grid.weights, row * basis[:, q])) for q in range(3)]
            for row in centered.curve_matrix
        ]
    )
    assert np.abs(tmat - oracle).max() < 1e-14


def test_solve_first_order_conditions():
    dataset = make_dataset()
    fit = solve(dataset, FLRConfig(order=2, lam=1e-4))
    centered, kern = centered_quantities(dataset)
    n = dataset.num_curves
    sigma = assemble_sigma(centered, kern)
    tmat = assemble_t_matrix(centered, 2)
    ytilde = centered.responses
    resid = ytilde - tmat @ fit.d - sigma @ fit.c
    # stationarity of the penalized least squares objective:
    # residual = n lam c and the polynomial block sees no residual
    assert np.abs(resid - n * fit.lam * fit.c).max() < 1e-10 * (1 + np.abs(ytilde).max())
    assert np.abs(tmat.T @ fit.c).max() < 1e-8 * (1 + np.abs(ytilde).max())


def test_intercept_recovers_response_mean_route():
    dataset = make_dataset()
    fit = solve(dataset, FLRConfig(order=2, lam=1e-4))
    grid = dataset.grid
    mean_curve = dataset.curve_matrix.mean(axis=0)
    integral = float(np.dot(grid.weights, mean_curve * fit.beta_values))
    assert fit.alpha_hat == pytest.approx(dataset.responses.mean() - integral, abs=1e-10)


def test_polynomial_response_is_recovered_exactly_for_any_lambda():
    # responses built from a null-space coefficient function: the kernel
    # part must vanish and the polynomial part must be exact at every lam
    dataset = make_dataset(seed=9)
    grid = dataset.grid
    d0 = np.array([0.7, -1.3])
    beta0 = d0[0] + d0[1] * grid.points
    responses = dataset.curve_matrix @ (grid.weights * beta0)
    clean = dataset_from_matrix(grid, dataset.curve_matrix, responses)
    for lam in (1e-6, 1e-3, 10.0):
        fit = solve(clean, FLRConfig(order=2, lam=lam))
        assert np.abs(fit.c).max() < 1e-9
        assert np.abs(fit.d - d0).max() < 1e-8
        assert np.abs(fit.beta_values - beta0).max() < 1e-8


def test_large_lambda_limit_matches_polynomial_least_squares():
    dataset = make_dataset()
    fit = solve(dataset, FLRConfig(order=2, lam=1e6))
    centered, _ = centered_quantities(dataset)
    tmat = assemble_t_matrix(centered, 2)
    coef, *_ = np.linalg.lstsq(tmat, centered.responses, rcond=None)
    assert np.abs(fit.d - coef).max() < 1e-4
    grid = dataset.grid
    poly = coef[0] + coef[1] * grid.points
    assert np.abs(fit.beta_values - poly).max() < 1e-3


def test_hat_matrix_reproduces_fitted_values():
    dataset = make_dataset()
    lam = 3e-4
    centered, kern = centered_quantities(dataset)
    fit = solve(dataset, FLRConfig(order=2, lam=lam))
    sigma = assemble_sigma(centered, kern)
    tmat = assemble_t_matrix(centered, 2)
    fitted = tmat @ fit.d + sigma @ fit.c
    hmat = hat_matrix(dataset, kern, lam)
    assert np.abs(hmat @ centered.responses - fitted).max() < 1e-10 * (
        1 + np.abs(centered.responses).max()
    )
    assert abs(np.trace(hmat) - fit.hat_trace) < 1e-8


def test_hat_matrix_linearity_probe():
    # the map ytilde -> fitted values is linear; probing with unit vectors
    # must rebuild the same matrix column by column
    dataset = make_dataset(n=10, num_points=31)
    lam = 1e-3
    centered, kern = centered_quantities(dataset)
    hmat = hat_matrix(dataset, kern, lam)
    sigma = assemble_sigma(centered, kern)
    tmat = assemble_t_matrix(centered, 2)
    n = dataset.num_curves
    w = sigma + n * lam * np.eye(n)
    winv = np.linalg.inv(w)
    proj = np.linalg.solve(tmat.T @ winv @ tmat, tmat.T @ winv)
    for j in range(n):
        unit = np.zeros(n)
        unit[j] = 1.0
        d = proj @ unit
        c = winv @ (unit - tmat @ d)
        column = tmat @ d + sigma @ c
        assert np.abs(hmat[:, j] - column).max() < 1e-9


def test_gcv_score_matches_brute_force():
    dataset = make_dataset()
    centered, kern = centered_quantities(dataset)
    n = dataset.num_curves
    ytilde = centered.responses
    for lam in (1e-6, 1e-3, 1.0):
        hmat = hat_matrix(dataset, kern, lam)
        resid = ytilde - hmat @ ytilde
        expected = (float(resid @ resid) / n) / (1.0 - np.trace(hmat) / n) ** 2
        assert gcv_score(dataset, kern, lam) == pytest.approx(expected, rel=1e-9)


def test_gcv_large_lambda_matches_polynomial_formula():
    dataset = make_dataset()
    centered, kern = centered_quantities(dataset)
    tmat = assemble_t_matrix(centered, 2)
    ytilde = centered.responses
    n = dataset.num_curves
    proj = tmat @ np.linalg.solve(tmat.T @ tmat, tmat.T @ ytilde)
    resid = ytilde - proj
    expected = float(resid @ resid) * n / (n - 2) ** 2
    assert gcv_score(dataset, kern, 1e6) == pytest.approx(expected, rel=0.02)


def test_hat_trace_respects_centering_cap():
    # centering removes one dimension, so effective degrees of freedom can
    # never reach n: the gcv denominator stays bounded away from zero and
    # the undefined-GCV guard is purely defensive
    dataset = make_dataset(n=6, num_points=41)
    centered, kern = centered_quantities(dataset)
    for lam in (1e-12, 1e-6, 1.0):
        trace = np.trace(hat_matrix(dataset, kern, lam))
        assert 2.0 - 1e-8 <= trace <= dataset.num_curves - 1 + 1e-6
    assert np.isfinite(gcv_score(dataset, kern, 1e-12))


def test_degenerate_design_raises():
    grid = make_uniform_grid(21)
    matrix = np.tile(np.sin(grid.points), (4, 1))
    data = dataset_from_matrix(grid, matrix, np.arange(4.0))
    with pytest.raises(DegenerateDesignError):
        solve(data, FLRConfig(order=2, lam=1e-3))


def test_config_validation():
    with pytest.raises(ValueError):
        FLRConfig(order=2, lam=1e-3, search=LambdaSearch())
    with pytest.raises(ValueError):
        FLRConfig(order=2, lam=-1.0)
    with pytest.raises(ValueError):
        FLRConfig(order=0, lam=1e-3)
    with pytest.raises(ValueError):
        LambdaSearch(lambda_min=1.0, lambda_max=0.1)


def test_workspace_batch_agrees_with_direct_solve():
    dataset = make_dataset()
    centered, kern = centered_quantities(dataset)
    workspace = SolverWorkspace(dataset, kern)
    lams = np.array([1e-6, 1e-4, 1e-2, 1.0])
    path = workspace.batch(lams)
    for j, lam in enumerate(lams):
        fit = solve(dataset, FLRConfig(order=2, lam=float(lam)))
        assert path.valid[j]
        assert np.abs(path.d[j] - fit.d).max() < 1e-10 * (1 + np.abs(fit.d).max())
        assert np.abs(path.c[j] - fit.c).max() < 1e-8 * (1 + np.abs(fit.c).max())
        assert np.abs(path.beta[j] - fit.beta_values).max() < 1e-9 * (
            1 + np.abs(fit.beta_values).max()
        )
        assert path.hat_trace[j] == pytest.approx(fit.hat_trace, rel=1e-9)
        assert path.gcv[j] == pytest.approx(fit.gcv_value, rel=1e-9)
        assert workspace.gcv_at(float(lam)) == pytest.approx(
            gcv_score(dataset, kern, float(lam)), rel=1e-9
        )


def test_select_lambda_gcv_minimizes_over_grid():
    dataset = make_dataset()
    kern = SobolevKernel.of_order(2)
    search = LambdaSearch(lambda_min=1e-7, lambda_max=1e2, num_points=25, refine=False)
    lam_hat, profile = select_lambda_gcv(dataset, kern, search)
    lams = np.array([p[0] for p in profile])
    scores = np.array([gcv_score(dataset, kern, lam) for lam in lams])
    best = int(scores.size - 1 - np.argmin(scores[::-1]))
    assert lam_hat == pytest.approx(lams[best], rel=1e-12)
    assert np.allclose([p[1] for p in profile], scores, rtol=1e-9)


def test_select_lambda_refinement_only_improves():
    dataset = make_dataset()
    kern = SobolevKernel.of_order(2)
    coarse = LambdaSearch(lambda_min=1e-7, lambda_max=1e2, num_points=12, refine=False)
    refined = LambdaSearch(lambda_min=1e-7, lambda_max=1e2, num_points=12, refine=True)
    lam_coarse, profile = select_lambda_gcv(dataset, kern, coarse)
    lam_refined, _ = select_lambda_gcv(dataset, kern, refined)
    assert gcv_score(dataset, kern, lam_refined) <= gcv_score(dataset, kern, lam_coarse)
    grid_lams = [p[0] for p in profile]
    assert grid_lams[0] == pytest.approx(1e-7) and grid_lams[-1] == pytest.approx(1e2)


def test_argmin_ties_go_to_the_last_entry():
    assert _argmin_last(np.array([3.0, 1.0, 1.0, 2.0])) == 2
    assert _argmin_last(np.array([1.0, 1.0, 1.0])) == 2
    assert _argmin_last(np.array([2.0, 1.0, 3.0])) == 1


def test_solve_with_search_equals_manual_selection():
    dataset = make_dataset()
    kern = SobolevKernel.of_order(2)
    search = LambdaSearch(lambda_min=1e-7, lambda_max=1e1, num_points=20, refine=False)
    fit = solve(dataset, FLRConfig(order=2, search=search))
    lam_hat, _ = select_lambda_gcv(dataset, kern, search)
    assert fit.lam == pytest.approx(lam_hat, rel=1e-12)


def test_evaluate_beta_interpolates_fit_values():
    dataset = make_dataset()
    fit = solve(dataset, FLRConfig(order=2, lam=1e-4))
    values = evaluate_beta(fit, dataset.grid.points)
    assert np.abs(values - fit.beta_values).max() < 1e-12
    assert isinstance(evaluate_beta(fit, 0.5), float)


def test_beta_derivative_matches_finite_differences():
    dataset = make_dataset()
    fit = solve(dataset, FLRConfig(order=3, lam=1e-4))
    h = 1e-5
    for t in (0.2, 0.5, 0.8):
        fd1 = (evaluate_beta(fit, t + h) - evaluate_beta(fit, t - h)) / (2 * h)
        assert evaluate_beta_derivative(fit, t, 1) == pytest.approx(fd1, abs=1e-4)
        fd2 = (
            evaluate_beta(fit, t + h)
            - 2 * evaluate_beta(fit, t)
            + evaluate_beta(fit, t - h)
        ) / h**2
        assert evaluate_beta_derivative(fit, t, 2) == pytest.approx(fd2, abs=1e-3)
    with pytest.raises(DerivativeOrderError):
        evaluate_beta_derivative(fit, 0.5, 3)


def test_predict_matches_manual_integral():
    dataset = make_dataset()
    fit = solve(dataset, FLRConfig(order=2, lam=1e-4))
    grid = dataset.grid
    curve = Curve(grid, np.cos(3 * grid.points))
    expected = fit.alpha_hat + float(
        np.dot(grid.weights, curve.values * fit.beta_values)
    )
    assert predict(fit, curve) == pytest.approx(expected, rel=1e-12)
    batch = predict(fit, dataset)
    manual = fit.alpha_hat + dataset.curve_matrix @ (grid.weights * fit.beta_values)
    assert np.abs(batch - manual).max() < 1e-10


def test_training_predictions_match_hat_route():
    dataset = make_dataset()
    lam = 2e-4
    fit = solve(dataset, FLRConfig(order=2, lam=lam))
    centered, kern = centered_quantities(dataset)
    hmat = hat_matrix(dataset, kern, lam)
    hat_route = dataset.responses.mean() + hmat @ centered.responses
    assert np.abs(predict(fit, dataset) - hat_route).max() < 1e-9
