"""Discretization/approximation error functionals and their identities."""

import math

import numpy as np
import pytest

from oracles import (
    GAUSS_GRID_124_DISC,
    gauss_disc_error,
    gauss_mmse,
    gauss_mmse_integral,
    ratio_sum,
)
from snrsched import FiniteDiscrete, GaussianMixture
from snrsched.channel import MmseCurve
from snrsched.functionals import (
    ErrorReport,
    LossProfile,
    SnrGrid,
    apx_error,
    combined_objective,
    disc_error,
    eps_to_x0,
    error_report,
    final_bounds,
    pathwise_kl_mc,
)

TWO = FiniteDiscrete(points=[[-1.0], [1.0]], probs=[0.5, 0.5])


def single_gauss(sigma0=1.0, d=1):
    return GaussianMixture(weights=[1.0], means=[np.zeros(d)], sigmas=[sigma0])


# ---------------------------------------------------------------------------
# SnrGrid


def test_grid_derived_fields():
    g = SnrGrid([1.0, 2.0, 4.0])
    assert g.K == 2
    assert g.T == 1.0
    assert g.delta == 0.25
    assert g.Lambda == pytest.approx(4.0, rel=1e-15)
    np.testing.assert_allclose(g.ratios, [2.0, 2.0], rtol=1e-15)
    np.testing.assert_allclose(g.log_steps, [math.log(2)] * 2, rtol=1e-14)


def test_grid_times_pin_endpoints():
    g = SnrGrid(np.geomspace(0.5, 800.0, 7))
    s = g.times
    assert s[0] == 0.0
    assert s[-1] == pytest.approx(g.T - g.delta, abs=1e-12)
    assert np.all(np.diff(s) > 0)


def test_grid_lambda_is_ratio_product():
    g = SnrGrid(np.geomspace(0.25, 1000.0, 9))
    assert g.Lambda == pytest.approx(float(np.prod(g.ratios)), rel=1e-9)


def test_grid_rejects_non_ascending():
    with pytest.raises(ValueError):
        SnrGrid([1.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        SnrGrid([2.0, 1.0])
    with pytest.raises(ValueError):
        SnrGrid([-1.0, 1.0])


def test_grid_is_geometric_flag():
    assert SnrGrid(np.geomspace(1, 100, 5)).is_geometric()
    assert not SnrGrid([1.0, 2.0, 100.0]).is_geometric()


# ---------------------------------------------------------------------------
# eps <-> x0 conversion


def test_eps_to_x0_examples():
    assert eps_to_x0(2.0, 4.0) == 0.5
    assert eps_to_x0(1.37, 1.0) == 1.37


def test_eps_to_x0_ddpm_alpha_bar():
    # abar = 0.8 corresponds to gamma = abar/(1-abar) = 4
    abar = 0.8
    gamma = abar / (1.0 - abar)
    assert eps_to_x0(2.0, gamma) == pytest.approx(0.5, rel=1e-15)


def test_eps_to_x0_vectorized():
    out = eps_to_x0(np.array([2.0, 3.0]), np.array([4.0, 3.0]))
    np.testing.assert_allclose(out, [0.5, 1.0], rtol=1e-15)


# ---------------------------------------------------------------------------
# disc_error


def test_disc_error_closed_form_124():
    got = disc_error(single_gauss(), SnrGrid([1.0, 2.0, 4.0]))
    assert got == pytest.approx(GAUSS_GRID_124_DISC, abs=1e-12)
    assert got == pytest.approx(0.250376, abs=5e-7)


def test_disc_error_point_mass_zero():
    pm = FiniteDiscrete(points=[[1.0, 2.0]], probs=[1.0])
    assert disc_error(pm, SnrGrid([0.5, 50.0])) == pytest.approx(0.0, abs=1e-12)


def test_disc_error_random_gaussian_grids_match_oracle():
    rng = np.random.default_rng(8)
    for _ in range(10):
        sigma0 = float(rng.uniform(0.3, 2.0))
        d = int(rng.integers(1, 4))
        knots = np.sort(np.exp(rng.uniform(-1.5, 5.0, size=int(rng.integers(2, 7)))))
        while np.any(np.diff(knots) <= 1e-9):
            knots = np.sort(np.exp(rng.uniform(-1.5, 5.0, size=knots.size)))
        got = disc_error(single_gauss(sigma0, d), SnrGrid(knots))
        assert got == pytest.approx(gauss_disc_error(sigma0, d, knots), abs=1e-10)
        assert got >= 0.0


def test_disc_error_nonnegative_two_atom():
    grid = SnrGrid(np.geomspace(0.5, 8.0, 5))
    assert disc_error(MmseCurve(TWO, policy="quadrature"), grid) >= 0.0


# ---------------------------------------------------------------------------
# apx_error


def test_apx_error_exact_profile_is_zero():
    curve = MmseCurve(single_gauss())
    grid = SnrGrid([1.0, 2.0, 4.0])
    loss = LossProfile.from_curve(curve, grid.gammas)
    assert apx_error(loss, curve, grid) == pytest.approx(0.0, abs=1e-12)


def test_apx_error_constant_excess():
    curve = MmseCurve(single_gauss())
    grid = SnrGrid([1.0, 2.0, 4.0])
    losses = np.array([gauss_mmse(1.0, 1, g) + 0.1 for g in grid.gammas])
    loss = LossProfile(gammas=grid.gammas, losses=losses, kinds=("x0",) * 3)
    assert apx_error(loss, curve, grid) == pytest.approx(0.3, abs=1e-12)


def test_apx_error_geometric_form_agrees():
    """Constant eps-level excess: both report forms give the same number."""
    curve = MmseCurve(single_gauss())
    grid = SnrGrid([1.0, 10.0, 100.0])  # Lambda=100, K=2
    c = 0.05  # eps_k = gamma_{k-1} * (L - mmse) = c at every level
    losses = np.array([gauss_mmse(1.0, 1, g) + c / g for g in grid.gammas])
    loss = LossProfile(gammas=grid.gammas, losses=losses, kinds=("x0",) * 3)
    detail = apx_error(loss, curve, grid, detail=True)
    np.testing.assert_allclose(detail["eps_terms"], [c, c], rtol=1e-9)
    assert detail["geometric_form"] == pytest.approx(9.0 * 2 * c, rel=1e-9)
    assert detail["value"] == pytest.approx(detail["geometric_form"], rel=1e-9)
    assert detail["n_clamped"] == 0


def test_apx_error_clamps_negative_excess():
    curve = MmseCurve(single_gauss())
    grid = SnrGrid([1.0, 2.0, 4.0])
    losses = np.array([gauss_mmse(1.0, 1, g) - 0.01 for g in grid.gammas])
    loss = LossProfile(gammas=grid.gammas, losses=losses, kinds=("x0",) * 3)
    detail = apx_error(loss, curve, grid, detail=True)
    assert detail["value"] == 0.0
    assert detail["n_clamped"] == 2


# ---------------------------------------------------------------------------
# combined objective and the decomposition identity


def test_combined_objective_constant_loss_telescopes():
    c = 0.37
    for knots in ([1.0, 2.0, 4.0], [1.0, 1.1, 3.9, 4.0]):
        grid = SnrGrid(knots)
        loss = LossProfile(
            gammas=grid.gammas,
            losses=np.full(len(knots), c),
            kinds=("x0",) * len(knots),
        )
        want = c * (knots[-1] - knots[0])
        assert combined_objective(loss, grid) == pytest.approx(want, rel=1e-12)


def test_combined_objective_exact_loss_124():
    curve = MmseCurve(single_gauss())
    grid = SnrGrid([1.0, 2.0, 4.0])
    loss = LossProfile.from_curve(curve, grid.gammas)
    assert combined_objective(loss, grid) == pytest.approx(7.0 / 6.0, rel=1e-12)


def test_decomposition_identity_single_case():
    sigma0 = 0.8
    curve = MmseCurve(single_gauss(sigma0))
    grid = SnrGrid([0.5, 1.7, 6.0, 30.0])
    losses = np.array([gauss_mmse(sigma0, 1, g) + e for g, e in
                       zip(grid.gammas, (0.02, 0.0, 0.11, 0.05))])
    loss = LossProfile(gammas=grid.gammas, losses=losses, kinds=("x0",) * 4)
    lhs = combined_objective(loss, grid) - gauss_mmse_integral(
        sigma0, 1, grid.gammas[0], grid.gammas[-1]
    )
    rhs = disc_error(curve, grid) + apx_error(loss, curve, grid)
    assert lhs == pytest.approx(rhs, abs=1e-9)


# ---------------------------------------------------------------------------
# final bounds


def test_final_bounds_geo_term_81():
    out = final_bounds(SnrGrid([1.0, 10.0, 100.0]), H=1.0, C_fit=1.0, eps_bar=0.0)
    assert out["geo_disc_bound"] == pytest.approx(81.0, rel=1e-12)
    assert out["disc_bound"] == pytest.approx(81.0, rel=1e-12)


def test_final_bounds_geometric_equality():
    grid = SnrGrid(np.geomspace(0.5, 500.0, 11))
    out = final_bounds(grid, H=0.9, C_fit=1.3, eps_bar=0.1)
    assert out["disc_bound"] == pytest.approx(out["geo_disc_bound"], rel=1e-12)


def test_final_bounds_geometric_among_random_grids():
    rng = np.random.default_rng(17)
    lo, hi, K = 1.0, 250.0, 4
    geo = final_bounds(SnrGrid(np.geomspace(lo, hi, K + 1)), 1.0, 1.0, 0.0)
    for _ in range(20):
        interior = np.sort(rng.uniform(lo, hi, size=K - 1))
        while np.any(np.diff(np.r_[lo, interior, hi]) <= 0):
            interior = np.sort(rng.uniform(lo, hi, size=K - 1))
        grid = SnrGrid(np.r_[lo, interior, hi])
        got = final_bounds(grid, 1.0, 1.0, 0.0)
        assert got["disc_bound"] >= geo["disc_bound"] - 1e-12
        assert got["disc_bound"] == pytest.approx(
            0.5 * ratio_sum(grid.gammas), rel=1e-12
        )


def test_final_bounds_applicability_flag():
    # Lambda=100 needs K >= ln(100) ~ 4.6
    assert not final_bounds(SnrGrid(np.geomspace(1, 100, 4)), 1.0, 1.0, 0.1)[
        "kl_total_applicable"
    ]
    assert final_bounds(SnrGrid(np.geomspace(1, 100, 6)), 1.0, 1.0, 0.1)[
        "kl_total_applicable"
    ]


# ---------------------------------------------------------------------------
# pathwise Monte-Carlo route


def test_pathwise_kl_point_mass_zero():
    pm = FiniteDiscrete(points=[[0.5]], probs=[1.0])
    v, se = pathwise_kl_mc(pm, SnrGrid([1.0, 4.0, 16.0]), n_paths=500, seed=0)
    assert v == pytest.approx(0.0, abs=1e-20)
    assert se == pytest.approx(0.0, abs=1e-20)


def test_pathwise_kl_single_gaussian_half_disc():
    v, se = pathwise_kl_mc(
        single_gauss(), SnrGrid([1.0, 2.0, 4.0]), n_paths=50_000, substeps=16, seed=4
    )
    assert abs(2.0 * v - GAUSS_GRID_124_DISC) <= 3.0 * 2.0 * se


def test_pathwise_kl_two_atom_matches_area_gap():
    grid = SnrGrid(np.geomspace(0.5, 8.0, 5))
    want = disc_error(MmseCurve(TWO, policy="quadrature"), grid)
    v, se = pathwise_kl_mc(TWO, grid, n_paths=50_000, substeps=128, seed=11)
    assert abs(2.0 * v - want) <= 3.0 * 2.0 * se


def test_pathwise_kl_deterministic_given_seed():
    a = pathwise_kl_mc(single_gauss(), SnrGrid([1.0, 4.0]), n_paths=4000, seed=5)
    b = pathwise_kl_mc(single_gauss(), SnrGrid([1.0, 4.0]), n_paths=4000, seed=5)
    assert a == b


def test_pathwise_kl_rejects_bad_config():
    with pytest.raises(ValueError):
        pathwise_kl_mc(single_gauss(), SnrGrid([1.0, 4.0]), n_paths=0)
    with pytest.raises(ValueError):
        pathwise_kl_mc(single_gauss(), SnrGrid([1.0, 4.0]), n_paths=10, substeps=2)


# ---------------------------------------------------------------------------
# loss profiles


def test_loss_profile_csv_round_trip(tmp_path):
    path = tmp_path / "loss.csv"
    prof = LossProfile(
        gammas=np.array([0.5, 2.0, 8.0]),
        losses=np.array([1.25, 0.3333333333333333, 0.07]),
        kinds=("x0", "eps", "x0"),
    )
    prof.to_csv(path)
    back = LossProfile.from_csv(path)
    np.testing.assert_array_equal(back.gammas, prof.gammas)
    np.testing.assert_array_equal(back.losses, prof.losses)
    assert back.kinds == prof.kinds


def test_loss_profile_csv_comments_and_header(tmp_path):
    path = tmp_path / "loss.csv"
    path.write_text("# fitted on run 12\ngamma,loss,kind\n1.0,0.5,x0\n4.0,2.0,eps\n")
    prof = LossProfile.from_csv(path)
    np.testing.assert_allclose(prof.x0_losses, [0.5, 0.5])  # eps/gamma at knot


def test_loss_profile_rejects_descending(tmp_path):
    path = tmp_path / "loss.csv"
    path.write_text("gamma,loss,kind\n4.0,0.5,x0\n1.0,1.0,x0\n")
    with pytest.raises(ValueError):
        LossProfile.from_csv(path)


def test_loss_profile_log_linear_interpolation():
    prof = LossProfile(
        gammas=np.array([1.0, 4.0]), losses=np.array([1.0, 3.0]), kinds=("x0", "x0")
    )
    assert prof.x0_at(2.0) == pytest.approx(2.0, rel=1e-12)  # midpoint in ln gamma


def test_loss_profile_no_silent_extrapolation():
    prof = LossProfile(
        gammas=np.array([1.0, 4.0]), losses=np.array([1.0, 3.0]), kinds=("x0", "x0")
    )
    with pytest.raises(ValueError):
        prof.x0_at(0.5)
    with pytest.raises(ValueError):
        prof.x0_at(5.0)


# ---------------------------------------------------------------------------
# reports


def test_error_report_kl_is_half_sum():
    curve = MmseCurve(single_gauss())
    grid = SnrGrid([1.0, 2.0, 4.0])
    losses = np.array([gauss_mmse(1.0, 1, g) + 0.1 for g in grid.gammas])
    loss = LossProfile(gammas=grid.gammas, losses=losses, kinds=("x0",) * 3)
    rep = error_report(curve, grid, loss)
    assert rep.kl_path_bound == (rep.e_disc + rep.e_apx) / 2.0
    assert rep.provenance["e_disc"] == "mmse_functional"


def test_error_report_two_term_with_entropy():
    grid = SnrGrid(np.geomspace(1.0, 100.0, 7))  # K=6 >= ln(100)
    rep = error_report(MmseCurve(single_gauss()), grid, None, H=0.8)
    assert rep.two_term["applicable"]
    assert rep.two_term["kl_total"] == pytest.approx(
        rep.two_term["disc_term"] + rep.two_term["stat_term"], rel=1e-12
    )


def test_error_report_json_round_trip():
    rep = ErrorReport(e_disc=0.25, e_apx=0.5, kl_path_bound=0.375)
    obj = rep.to_json_dict()
    assert obj["e_disc"] == 0.25
    assert obj["kl_path_bound"] == 0.375
