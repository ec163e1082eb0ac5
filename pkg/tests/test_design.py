import numpy as np
import pytest

from sparse_hinf.analysis import certify
from sparse_hinf.design import (DegenerateSolution, DesignOptions, InfeasibleDesign, design_lft,
                                design_structured, feasibility_frontier, prune_threshold,
                                recover_gain, reweight)
from sparse_hinf.smd import smd_affine, smd_lft


def test_reweight_examples():
    assert np.array_equal(reweight([1.0, 1.0], 1.0), [0.5, 0.5])
    assert np.array_equal(reweight([0.0, 3.0], 1.0), [1.0, 0.25])
    with pytest.raises(ValueError):
        reweight([1.0], 0.0)


def test_reweight_reverses_order(smd_design):
    beta = smd_design.history[0].beta
    rho = reweight(beta, 1e-4 * max(1.0, beta.max()))
    for i in range(beta.size):
        for j in range(beta.size):
            if beta[i] < beta[j]:
                assert rho[i] > rho[j]


def test_recover_gain_examples():
    Y = np.random.default_rng(0).standard_normal((4, 3))
    assert np.allclose(recover_gain(np.eye(4), Y).L, Y, rtol=0, atol=1e-15)
    assert np.allclose(recover_gain(2 * np.eye(4), Y).L, Y / 2, rtol=0, atol=1e-15)


def test_recover_gain_rejects_singular():
    with pytest.raises(DegenerateSolution):
        recover_gain(np.diag([1.0, 0.0]), np.ones((2, 1)))
    with pytest.raises(DegenerateSolution):
        recover_gain(-np.eye(2), np.ones((2, 1)))


def test_gain_residual_on_smd(smd_design):
    Y = smd_design.solution["Y"]
    assert smd_design.gain_residual <= 1e-8 * (1 + np.abs(Y).max())


def test_prune_threshold_floor():
    opts = DesignOptions()
    assert prune_threshold(np.array([1.0, 2.0]), opts) == 2e-5
    assert prune_threshold(np.array([1e-4, 0.0]), opts) == 1e-7


def test_gamma_one_two_sensors(smd_design):
    assert smd_design.active_count == 2
    assert smd_design.refined


def test_gamma_quarter_all_sensors(smd_model, smd_unc):
    assert design_structured(smd_model, smd_unc, 0.25).active_count == 6


def test_nominal_one_sensor(smd_model):
    assert design_structured(smd_model, smd_affine(0, 0, 0), 1.0).active_count == 1


def test_refined_count_not_above_first_iteration(smd_design, lft_design):
    for d in (smd_design, lft_design):
        assert d.active_count <= d.first_active_count


def test_inactive_columns_are_zero(smd_design):
    inactive = ~smd_design.precision.active
    assert np.count_nonzero(inactive) == 4
    assert not np.any(smd_design.gain.L[:, inactive])
    assert np.all(np.any(smd_design.gain.L[:, ~inactive], axis=0))


def test_final_point_satisfies_lmis(smd_design, lft_design):
    for d in (smd_design, lft_design):
        assert d.lmi_max_eigenvalues
        for e, m in zip(d.lmi_max_eigenvalues, d.lmi_margins):
            assert e <= -m / 2


def test_history_records_stages(smd_design):
    stages = [h.stage for h in smd_design.history]
    assert stages[0] == "reweight" and stages[-1] == "refine"
    assert np.array_equal(smd_design.history[0].rho, np.ones(6))


def test_lft_design_certifies(lft_plant, lft_design):
    # pinned regression baseline for the default output-side scaling
    assert lft_design.active_count == 6
    report, _, passed = certify("lft", lft_plant, None, lft_design, 0.2, n_samples=50)
    assert passed, report.summary()


def test_gamma_below_structural_limit_is_infeasible(smd_model):
    opts = DesignOptions(bisect_frontier=False)
    with pytest.raises(InfeasibleDesign) as info:
        design_structured(smd_model, smd_affine(0, 0, 0), 1e-3, opts)
    assert len(info.value.history) == 1
    assert info.value.frontier is None


def test_frontier_reported_with_bounds(smd_model):
    opts = DesignOptions(frontier_bounds=(1e-3, 0.05), frontier_steps=6)
    with pytest.raises(InfeasibleDesign) as info:
        design_structured(smd_model, smd_affine(0, 0, 0), 1e-3, opts)
    f = info.value.frontier
    assert f is not None and 1e-3 < f <= 0.05


def test_gamma_must_be_positive(smd_model, smd_unc, lft_plant):
    with pytest.raises(ValueError):
        design_structured(smd_model, smd_unc, -1.0)
    with pytest.raises(ValueError):
        design_lft(lft_plant, 0.0)


def test_feasibility_frontier_bisection():
    def feasible(g):
        return g >= 0.3

    f = feasibility_frontier(feasible, 0.1, steps=12)
    assert 0.3 <= f <= 0.3 * 2 ** (1 / 2 ** 11)
    assert feasibility_frontier(feasible, 0.1, 0.2) is None


def test_lft_without_uncertainty_matches_structured(smd_model):
    s = design_structured(smd_model, smd_affine(0, 0, 0), 1.0)
    lft = smd_lft(0.0, 0.0)
    assert lft.n_w == 0
    d = design_lft(lft, 1.0)
    assert s.active == d.active
    rs, _, ok_s = certify("structured", smd_model, smd_affine(0, 0, 0), s, 1.0, n_samples=0)
    rl, _, ok_l = certify("lft", lft, None, d, 1.0, n_samples=0)
    assert ok_s and ok_l
    assert abs(rs.nominal_norm - rl.nominal_norm) <= 0.05 * rs.nominal_norm
