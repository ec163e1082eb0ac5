import numpy as np
import pytest

from oracles import smd_physical_A
from sparse_hinf.analysis import is_hurwitz
from sparse_hinf.design import DesignOptions
from sparse_hinf.smd import (C0_GRID, GAMMA_GRID, H, SmdConfig, smd_affine, smd_lft, smd_lft_delta,
                             smd_nominal, smd_problem, sweep_gamma, sweep_uncertainty)
from sparse_hinf.system_model import LftPlant, StateSpaceModel


def test_stiffness_matrix_as_printed():
    assert np.array_equal(H, [[-2, 1, 0], [1, -2, 1], [0, 1, -1]])


def test_nominal_structure():
    m = smd_nominal()
    assert m.A.shape == (6, 6)
    assert np.array_equal(m.A[:3, :3], np.zeros((3, 3)))
    assert np.array_equal(m.A[:3, 3:], np.eye(3))
    assert np.array_equal(m.A[3:, :3], H) and np.array_equal(m.A[3:, 3:], H)
    assert np.array_equal(m.C_y, np.eye(6)) and np.array_equal(m.C_z, np.eye(6))
    assert not np.any(m.D_d)
    assert is_hurwitz(m.A)
    assert np.array_equal(m.A, smd_physical_A(np.ones(3), np.ones(3)))


def test_disturbance_scaling():
    m = smd_nominal(0.2)
    assert np.array_equal(m.B_d, np.vstack([np.zeros((3, 3)), 0.2 * np.eye(3)]))
    assert np.array_equal(smd_nominal([1.0, 2.0, 3.0]).B_d[3:], np.diag([1.0, 2.0, 3.0]))
    with pytest.raises(ValueError):
        smd_nominal([1.0, -1.0, 1.0])
    with pytest.raises(ValueError):
        smd_nominal(np.ones((3, 3)))


def test_affine_shapes_and_values():
    u = smd_affine(0.01, 0.02, 0.03)
    assert u.M1.shape == (6, 3) and u.N1.shape == (6, 6) and u.N2.shape == (3, 3)
    assert np.array_equal(u.M1, u.M2)
    assert np.array_equal(u.M1, np.vstack([np.zeros((3, 3)), np.eye(3)]))
    assert np.array_equal(u.N1[:3, :3], 0.01 * H) and np.array_equal(u.N1[3:, 3:], 0.02 * H)
    assert not np.any(u.N1[:3, 3:]) and not np.any(u.N1[3:, :3])
    assert np.array_equal(u.N2, 0.03 * np.eye(3))


def test_affine_zero_is_nominal():
    u = smd_affine(0, 0, 0)
    assert not np.any(u.N1) and not np.any(u.N2)


def test_negative_magnitudes_rejected():
    with pytest.raises(ValueError):
        smd_affine(-0.1, 0, 0)
    with pytest.raises(ValueError):
        smd_lft(0.1, -0.1)
    with pytest.raises(ValueError):
        SmdConfig(c0=-1.0)


def test_lft_reference_instance():
    p = smd_lft(0.1, 0.1, S_d=0.2)
    assert p.n_w == p.n_zd == 6
    assert p.delta_structure == "diagonal"
    assert not np.any(p.E_delta) and not np.any(p.E_d) and not np.any(p.D_delta)
    # each uncertainty input pushes equal and opposite on adjacent masses
    assert np.allclose(p.B_delta[3:].sum(axis=0)[1:3], 0.0) and np.allclose(p.B_delta[3:].sum(axis=0)[4:], 0.0)
    assert not np.any(p.B_delta[:3])


def test_lft_split_validation():
    with pytest.raises(ValueError):
        smd_lft(0.1, 0.1, split="input")


def test_lft_delta_drops_zero_groups():
    d = np.arange(1.0, 7.0) / 10
    assert smd_lft_delta(d, 0.1, 0.0).shape == (3, 3)
    assert np.array_equal(np.diag(smd_lft_delta(d, 0.0, 0.1)), d[3:])
    assert smd_lft_delta(d, 0.0, 0.0).shape == (0, 0)


def test_problem_kinds():
    model, unc = smd_problem("structured", SmdConfig(0.01, 0.02, 0.03))
    assert isinstance(model, StateSpaceModel) and unc is not None
    plant, none = smd_problem("lft", SmdConfig(0.1, 0.1, S_d=0.2))
    assert isinstance(plant, LftPlant) and none is None
    with pytest.raises(ValueError):
        smd_problem("polytopic", SmdConfig())


def test_default_grids():
    assert GAMMA_GRID == (1.0, 0.75, 0.5, 0.25)
    assert C0_GRID == (0.0, 0.1, 0.2, 0.3)


def test_sweep_records_infeasible_point_and_continues():
    opts = DesignOptions(bisect_frontier=False)
    points = sweep_gamma("structured", SmdConfig(), [1e-3, 1.0], opts, n_samples=4)
    bad, good = points
    assert not bad.feasible and bad.status == "Infeasible" and bad.passed is None
    assert good.feasible and good.active_count == 1 and good.passed
    assert [p.sweep_value for p in points] == [1e-3, 1.0]


def test_sweep_uncertainty_endpoint():
    points = sweep_uncertainty("structured", SmdConfig(gamma=1.0), [0.0], n_samples=-1)
    assert points[0].active_count == 1
    assert points[0].report is None and points[0].passed is None
    with pytest.raises(ValueError):
        sweep_uncertainty("structured", SmdConfig(), [])
