import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from sparse_hinf.design import design_lft, design_structured  # noqa: E402
from sparse_hinf.smd import smd_affine, smd_lft, smd_nominal  # noqa: E402

SMD_C = (0.01, 0.02, 0.03)


@pytest.fixture(scope="session")
def smd_model():
    return smd_nominal()


@pytest.fixture(scope="session")
def smd_unc():
    return smd_affine(*SMD_C)


@pytest.fixture(scope="session")
def smd_design(smd_model, smd_unc):
    return design_structured(smd_model, smd_unc, 1.0)


@pytest.fixture(scope="session")
def lft_plant():
    return smd_lft(0.1, 0.1, S_d=0.2)


@pytest.fixture(scope="session")
def lft_design(lft_plant):
    return design_lft(lft_plant, 0.2)
