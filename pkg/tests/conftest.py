import math

import numpy as np
import pytest

from surftrap.electrostatics import VoltageSet, build_basis
from surftrap.geometry import five_rod_profile
from surftrap.pseudopotential import SR88, solve_trap


@pytest.fixture(scope="session")
def l150():
    """Calibrated L150 profile (params, layout); built once per session."""
    return five_rod_profile("L150")


@pytest.fixture(scope="session")
def l150_basis(l150):
    _, layout = l150
    return build_basis(layout)


# The documented standard operating point: the usual +/- pattern at V1 = 25 V
# plus a -1 V center bias (the center electrode's bias is not pinned by the
# trap design; this value puts the principal-axis tilt mid-range).
STANDARD_VOLTAGES = VoltageSet(v_rf=250.0, omega_rf=2.0 * math.pi * 26e6,
                               v1=25.0, v2=25.0, v3=-25.0, v4=-20.0,
                               v_center=-1.0)


@pytest.fixture(scope="session")
def l150_solution(l150_basis):
    return solve_trap(l150_basis, STANDARD_VOLTAGES, SR88, compensate=True)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260809)
