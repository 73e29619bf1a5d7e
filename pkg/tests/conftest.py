"""Shared fixtures: a few solved fields that several test files reuse.

Everything here is cheap (coarse meshes); the expensive adaptive runs
live in test_acceptance.py behind module-scoped fixtures of their own.
"""

import numpy as np
import pytest

from goalfem.benchmarks import make_case
from goalfem.mesh import uniform_refine


@pytest.fixture(scope="session")
def cyl_case():
    return make_case("cyl_1a")


@pytest.fixture(scope="session")
def cyl_field(cyl_case):
    """Primal solution on the coarse start mesh of the annulus."""
    return cyl_case.solve(cyl_case.initial_mesh())


@pytest.fixture(scope="session")
def cyl_field_fine(cyl_case):
    """Primal solution one uniform refinement up (256 elements)."""
    return cyl_case.solve(uniform_refine(cyl_case.initial_mesh()))


@pytest.fixture
def rng():
    return np.random.default_rng(20260823)
