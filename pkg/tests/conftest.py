import numpy as np
import pytest

from knwidth.fem import build_dofmap
from knwidth.mesh import BoundarySpec, generate_obstacle_channel, generate_rectangle, generate_step_domain

# criterion number -> (passed, detail); filled by test_acceptance, printed at the end
ACCEPTANCE_RESULTS: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: (int(str(k).split(".")[0]), str(k))):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")


def all_dirichlet(mesh):
    return BoundarySpec.all_dirichlet(mesh)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def square4():
    return generate_rectangle(1.0, 1.0, 4)


@pytest.fixture(scope="session")
def square4_dofmap(square4):
    return build_dofmap(square4, all_dirichlet(square4))


@pytest.fixture(scope="session")
def step_coarse():
    return generate_step_domain(1.0)


@pytest.fixture(scope="session")
def step_mixed_dofmap(step_coarse):
    kinds = {"inlet": "neumann", "outlet": "neumann", "wall": "dirichlet",
             "step_vertical": "dirichlet", "step_horizontal": "dirichlet"}
    return build_dofmap(step_coarse, BoundarySpec(kinds))


@pytest.fixture(scope="session")
def obstacle_coarse():
    return generate_obstacle_channel(0.04)


@pytest.fixture(scope="session")
def obstacle_coarse_dofmap(obstacle_coarse):
    return build_dofmap(obstacle_coarse, all_dirichlet(obstacle_coarse))


@pytest.fixture(scope="session")
def tiny_dofmap():
    # two triangles, Neumann on the left side: 4 free velocity dofs
    m = generate_rectangle(1.0, 1.0, 1)
    return build_dofmap(m, BoundarySpec({"bottom": "dirichlet", "right": "dirichlet",
                                         "top": "dirichlet", "left": "neumann"}))
