import pytest

from stcontrol import mesh, problem, solver


@pytest.fixture(scope="session")
def static_spec():
    return problem.example1_static()


@pytest.fixture(scope="session")
def moving_spec():
    return problem.example1_moving()


@pytest.fixture(scope="session")
def static_mesh30(static_spec):
    return mesh.build_mesh(static_spec, 30)


@pytest.fixture(scope="session")
def moving_mesh30(moving_spec):
    return mesh.build_mesh(moving_spec, 30)


@pytest.fixture(scope="session")
def static_solution30(static_spec, static_mesh30):
    return solver.solve_optimality(static_mesh30, static_spec)


@pytest.fixture(scope="session")
def moving_solution30(moving_spec, moving_mesh30):
    return solver.solve_optimality(moving_mesh30, moving_spec)
