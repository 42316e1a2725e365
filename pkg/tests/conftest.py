import pytest

from fractalids.bernstein import BernsteinFunction
from fractalids.geometry import build_fractal_system, sierpinski_gasket, vicsek_set
from fractalids.labeling import construct_good_labeling
from fractalids.spectral import estimate_time_scaling


@pytest.fixture(scope="session")
def gasket():
    return build_fractal_system(sierpinski_gasket(), validation_depth=3)


@pytest.fixture(scope="session")
def glp(gasket):
    return construct_good_labeling(gasket, M=0, search_depth=3)


@pytest.fixture(scope="session")
def scaling(gasket, glp):
    return estimate_time_scaling(gasket, glp, depths=(1, 2, 3, 4))


@pytest.fixture(scope="session")
def tau(scaling):
    return scaling.tau


@pytest.fixture(scope="session")
def gasket_dw(gasket, scaling):
    """Gasket with its measured walk dimension attached."""
    return gasket.with_walk_dimension(scaling.d_w)


@pytest.fixture(scope="session")
def vicsek():
    return build_fractal_system(vicsek_set(), validation_depth=2)


@pytest.fixture(scope="session")
def vicsek_glp(vicsek):
    return construct_good_labeling(vicsek, M=0, search_depth=3)


@pytest.fixture
def identity():
    return BernsteinFunction.identity()


@pytest.fixture
def stable_half():
    return BernsteinFunction.stable(0.5)


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance():
    """Record one pass/fail line per acceptance criterion; returns the verdict."""

    def record(label, ok, detail):
        _ACCEPTANCE.append(f"{label:<34} {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
