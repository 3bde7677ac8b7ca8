import pytest

from divctl.params import ModelParams
from divctl.solver import solve

BASE = dict(mu1=4.0, mu2=2.0, sigma1=1.5, sigma2=1.0, rho=0.6, beta=0.5, a=0.3, cbar1=3.0, cbar2=2.0)

FIGURES = {
    "figure2": BASE,
    "figure3": dict(BASE, cbar2=1.0),
    "figure4": dict(BASE, cbar1=1.5, cbar2=1.0),
    "figure5": dict(BASE, mu1=1.5),
    "figure6": dict(BASE, mu1=2.0, mu2=4.0, sigma1=1.0, sigma2=1.5, rho=-0.6),
}


def figure_params(name: str) -> ModelParams:
    return ModelParams(**FIGURES[name])


@pytest.fixture(scope="session")
def policies():
    return {name: solve(figure_params(name)) for name in FIGURES}


@pytest.fixture(scope="session")
def fig2(policies):
    return policies["figure2"]


@pytest.fixture(scope="session")
def fig3(policies):
    return policies["figure3"]


@pytest.fixture(scope="session")
def fig4(policies):
    return policies["figure4"]


# One status line per acceptance criterion, printed at the end of the run.
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
