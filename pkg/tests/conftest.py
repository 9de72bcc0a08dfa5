import pytest
from hypothesis import strategies as st

from mcstat.model import CodingScenario, EmpiricalRD, FrucScenario, ModelParams, me_error_variance

HALF_PEL = me_error_variance(0.5)


@pytest.fixture
def sec5():
    """Model constants of the theoretical sweeps."""
    return ModelParams(compression=EmpiricalRD(1.0, 10.0))


@pytest.fixture
def coding_fixture():
    """sigma_q^2 = 10 (250 per second at 25 fps), pristine frames, i = 1."""
    return CodingScenario(ModelParams(sigma_q_tilde_sq=250.0), temporal_distance=1)


@pytest.fixture
def fruc_fixture():
    """D = 4, j = 2, sigma_q^2 = 10, sigma_w0^2 = sigma_wj^2 = 2, gamma = 2."""
    return FrucScenario(ModelParams(sigma_q_tilde_sq=250.0, sigma_w_basic_sq=2.0), D=4, j=2)


params_st = st.builds(
    ModelParams,
    sigma_v_sq=st.floats(1.0, 5000.0),
    rho_v=st.floats(0.0, 0.99),
    memory_length=st.integers(1, 8),
    sigma_q_tilde_sq=st.floats(0.0, 500.0),
    frame_rate=st.floats(5.0, 120.0),
    sigma_w_basic_sq=st.floats(0.0, 50.0),
    compression=st.builds(EmpiricalRD, st.floats(0.2, 3.0), st.floats(0.0, 50.0)),
)
rates_st = st.one_of(st.none(), st.floats(0.05, 4.0))
sigma_d_st = st.floats(0.0, 0.5)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
