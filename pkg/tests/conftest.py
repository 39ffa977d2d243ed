import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from jkoflow.potential_net import NetConfig, init_params, pack, unpack

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_theta(net: NetConfig, **fields):
    """All-zero parameters with selected named blocks overwritten."""
    parts = unpack(np.zeros(sum(int(np.prod(s)) for _, s in net.layout())), net)
    parts = {k: np.array(v) for k, v in parts.items()}
    for name, value in fields.items():
        parts[name] = np.broadcast_to(np.asarray(value, dtype=np.float64), parts[name].shape).copy()
    return pack(parts, net)


def quadratic_theta(net: NetConfig):
    """Phi = |s|^2 / 2, so v = -z."""
    return make_theta(net, A=np.eye(net.d + 1))


def small_random_theta(net: NetConfig, seed, scale=0.3):
    """Random parameters with every block active, including w, b and c."""
    rng = np.random.default_rng(seed)
    theta = init_params(net, seed)
    return theta + scale * rng.standard_normal(theta.shape)


@pytest.fixture
def net2():
    return NetConfig(d=2, m=3)


# -- acceptance report ----------------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion gate")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    n, title = mark.args
    details = [v for k, v in item.user_properties if k == "detail"]
    _CRITERIA[n] = (title, call.excinfo is None, details)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok, details = _CRITERIA[n]
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {title}"
        if details:
            line += "  [" + "; ".join(details) + "]"
        terminalreporter.write_line(line)
