import numpy as np
import pytest

from oran_energy.optimizer import ProblemInstance

EPS = 1e-3


def random_instance(rng, m, n, n_levels, *, eps=EPS, max_demand=40e6, homogeneous=False):
    """Small random instance: mixed bandwidths, static powers and gains."""
    if n_levels > 1:
        upper = rng.choice([0.25, 0.5, 0.75, 1.0], n_levels - 1, replace=False)
        levels = tuple(sorted({eps, *map(float, upper)}))
    else:
        levels = (1.0,)
    demand = rng.uniform(0, max_demand, n) * (rng.random(n) > 0.1)
    bandwidth = rng.choice([20e6, 50e6, 100e6], m)
    static = rng.choice([5.0, 11.4757], m)
    eff = rng.choice([0.25, 0.5], m)
    if homogeneous:
        bandwidth, static, eff = (np.full(m, a[0]) for a in (bandwidth, static, eff))
    return ProblemInstance(
        ue_ids=tuple(range(n)), demand=demand, oru_ids=tuple(range(m)),
        max_power=np.ones(m), max_bandwidth=bandwidth, static_power=static, efficiency=eff,
        gain=10 ** rng.uniform(-13, -9, (n, m)), noise_sigma2=2e-12, epsilon=eps,
        power_levels=(levels,) * m)


def uniform_instance(n, m, per_node, levels=(1.0,), gain=1e-10, sigma2=1e-12, rho=100e6):
    """Every link identical; each node fits exactly ``per_node`` UEs at top power."""
    se = np.log2(1 + gain * levels[-1] / sigma2)
    demand = rho * se / per_node * (1 - 1e-12)
    return ProblemInstance(
        ue_ids=tuple(range(n)), demand=np.full(n, demand), oru_ids=tuple(range(m)),
        max_power=np.full(m, levels[-1]), max_bandwidth=np.full(m, rho),
        static_power=np.full(m, 11.4757), efficiency=np.full(m, 0.25),
        gain=np.full((n, m), gain), noise_sigma2=sigma2, epsilon=min(EPS, levels[0]),
        power_levels=(tuple(levels),) * m)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
