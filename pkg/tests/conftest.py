import numpy as np
import pytest

from twoline.geometry import LinePair
from twoline.simulate import ScenarioConfig, gen_true_points, perturb

REFERENCE_PARAMS = (-0.75, 0.25, 4.0 / 3.0, 5.0 / 12.0)
REFERENCE_POINT = np.array([-0.08, 0.31])


def line_sample(n, sigma, seed, distribution="UniformSegments", lines=None, **dist_params):
    """Noisy sample on two lines (the default pair unless ``lines`` is given)."""
    kw = {"lines": lines} if lines is not None else {}
    cfg = ScenarioConfig(distribution, n=max(n, 6), sigma=max(sigma, 1e-3), reps=1, dist_params=dist_params, **kw)
    cfg = cfg.replace(n=n) if n >= 6 else cfg
    rng = np.random.default_rng(seed)
    ts = gen_true_points(cfg, rng)
    return perturb(ts, sigma, rng) if sigma > 0 else ts.points.copy()


def random_line_pair(rng, min_angle=0.3):
    """Non-vertical, well separated random lines, hitting the unit square region."""
    while True:
        k1, k2 = np.tan(rng.uniform(-1.2, 1.2, 2))
        if abs(np.arctan(k1) - np.arctan(k2)) > min_angle:
            return LinePair.from_explicit(k1, rng.uniform(-1, 1), k2, rng.uniform(-1, 1))


@pytest.fixture
def reference_lines():
    return LinePair.from_explicit(*REFERENCE_PARAMS)


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


ACCEPTANCE_LOG = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LOG, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
