import json
from pathlib import Path

import numpy as np
import pytest

from elastica_scatter.geometry import Partition, ShapePoint, regular_polygon, restore_feasibility

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def special_functions():
    return json.loads((FIXTURES / "special_functions.json").read_text())


def mie_far_field(ratios, k, radius, xhat, d):
    """Separation-of-variables far field of a sound-soft disc centred at the origin.

    ``ratios[m] = J_m(kR) / H_m(kR)``; negative orders share the ratio.
    """
    phi = np.arctan2(xhat[:, 1], xhat[:, 0])[:, None] - np.arctan2(d[:, 1], d[:, 0])[None, :]
    total = ratios[0] * np.ones_like(phi, dtype=complex)
    for m in range(1, len(ratios)):
        total += 2 * ratios[m] * np.cos(m * phi)
    return -np.exp(-1j * np.pi / 4) * np.sqrt(2 / (np.pi * k)) * total


def random_feasible(n, rng, amplitude=0.05, partition=None):
    """Perturbed regular polygon restored onto the closure constraint."""
    base = regular_polygon(n)
    partition = partition or base.partition
    theta = 2 * np.pi * np.cumsum(partition.edge_lengths)
    theta = theta + amplitude * rng.uniform(-1, 1, n)
    m = ShapePoint(theta, 1.0 + rng.uniform(0, 1), rng.normal(size=2), partition)
    return restore_feasibility(m, tol=1e-13)


def random_partition(n, rng):
    gaps = rng.uniform(0.5, 1.5, n)
    tau = np.concatenate([[0.0], np.cumsum(gaps) / gaps.sum()])
    tau[-1] = 1.0
    return Partition(tau)


def central_difference(fun, x, eps=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * eps))
    return np.stack(cols, axis=-1)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
