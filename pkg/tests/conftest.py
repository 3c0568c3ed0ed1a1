import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from momlab import linear_network, matrix_factorization, matrix_sensing, synthetic


def make_problem(kind, seed=0):
    """Seeded instances of each problem family used across the suite."""
    rng = np.random.default_rng(seed)
    if kind == "quadratic":
        return synthetic("quadratic")
    if kind == "indefinite_quadratic":
        return synthetic("indefinite_quadratic")
    if kind == "quartic":
        return synthetic("quartic")
    if kind == "matrix_factorization":
        M = rng.standard_normal((3, 3))
        return matrix_factorization(M, r=2)
    if kind == "matrix_sensing":
        A = [rng.standard_normal((3, 3)) for _ in range(4)]
        b = rng.standard_normal(4)
        return matrix_sensing(A, b, r=1)
    if kind == "linear_network":
        Xb = rng.standard_normal((2, 4))
        Yb = rng.standard_normal((2, 4))
        return linear_network(Xb, Yb, widths=(2, 3, 3, 2))
    raise ValueError(kind)


ALL_KINDS = [
    "quadratic",
    "indefinite_quadratic",
    "quartic",
    "matrix_factorization",
    "matrix_sensing",
    "linear_network",
]


@pytest.fixture(params=ALL_KINDS)
def any_problem(request):
    return make_problem(request.param)
