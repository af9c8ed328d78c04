import sys
from pathlib import Path

import pytest

# Ensure project root is on sys.path so `import broadcast_repair` works in tests
ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from broadcast_repair.model import SystemParams, make_instance  # noqa: E402


@pytest.fixture
def example_params():
    return SystemParams(n=8, k=3, d=4, r=2, alpha=2, beta=1)


@pytest.fixture
def example_instance(example_params):
    # round 1 repairs nodes 5 and 6, round 2 repairs nodes 8 and 10
    return make_instance(example_params, [([5, 6], [1, 2, 3, 4]), ([8, 10], [9, 3, 4, 7])])


@pytest.fixture
def desk_params():
    return SystemParams(n=4, k=2, d=2, r=1, alpha=2, beta=1)


@pytest.fixture
def desk_adversarial(desk_params):
    """Worst-case instance for the desk parameters (B = 3), three rounds."""
    return make_instance(desk_params, [([4], [1, 2]), ([3], [1, 5]), ([2], [5, 6])])
