import sys
from fractions import Fraction as F
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ipir.core import (
    ConditionalMatrix,
    MessageStore,
    SystemConfig,
    conditional_from_joint,
    fork_rng,
    validate_joint,
)


@pytest.fixture
def pair_joint():
    """K=2 correlated law: diagonal 3/8, off-diagonal 1/8."""
    return validate_joint([[F(3, 8), F(1, 8)], [F(1, 8), F(3, 8)]])


@pytest.fixture
def pair_cond(pair_joint):
    return conditional_from_joint(pair_joint)


@pytest.fixture
def skew_cond():
    """K=3 skewed conditional rows used by the constructive example."""
    return ConditionalMatrix.from_rows(
        [
            [F(1, 10), F(3, 10), F(6, 10)],
            [F(5, 10), F(4, 10), F(1, 10)],
            [F(2, 10), F(5, 10), F(3, 10)],
        ]
    )


@pytest.fixture
def skew_joint(skew_cond):
    """Uniform prior over the private request with the skewed conditionals."""
    K = skew_cond.K
    return validate_joint(
        [[skew_cond.rows[s][x] / K for x in range(K)] for s in range(K)]
    )


@pytest.fixture
def config22():
    return SystemConfig(N=2, K=2, L=4, seed=1234)


@pytest.fixture
def store22(config22):
    return MessageStore.random(config22.K, config22.L, fork_rng(config22.seed, "store"))
