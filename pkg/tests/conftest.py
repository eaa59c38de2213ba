import numpy as np
import pytest

from msbound import paper_example_config, synthesize


@pytest.fixture(scope="session")
def bench_cfg():
    return paper_example_config()


@pytest.fixture(scope="session")
def bench_policy(bench_cfg):
    policy, report = synthesize(bench_cfg)
    return policy, report


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
