"""Shared fixtures: bundled tasks and small labeled demo datasets."""

from dataclasses import replace

import pytest

from demoaug.data import Dataset
from demoaug.rng import derive_stream
from demoaug.segmentation import SegmentationConfig, assign_phases
from demoaug.sim import rollout_expert
from demoaug.tasks import make_coffee_task, make_stack_task


@pytest.fixture(scope="session")
def stack_task():
    return make_stack_task()


@pytest.fixture(scope="session")
def coffee_task():
    return make_coffee_task()


def make_labeled_demos(task, n, seed_base=0):
    cfg = SegmentationConfig()
    trajs = []
    for i in range(n):
        tr = rollout_expert(task, derive_stream(seed_base, "demo", i))
        tr = assign_phases(tr, task.causal, cfg)
        trajs.append(replace(tr, traj_id=f"demo_{i:03d}"))
    return Dataset("1.0", task.schema, tuple(trajs))


@pytest.fixture(scope="session")
def stack_demos(stack_task):
    return make_labeled_demos(stack_task, 4)


@pytest.fixture(scope="session")
def coffee_demos(coffee_task):
    return make_labeled_demos(coffee_task, 4)
