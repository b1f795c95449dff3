import numpy as np
import pytest

from chipletlab.floorplan import FloorPlanConfig, RoBlockPlacement, build_floorplan


@pytest.fixture(scope="session")
def default_plan():
    return build_floorplan(FloorPlanConfig())


@pytest.fixture(scope="session")
def plan_with_blocks():
    cfg = FloorPlanConfig(ro_blocks=(
        RoBlockPlacement("blk0", 0, 2000.0, 3000.0),
        RoBlockPlacement("blk1", 0, 2000.0, 9000.0),
        RoBlockPlacement("blk2", 1, 15000.0, 9000.0),
    ))
    return build_floorplan(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(20240809)
