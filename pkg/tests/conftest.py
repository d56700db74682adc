import numpy as np
import pytest

from porefill.voxelgrid import PORE, SOLID_BULK, VoxelImage


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running LBM runs (minutes)")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_image(mask_open, voxel_size=1.0):
    """Image with PORE where ``mask_open`` is true and SOLID_BULK elsewhere."""
    labels = np.where(mask_open, PORE, SOLID_BULK).astype(np.uint8)
    return VoxelImage(labels, voxel_size)


def ball_mask(shape, center, radius):
    grids = np.ogrid[tuple(slice(0, n) for n in shape)]
    d2 = sum((g - c) ** 2 for g, c in zip(grids, center))
    return d2 <= radius * radius


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(acceptance_log.RESULTS):
            terminalreporter.write_line(acceptance_log.RESULTS[n])
