import numpy as np
import pytest

from lfdepth import synth


@pytest.fixture(scope="session")
def occluder_scene():
    """Two-layer 64x64 scene with occlusion: (scene, lf, gt, occ)."""
    scene = synth.preset_scene("occluder", 64, 64, seed=5)
    lf, gt, occ = synth.render(scene, 3, 64, 64)
    return scene, lf, gt, occ


@pytest.fixture(scope="session")
def slant_scene():
    """Single-layer slanted 48x48 scene, no occlusion."""
    scene = synth.preset_scene("slant", 48, 48, seed=3)
    lf, gt, occ = synth.render(scene, 3, 48, 48)
    return scene, lf, gt, occ


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
