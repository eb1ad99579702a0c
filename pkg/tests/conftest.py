import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from geofuse.channel import Anchor, RadioConfig, Scene
from geofuse.geometry import rotation_z, template_ura

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def small_scene(n_surfaces=2, n_freq=3, rows=2, cols=2, n_anchors=2, path_mask=None) -> Scene:
    """A compact scene with well-separated walls and anchors facing -y."""
    radio = RadioConfig(n_freq=n_freq)
    anchors = [Anchor(center=np.array([1.0 + 3.0 * j, 2.0, 1.5 + 0.5 * j]), rotation=rotation_z(np.pi))
               for j in range(n_anchors)]
    mvas = np.array([[0.0, -6.0, 0.0], [14.0, 0.0, 0.0], [0.0, 0.0, 7.0]])[:n_surfaces]
    tpl = template_ura(rows, cols, radio.wavelength / 2)
    return Scene(radio=radio, anchors=anchors, template=tpl, mvas=mvas, path_mask=path_mask)


@pytest.fixture
def scene():
    return small_scene()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
