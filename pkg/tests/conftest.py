import numpy as np
import pytest

from app.models.points import SpdMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def make_spd():
    """Random SPD matrix with eigenvalues in [0.2, 5]."""

    def _make(p: int, rng: np.random.Generator) -> SpdMatrix:
        q, _ = np.linalg.qr(rng.standard_normal((p, p)))
        w = rng.uniform(0.2, 5.0, size=p)
        return SpdMatrix.symmetrized((q * w) @ q.T)

    return _make
