import os

import hypothesis
import numpy as np
import pytest

from core.coin import embed, family_drift, family_g0, random_contraction
from core.models import FamilyParams

np.seterr(all="warn")

hypothesis.settings.register_profile("dev", max_examples=20, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=100, deadline=None, derandomize=True)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "dev"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def drift():
    """Drift coin with a valid annulus, r(V) close to 0.79267."""
    return family_drift(FamilyParams(xi=np.pi / 12, eta=np.pi / 3))


@pytest.fixture
def drift_split():
    """Drift coin whose gaps at eps = 0.1 satisfy the split predicate."""
    return family_drift(FamilyParams(xi=0.26, eta=1.05))


@pytest.fixture
def g0():
    return family_g0(FamilyParams(xi=0.3, eta=0.7))


@pytest.fixture
def random_embeddings():
    """Ten Haar-random coins with g away from 0 and 1."""
    out = []
    seed = 0
    while len(out) < 10:
        emb = embed(random_contraction(seed))
        seed += 1
        if 0.05 < emb.g < 0.95:
            out.append(emb)
    return out


@pytest.fixture
def tmp_settings(tmp_path, monkeypatch):
    """Settings pointing logs and outputs into a temporary directory."""
    from core.config import get_settings

    monkeypatch.setenv("CMVBAND_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("CMVBAND_OUTPUT_DIR", str(tmp_path / "out"))
    get_settings.cache_clear()
    yield get_settings()
    get_settings.cache_clear()
