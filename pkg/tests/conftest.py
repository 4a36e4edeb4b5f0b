"""Shared fixtures for the maskcons test suite."""

import numpy as np
import pytest

from src.config.settings import get_settings
from src.density.corpus import LabeledImage
from src.nn.network import build_encoder_decoder, build_mlp
from src.rng import stream


@pytest.fixture(autouse=True)
def _f64_settings(monkeypatch):
    """Every test starts from 64-bit defaults regardless of the caller's environment."""
    for key in ("MASKCONS_PRECISION", "MASKCONS_OUT", "MASKCONS_JOBS", "MASKCONS_LOG_FILE", "MASKCONS_LOG_EVERY"):
        monkeypatch.delenv(key, raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def override_settings(monkeypatch):
    """Factory fixture: set env vars and clear settings cache.

    Usage:
        override_settings(MASKCONS_PRECISION="f32", MASKCONS_JOBS="2")
    """
    def _override(**kwargs):
        for key, value in kwargs.items():
            monkeypatch.setenv(key.upper(), str(value))
        # Clear lru_cache so Settings re-reads env
        get_settings.cache_clear()

    yield _override

    # Always clear cache on teardown so other tests get fresh settings
    get_settings.cache_clear()


@pytest.fixture
def rng() -> np.random.Generator:
    return stream(1234, "tests")


@pytest.fixture
def tiny_segnet():
    """Encoder-decoder on 3×8×8 inputs with 3 classes and narrow widths."""
    return build_encoder_decoder(3, 3, (8, 8), seed=0, widths=(4, 6, 8))


@pytest.fixture
def tiny_mlp():
    return build_mlp([2, 16, 16, 2], seed=0)


def make_blob_corpus(n: int, size: int = 24, seed: int = 0) -> list[LabeledImage]:
    """Two-class images: a noisy bright disc on a noisy dark background."""
    items = []
    for i in range(n):
        g = stream(seed, "corpus", i)
        yy, xx = np.mgrid[:size, :size]
        cy, cx = g.uniform(size * 0.3, size * 0.7, size=2)
        labels = ((yy - cy) ** 2 + (xx - cx) ** 2 < (size * 0.25) ** 2).astype(np.int64)
        base = np.where(labels == 1, 0.7, 0.3)
        image = np.clip(base[None] + 0.05 * g.standard_normal((3, size, size)), 0.0, 1.0)
        items.append(LabeledImage(image, labels))
    return items


@pytest.fixture
def blob_corpus() -> list[LabeledImage]:
    return make_blob_corpus(4)
