import pytest

from app.config import settings


@pytest.fixture(autouse=True)
def _restore_settings():
    """Commands write --seed and --threads into the shared settings object."""
    saved = settings.model_dump()
    yield
    for key, value in saved.items():
        setattr(settings, key, value)
