import pytest

from privfed.data import synthetic_adult_csv


@pytest.fixture(scope="session")
def small_adult_csv(tmp_path_factory):
    """A 2,000-row Adult-schema file for fast pipeline tests."""
    path = tmp_path_factory.mktemp("data") / "adult_small.csv"
    synthetic_adult_csv(path, n_rows=2000, seed=3)
    return path


@pytest.fixture(scope="session")
def full_adult_csv(tmp_path_factory):
    """Full-size Adult-schema file (real file substituted if ADULT_CSV is set)."""
    import os

    override = os.environ.get("ADULT_CSV")
    if override:
        return override
    path = tmp_path_factory.mktemp("data") / "adult_full.csv"
    synthetic_adult_csv(path, n_rows=48842, seed=7)
    return path
