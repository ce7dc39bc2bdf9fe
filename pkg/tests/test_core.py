"""Package-level tests."""
# std imports
import importlib.metadata as importmeta

# 3rd party
import pytest

# local
import hfalign


def test_package_version():
    """hfalign.__version__ is the installed distribution version."""
    # given,
    try:
        expected = importmeta.version('hfalign')
    except importmeta.PackageNotFoundError:
        pytest.skip('hfalign is not installed')

    # exercise,
    result = hfalign.__version__

    # verify.
    assert result == expected


def test_public_api():
    """Every name of __all__ is importable from the top-level package."""
    # exercise,
    missing = [name for name in hfalign.__all__ if not hasattr(hfalign, name)]

    # verify.
    assert not missing


def test_exit_codes():
    """Error classes carry their command exit status."""
    # exercise, verify.
    assert hfalign.ConfigError.exit_code == 2
    assert hfalign.SchemaError.exit_code == 3
    assert hfalign.UndefinedScaleError.exit_code == 3
    assert hfalign.TrainingError.exit_code == 4
    assert hfalign.StageError('top', hfalign.TrainingError('x')).exit_code == 4
    assert hfalign.StageError('top', KeyError('x')).exit_code == 1


def test_stage_seed_is_stable():
    """Stage seeds are a pure function of the root seed and stage name."""
    # exercise,
    seed = hfalign.stage_seed(0, 'gbm')

    # verify.
    assert seed == hfalign.stage_seed(0, 'gbm')
    assert 0 <= seed < 2 ** 32
    assert seed != hfalign.stage_seed(0, 'top')
