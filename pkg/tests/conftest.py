"""Shared fixtures: desk-scale synthetic datasets and a quick run configuration."""
# 3rd party
import pytest

# local
from hfalign.dataio import split_frames, generate_synthetic

QUICK_RUN = """\
[synthetic]
seed = 7
n_items = 6
n_stores = 2
T = 150

[run]
out = "{out}"
seed = 3

[gbm]
num_rounds = 5

[basisnet]
epochs = 1
batches_per_epoch = 5
batch_size = 4
context_multiples = [1]
bagging_size = 1
n_blocks = 1
depth = 2
width = 8

[alignment]
grid = "0.9,1.0,1.1"
"""


@pytest.fixture(scope='session')
def small_ds():
    """Six items in two stores over 150 days."""
    return generate_synthetic(seed=7, n_items=6, n_stores=2, T=150, intermittency=0.6)


@pytest.fixture(scope='session')
def small_train(small_ds):
    """Training part and held-out actuals of the validation frame."""
    return split_frames(small_ds, 'validation')


@pytest.fixture
def quick_config(tmp_path):
    """Path of a TOML configuration for a run that finishes in seconds."""
    path = tmp_path / 'quick.toml'
    path.write_text(QUICK_RUN.format(out=(tmp_path / 'run').as_posix()), encoding='utf8')
    return str(path)
