"""Tests for loading the pipeline configuration."""
# 3rd party
import pytest

# local
from hfalign.config import PipelineConfig, from_dict, parse_grid, load_config
from hfalign.exceptions import ConfigError


def test_parse_grid_range():
    """Ranges include their stop value."""
    # exercise, verify.
    assert parse_grid('0.9:1.0:0.05') == (0.9, 0.95, 1.0)
    assert len(parse_grid('0.05:2.0:0.05')) == 40


def test_parse_grid_list():
    """Comma lists are sorted."""
    # exercise, verify.
    assert parse_grid('1.1, 0.9,1.0') == (0.9, 1.0, 1.1)
    assert parse_grid([1.0, 0.5]) == (0.5, 1.0)


@pytest.mark.parametrize('text', ['a,b', '0.5:1.0', '0.5:1.0:0', '0:1:0.5', '1.5,2.5'])
def test_parse_grid_invalid(text):
    """Unparseable grids, zero steps and values outside (0, 2] are rejected."""
    # exercise, verify.
    with pytest.raises(ConfigError):
        parse_grid(text)


def test_defaults():
    """Without a file every section takes its defaults."""
    # exercise,
    config = load_config()

    # verify.
    assert config == PipelineConfig()
    assert config.run.frame == 'validation'
    assert len(config.alignment.grid) == 40
    assert config.alignment.neighborhood_size == 5
    assert config.ensemble.context_multiples == (3, 5, 7)


def test_load_file(quick_config):
    """Network shape keys go to the ensemble, optimization keys to training."""
    # exercise,
    config = load_config(quick_config)

    # verify.
    assert config.synthetic.n_items == 6
    assert config.basisnet.epochs == 1
    assert config.ensemble.context_multiples == (1,)
    assert config.ensemble.net == {'n_blocks': 1, 'depth': 2, 'width': 8}
    assert config.alignment.grid == (0.9, 1.0, 1.1)
    assert config.gbm.num_rounds == 5


def test_overrides(quick_config):
    """Command-line overrides replace file values."""
    # exercise,
    config = load_config(quick_config, frame='evaluation', seed=11, grid='1.0', out=None)

    # verify.
    assert config.run.frame == 'evaluation'
    assert config.run.seed == 11
    assert config.alignment.grid == (1.0,)
    assert config.run.out.endswith('run')


@pytest.mark.parametrize('doc,match', [
    ({'run': {'bogus': 1}}, 'run.bogus'),
    ({'extra': {}}, 'extra'),
    ({'run': {'frame': 'test'}}, 'frame'),
    ({'gbm': {'learning_rate': -1.0}}, 'learning_rate'),
    ({'basisnet': {'loss_metrics': ['rmse']}}, 'rmse'),
    ({'run': {'top_levels': [2, 3]}}, 'top_levels'),
    ({'synthetic': {'n_items': 'many', 'bogus': 1}}, 'synthetic.bogus'),
])
def test_invalid_values(doc, match):
    """Unknown keys and out-of-range values name the offending key."""
    # exercise, verify.
    with pytest.raises(ConfigError, match=match):
        from_dict(doc)


def test_non_table_value(tmp_path):
    """Top-level values must be tables."""
    # given,
    path = tmp_path / 'bad.toml'
    path.write_text('frame = "validation"\n', encoding='utf8')

    # exercise, verify.
    with pytest.raises(ConfigError, match='table'):
        load_config(str(path))


def test_invalid_toml(tmp_path):
    """Syntax errors and missing files are configuration errors."""
    # given,
    path = tmp_path / 'broken.toml'
    path.write_text('[run\n', encoding='utf8')

    # exercise, verify.
    with pytest.raises(ConfigError, match='invalid TOML'):
        load_config(str(path))
    with pytest.raises(ConfigError, match='cannot read'):
        load_config(str(tmp_path / 'absent.toml'))


def test_stage_seeds():
    """Stage seeds depend on the root seed and the stage name only."""
    # given,
    config = load_config(seed=5)

    # exercise, verify.
    assert config.seed_for('gbm') == load_config(seed=5).seed_for('gbm')
    assert config.seed_for('gbm') != config.seed_for('top')
    assert config.seed_for('gbm') != load_config(seed=6).seed_for('gbm')


def test_echo_merges_ensemble():
    """The configuration echo lists ensemble keys under basisnet."""
    # exercise,
    doc = load_config().to_dict()

    # verify.
    assert 'ensemble' not in doc
    assert doc['basisnet']['bagging_size'] == 3
    assert doc['basisnet']['learning_rate'] == 0.0006
