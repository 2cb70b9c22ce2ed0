import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.functions.cli.commands import intensity_curve, main
from src.functions.cli.config import parse_config
from src.lib.errors import EXIT_PASS, EXIT_STATISTICAL_FAIL, EXIT_USAGE, ValidationError

CONFIGS = Path(__file__).resolve().parents[2] / 'configs'


@pytest.fixture(autouse=True)
def single_worker(monkeypatch):
    monkeypatch.setenv('HAZARDLAB_THREADS', '1')


def load(name):
    return json.loads((CONFIGS / f'{name}.json').read_text())


def run(tmp_path, command, raw, *extra):
    config_path = tmp_path / f"{raw.get('name', 'run')}.json"
    config_path.write_text(json.dumps(raw))
    return main([command, '--config', str(config_path), '--out', str(tmp_path / 'out'), *extra])


def read_summary(tmp_path, run_name, artifact):
    return json.loads((tmp_path / 'out' / run_name / f'{artifact}.json').read_text())


class TestIntensity:
    def test_plain_gbm_unit_value(self, tmp_path):
        assert run(tmp_path, 'intensity', load('plain_gbm')) == EXIT_PASS
        summary = read_summary(tmp_path, 'plain_gbm', 'intensity_summary')
        assert summary['formula'] == 'deterministic_obs'
        assert summary['final_intensity'] == pytest.approx(0.3544373, abs=1e-6)
        curve = pd.read_csv(tmp_path / 'out' / 'plain_gbm' / 'intensity.csv')
        assert list(curve.columns) == ['t', 'intensity', 'cumulative']

    @pytest.mark.parametrize('name', ['plain_gbm', 'regime_switching', 'jump_diffusion'])
    def test_generic_engine_matches_named(self, name):
        raw = load(name)
        raw['intensity']['engine'] = 'named'
        named, _, _ = intensity_curve(parse_config(json.dumps(raw)))
        raw['intensity']['engine'] = 'eq5-generic'
        generic, _, summary = intensity_curve(parse_config(json.dumps(raw)))
        np.testing.assert_allclose(generic['intensity'], named['intensity'], rtol=1e-8, atol=1e-10)
        assert summary['formula'] == 'eq5-generic'

    def test_chain_hit_intensity_is_constant(self, tmp_path):
        assert run(tmp_path, 'intensity', load('two_state_chain')) == EXIT_PASS
        summary = read_summary(tmp_path, 'two_state_chain', 'intensity_summary')
        assert summary['formula'] == 'chain_hit'
        assert summary['final_intensity'] == 0.5


class TestUsageErrors:
    def test_bad_generator(self, tmp_path):
        raw = load('regime_switching')
        raw['model']['generator'] = [[-0.5, 0.4], [1.0, -1.0]]
        assert run(tmp_path, 'intensity', raw) == EXIT_USAGE

    def test_malformed_json_names_the_line(self, tmp_path):
        text = '{\n  "name": "broken",\n  "model": {,\n}\n'
        with pytest.raises(ValidationError, match=r'cfg\.json:3:'):
            parse_config(text, 'cfg.json')
        path = tmp_path / 'broken.json'
        path.write_text(text)
        assert main(['verify', '--config', str(path)]) == EXIT_USAGE

    def test_unknown_field(self):
        raw = load('plain_gbm')
        raw['model']['drift'] = 0.1
        with pytest.raises(ValidationError, match='model.drift'):
            parse_config(json.dumps(raw))

    def test_missing_seed(self, tmp_path):
        raw = load('two_state_chain')
        del raw['verification']['seed']
        assert run(tmp_path, 'simulate', raw) == EXIT_USAGE

    def test_too_few_paths(self, tmp_path):
        raw = load('two_state_chain')
        raw['verification']['n_paths'] = 999
        assert run(tmp_path, 'verify', raw) == EXIT_USAGE

    def test_missing_config_file(self, tmp_path):
        assert main(['simulate', '--config', str(tmp_path / 'absent.json')]) == EXIT_USAGE


class TestSimulate:
    def test_same_seed_same_bytes(self, tmp_path):
        raw = load('regime_switching')
        raw['verification']['n_paths'] = 1000
        first, second = tmp_path / 'a', tmp_path / 'b'
        first.mkdir()
        second.mkdir()
        assert run(first, 'simulate', raw) == EXIT_PASS
        assert run(second, 'simulate', raw) == EXIT_PASS
        for artifact in ('paths.csv', 'simulate_summary.json'):
            assert (first / 'out' / 'regime_switching' / artifact).read_bytes() == \
                (second / 'out' / 'regime_switching' / artifact).read_bytes()

    def test_seed_override(self, tmp_path):
        raw = load('two_state_chain')
        del raw['verification']['seed']
        raw['verification']['n_paths'] = 1000
        assert run(tmp_path, 'simulate', raw, '--seed', '3') == EXIT_PASS
        assert read_summary(tmp_path, 'two_state_chain', 'simulate_summary')['seed'] == 3

    def test_zero_horizon_never_defaults(self, tmp_path):
        raw = load('regime_switching')
        raw['schedule'] = {'times': [0.0]}
        raw['verification']['n_paths'] = 1000
        assert run(tmp_path, 'simulate', raw) == EXIT_PASS
        paths = pd.read_csv(tmp_path / 'out' / 'regime_switching' / 'paths.csv')
        assert len(paths) == 1000
        assert np.isinf(paths['tau']).all()
        assert read_summary(tmp_path, 'regime_switching', 'simulate_summary')['default_fraction'] == 0.0


class TestVerify:
    def test_chain_hit_passes(self, tmp_path):
        raw = load('two_state_chain')
        raw['verification']['n_paths'] = 2000
        assert run(tmp_path, 'verify', raw) == EXIT_PASS
        summary = read_summary(tmp_path, 'two_state_chain', 'verify_summary')
        assert summary['passed'] is True
        residual = pd.read_csv(tmp_path / 'out' / 'two_state_chain' / 'residual.csv')
        assert list(residual['t']) == [0.5, 1.0, 2.0]

    def test_biased_compensator_fails(self, tmp_path):
        raw = load('two_state_chain')
        raw['verification']['n_paths'] = 2000
        raw['verification']['bias_factor'] = 1.2
        assert run(tmp_path, 'verify', raw) == EXIT_STATISTICAL_FAIL
        assert read_summary(tmp_path, 'two_state_chain', 'verify_summary')['passed'] is False

    def test_same_seed_same_bytes(self, tmp_path, monkeypatch):
        raw = load('two_state_chain')
        raw['verification']['n_paths'] = 1000
        first, second = tmp_path / 'a', tmp_path / 'b'
        first.mkdir()
        second.mkdir()
        exit_code = run(first, 'verify', raw)
        monkeypatch.setenv('HAZARDLAB_THREADS', '2')
        assert run(second, 'verify', raw) == exit_code
        for artifact in ('residual.csv', 'orthogonality.csv', 'verify_summary.json'):
            assert (first / 'out' / 'two_state_chain' / artifact).read_bytes() == \
                (second / 'out' / 'two_state_chain' / artifact).read_bytes()
