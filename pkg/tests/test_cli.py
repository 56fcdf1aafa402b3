import json

import pandas as pd
import pytest

from src.cli import EXIT_CONFIG, EXIT_OK, build_parser, experiment_config, main


@pytest.fixture
def small_config_file(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps({
        'clients': 6, 'malicious': 0.34, 'features': 8, 'samples_per_class': 40,
        'hidden': 8, 'rounds': 2, 'seed': 1,
    }))
    return str(path)


class TestParser:
    def test_flags_override_file(self, small_config_file):
        args = build_parser().parse_args(['run', '--config', small_config_file, '--rounds', '5', '--attack', 'ipm'])
        config = experiment_config(args)
        assert config.rounds == 5
        assert config.attack == 'ipm'
        assert config.clients == 6
        assert config.features == 8

    def test_defaults_without_file(self):
        config = experiment_config(build_parser().parse_args(['run']))
        assert config.bits is None
        assert config.mode == 'secure'

    def test_unknown_attack_rejected_by_parser(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(['run', '--attack', 'mystery'])


class TestRunCommand:
    def test_oracle_run_writes_results(self, small_config_file, tmp_path):
        out = tmp_path / 'results'
        code = main(['run', '--config', small_config_file, '--mode', 'oracle', '--attack', 'ipm', '--bits', '64',
                     '--out', str(out), '--prefix', 'ipm'])
        assert code == EXIT_OK
        summary = pd.read_csv(out / 'ipm_summary.csv')
        assert summary['round'].tolist() == [0, 1]
        assert (summary['malicious_qualified'] == 0).all()
        assert (out / 'ipm_rounds.jsonl').exists()

    def test_invalid_config_exit_code(self, tmp_path):
        assert main(['run', '--clients', '1', '--out', str(tmp_path)]) == EXIT_CONFIG

    def test_unknown_config_key(self, tmp_path):
        path = tmp_path / 'bad.json'
        path.write_text(json.dumps({'clients': 6, 'colour': 'blue'}))
        assert main(['run', '--config', str(path), '--out', str(tmp_path)]) == EXIT_CONFIG

    def test_tcp_needs_an_address(self, tmp_path):
        assert main(['run', '--transport', 'tcp', '--out', str(tmp_path)]) == EXIT_CONFIG


class TestBenchCommands:
    def test_bench_compare_csv(self, tmp_path):
        out = tmp_path / 'compare.csv'
        assert main(['bench-compare', '--pairs', '1', '10', '--out', str(out)]) == EXIT_OK
        frame = pd.read_csv(out)
        assert frame['accounted_bits'].tolist() == [298, 2980]
        assert frame['mismatches'].tolist() == [0, 0]

    def test_bench_compare_stdout(self, capsys):
        assert main(['bench-compare', '--pairs', '3']) == EXIT_OK
        assert 'accounted_bits' in capsys.readouterr().out

    def test_bench_sed(self, tmp_path):
        out = tmp_path / 'sed.csv'
        code = main(['bench-sed', '--clients', '4', '--parameters', '128', '--window', '8',
                     '--samplers', 'linf', 'maxpool', '--out', str(out)])
        assert code == EXIT_OK
        assert pd.read_csv(out)['sampler'].tolist() == ['linf', 'maxpool']
