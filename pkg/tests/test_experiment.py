from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from src.config import ExperimentConfig, Settings
from src.exceptions import NoQualifiedClientsError
from src.experiment import (
    MEDIAN_SWEEP,
    ExperimentEngine,
    RoundMetrics,
    SecureSession,
    bench_compare,
    bench_median,
    bench_sed,
    derive_seed,
    read_rounds,
    run_experiment,
    summary_frame,
    write_results,
)
from src.utils.network_utils import find_free_port

SETTINGS = Settings(recv_timeout=60.0, connect_retries=100)
SEEDS = range(5)


def small_config(**overrides) -> ExperimentConfig:
    base = ExperimentConfig(
        clients=6, malicious=0.34, rounds=2, features=8, samples_per_class=40,
        hidden=8, key_bits=512, mode='oracle', seed=3,
    )
    return base.with_overrides(**overrides)


def acceptance_config(seed: int, **overrides) -> ExperimentConfig:
    """Blob task with 10 clients, 40% malicious and 20 rounds on a wide ring."""
    base = ExperimentConfig(clients=10, malicious=0.4, rounds=20, bits=64, mode='oracle', seed=seed)
    return base.with_overrides(**overrides)


def final_accuracy(config: ExperimentConfig) -> float:
    return run_experiment(config, SETTINGS)[-1].main_accuracy


class TestEngineSetup:
    def test_malicious_are_first_clients(self):
        engine = ExperimentEngine(small_config(clients=10, malicious=0.3), SETTINGS)
        assert engine.malicious == [0, 1, 2]

    def test_weights_are_dataset_sizes(self):
        engine = ExperimentEngine(small_config(), SETTINGS)
        assert sum(engine.weights) == len(engine.train)
        assert engine.weights == [len(d) for d in engine.clients]

    def test_label_flipping_rewrites_malicious_data(self):
        clean = ExperimentEngine(small_config(), SETTINGS)
        flipped = ExperimentEngine(small_config(attack='label_flipping'), SETTINGS)
        assert np.array_equal(flipped.clients[0].labels, 3 - clean.clients[0].labels)
        assert np.array_equal(flipped.clients[5].labels, clean.clients[5].labels)

    def test_derive_seed_is_stable(self):
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
        assert derive_seed(1, 2, 3) != derive_seed(1, 2, 4)


class TestOracleRounds:
    def test_fedavg_is_weighted_mean(self):
        engine = ExperimentEngine(small_config(defense='fedavg'), SETTINGS)
        updates = engine.local_updates(0)
        outcome = engine.defend(updates, 0)
        expected = (updates * np.array(engine.weights)[:, None]).sum(axis=0) / sum(engine.weights)
        assert np.allclose(outcome.update, expected)
        assert outcome.qualified == list(range(6))

    def test_ipm_clients_never_qualify(self):
        metrics = run_experiment(small_config(clients=10, malicious=0.3, attack='ipm', rounds=3, bits=64), SETTINGS)
        assert len(metrics) == 3
        assert all(m.malicious_qualified == [] for m in metrics)
        assert not any(m.skipped for m in metrics)

    def test_adaptive_attack_reports_shift(self):
        metrics = run_experiment(small_config(attack='adaptive', rounds=1), SETTINGS)
        first = metrics[0]
        assert first.gamma is not None and 0.0 <= first.gamma <= 5.0
        assert first.acceptance is not None and 0 <= first.acceptance <= 2
        assert first.epsilon is not None

    @pytest.mark.parametrize('attack', ['noise', 'alie', 'minmax', 'sign_flipping', 'backdoor'])
    def test_attacks_run(self, attack):
        metrics = run_experiment(small_config(attack=attack, rounds=1), SETTINGS)
        assert 0.0 <= metrics[0].main_accuracy <= 1.0
        assert 0.0 <= metrics[0].attack_success_rate <= 1.0

    def test_empty_round_keeps_model(self, monkeypatch):
        engine = ExperimentEngine(small_config(), SETTINGS)
        before = engine.model.params.copy()

        def nobody(updates, round_index):
            raise NoQualifiedClientsError("no client qualified this round")

        monkeypatch.setattr(engine, 'defend', nobody)
        metrics = engine.run_round(0)
        assert metrics.skipped
        assert metrics.qualified == []
        assert np.array_equal(engine.model.params, before)

    @pytest.mark.slow
    def test_flurp_beats_fedavg_under_ipm(self):
        config = small_config(clients=10, malicious=0.3, attack='ipm', rounds=10, bits=64)
        flurp = run_experiment(config, SETTINGS)
        fedavg = run_experiment(config.with_overrides(defense='fedavg'), SETTINGS)
        assert flurp[-1].main_accuracy > fedavg[-1].main_accuracy
        assert flurp[-1].main_accuracy > 0.7


class TestRobustness:
    @pytest.mark.slow
    @pytest.mark.parametrize('attack', ['ipm', 'sign_flipping', 'noise'])
    def test_update_attackers_excluded(self, attack):
        rounds, defended, clean = [], [], []
        for seed in SEEDS:
            metrics = run_experiment(acceptance_config(seed, attack=attack), SETTINGS)
            rounds.extend(metrics)
            defended.append(metrics[-1].main_accuracy)
            clean.append(final_accuracy(acceptance_config(seed, defense='fedavg')))
        excluded = sum(not m.malicious_qualified for m in rounds)
        assert excluded >= 0.9 * len(rounds)
        assert np.mean(defended) >= np.mean(clean) - 0.02

    @pytest.mark.slow
    def test_backdoor_blocked(self):
        defended, undefended = [], []
        for seed in SEEDS:
            defended.append(run_experiment(acceptance_config(seed, attack='backdoor'), SETTINGS)[-1])
            undefended.append(run_experiment(acceptance_config(seed, attack='backdoor', defense='fedavg'), SETTINGS)[-1])
        assert np.mean([m.attack_success_rate for m in defended]) < 0.10
        assert np.mean([m.attack_success_rate for m in undefended]) > 0.80

    @pytest.mark.slow
    @pytest.mark.parametrize('attack', ['alie', 'minmax'])
    def test_beats_fedavg(self, attack):
        defended = [final_accuracy(acceptance_config(seed, attack=attack)) for seed in SEEDS]
        undefended = [final_accuracy(acceptance_config(seed, attack=attack, defense='fedavg')) for seed in SEEDS]
        assert np.mean(defended) >= np.mean(undefended) + 0.05

    @pytest.mark.slow
    def test_adaptive_attack_stays_close(self):
        defended, clean = [], []
        for seed in SEEDS:
            metrics = run_experiment(acceptance_config(seed, attack='adaptive'), SETTINGS)
            assert all(m.epsilon < 0.5 for m in metrics if m.acceptance)
            defended.append(metrics[-1].main_accuracy)
            clean.append(final_accuracy(acceptance_config(seed)))
        assert np.mean(defended) >= np.mean(clean) - 0.03


class TestSecureMode:
    def test_matches_oracle(self, keypairs):
        oracle = ExperimentEngine(small_config(attack='ipm', bits=64), SETTINGS)
        secure = ExperimentEngine(small_config(attack='ipm', bits=64, mode='secure'), SETTINGS, keypairs)
        oracle_metrics = oracle.run()
        secure_metrics = secure.run()
        assert [m.qualified for m in secure_metrics] == [m.qualified for m in oracle_metrics]
        assert np.array_equal(secure.model.params, oracle.model.params)
        assert secure.session is None

    def test_counters_recorded(self, keypairs):
        metrics = run_experiment(small_config(mode='secure', rounds=1), SETTINGS, keypairs)
        counters = metrics[0].counters
        assert counters['total']['bytes_sent'] > 0
        assert counters['shuffle']['ciphertexts'] == 4 * 36
        assert metrics[0].upload_bytes > 0

    def test_tcp_secrets_are_not_derived_from_shared_seed(self):
        listener = SecureSession(small_config(mode='secure', transport='tcp', listen='127.0.0.1:1'), SETTINGS)
        dialer = SecureSession(small_config(mode='secure', transport='tcp', connect='127.0.0.1:1'), SETTINGS)
        inproc = SecureSession(small_config(mode='secure'), SETTINGS)
        assert listener.party_secret(0) != inproc.party_secret(0)
        assert dialer.party_secret(0) != listener.party_secret(0)
        assert inproc.party_secret(0) == SecureSession(small_config(mode='secure'), SETTINGS).party_secret(0)

    def test_party_seed_setting(self):
        config = small_config(mode='secure', transport='tcp', listen='127.0.0.1:1')
        first = SecureSession(config, Settings(party_seed=11)).party_secret(0)
        assert first == SecureSession(config, Settings(party_seed=11)).party_secret(0)
        assert first != SecureSession(config, Settings(party_seed=12)).party_secret(0)

    def test_tcp_servers_agree(self, keypairs):
        port = find_free_port()
        address = f'127.0.0.1:{port}'
        server0 = ExperimentEngine(small_config(mode='secure', transport='tcp', listen=address), SETTINGS, keypairs)
        server1 = ExperimentEngine(small_config(mode='secure', transport='tcp', connect=address), SETTINGS, keypairs)
        with ThreadPoolExecutor(max_workers=2) as pool:
            first = pool.submit(server0.run)
            second = pool.submit(server1.run)
            metrics0, metrics1 = first.result(timeout=300), second.result(timeout=300)
        assert [m.qualified for m in metrics0] == [m.qualified for m in metrics1]
        assert np.array_equal(server0.model.params, server1.model.params)
        oracle = run_experiment(small_config(), SETTINGS)
        assert [m.qualified for m in metrics0] == [m.qualified for m in oracle]


class TestResults:
    def test_accuracy_range_checked(self):
        with pytest.raises(ValueError):
            RoundMetrics(round=0, main_accuracy=1.5, attack_success_rate=0.0)

    def test_files_are_deterministic(self, tmp_path):
        paths = []
        for name in ('a', 'b'):
            metrics = run_experiment(small_config(attack='alie'), SETTINGS)
            paths.append(write_results(metrics, str(tmp_path / name)))
        for key in ('rounds', 'summary'):
            with open(paths[0][key]) as first, open(paths[1][key]) as second:
                assert first.read() == second.read()
        frame = read_rounds(paths[0]['rounds'])
        assert frame['round'].tolist() == [0, 1]

    def test_summary_columns(self):
        metrics = [RoundMetrics(round=0, main_accuracy=0.5, attack_success_rate=0.1, qualified=[1, 2],
                                counters={'total': {'bytes_sent': 10, 'rounds': 3}})]
        row = summary_frame(metrics).iloc[0]
        assert row['qualified'] == '1 2'
        assert row['bytes_sent'] == 10
        assert row['rounds'] == 3


class TestBenchmarks:
    def test_bench_compare(self):
        row = bench_compare(10, bits=32)
        assert row['accounted_bits'] == row['formula_bits'] == 2980
        assert row['rounds'] == 4
        assert row['mismatches'] == 0
        assert row['millionaires_rounds'] > row['rounds']

    def test_bench_median(self, keypairs):
        frame = bench_median([4, 6], key_bits=512, keypairs=keypairs)
        assert frame['mismatches'].tolist() == [0, 0]
        assert frame['ciphertexts'].tolist() == [4 * 16, 4 * 36]

    @pytest.mark.slow
    def test_bench_median_sweep_grows_at_most_quadratically(self, keypairs):
        frame = bench_median(MEDIAN_SWEEP, key_bits=512, keypairs=keypairs)
        sent = frame['bytes_sent'].to_numpy(dtype=np.float64)
        assert (frame['mismatches'] == 0).all()
        assert np.all(np.diff(sent) > 0)
        slope = np.polyfit(np.log(frame['clients'].to_numpy(dtype=np.float64)), np.log(sent), 1)[0]
        assert slope <= 2.2

    def test_bench_sed(self):
        frame = bench_sed(clients=4, parameters=256, window=16)
        by_sampler = frame.set_index('sampler')
        assert by_sampler.loc['linf', 'dimension'] == 16
        assert by_sampler.loc['row', 'dimension'] == 256
        assert by_sampler.loc['row', 'bits'] == 32
        assert (frame['multiplications'] == frame['formula_multiplications']).all()
