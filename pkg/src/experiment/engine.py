"""
Experiment engine: global rounds of federated training with attacks and
the (secure or plaintext) defense in the loop.

Update convention: a client's update is g_i = w_i - w, the change local
training made, and the server applies w <- w + g for the aggregate g.
"""

import logging
import time
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..attacks.adaptive import adaptive_flurp
from ..attacks.poisoning import (
    AttackContext,
    alie,
    backdoor,
    backdoor_test_set,
    ipm,
    label_flipping,
    min_max,
    noise_attack,
)
from ..config import ExperimentConfig, Settings, load_settings
from ..defense.flurp import ClientShares, DefenseOutcome, FlurpDefense
from ..exceptions import NoQualifiedClientsError
from ..fl.data_loader import ToyDataset, make_blobs, partition, train_test_split
from ..fl.models import ToyModel, local_train
from ..mpc.ahe import AheKeypair, keygen
from ..mpc.randomness import CorrelatedRandomness
from ..mpc.shuffle import ShuffleKeys
from ..network.transport import Endpoint, TcpEndpoint, in_process_pair, run_pair
from ..utils.network_utils import parse_address
from .results import RoundMetrics

logger = logging.getLogger(__name__)

DATA_ATTACKS = ('label_flipping', 'backdoor')
UPDATE_ATTACKS = ('noise', 'alie', 'minmax', 'ipm', 'adaptive')


def derive_seed(*parts: int) -> int:
    """Deterministic 32-bit seed from a tuple of integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


class SecureSession:
    """
    The two servers' persistent state across rounds.

    In-process mode drives both servers on a thread pair; tcp mode drives
    only this process's server and expects the peer process to run the same
    configuration.

    Only the dealer stream comes from the shared experiment seed. Each
    server's Paillier key pair and private stream come from
    :meth:`party_secret`, which in tcp mode is never derivable from the
    configuration the peer holds.

    Args:
        config: Experiment configuration
        settings: Process settings (timeouts, retries)
        keypairs: Pre-generated Paillier key pairs, indexed by party
    """

    def __init__(self, config: ExperimentConfig, settings: Optional[Settings] = None,
                 keypairs: Optional[Sequence[AheKeypair]] = None):
        self.config = config
        self.settings = settings or load_settings()
        self.keypairs = keypairs
        self.session_seed = derive_seed(config.seed, 0x5E55)
        self._fresh_secret = int(np.random.SeedSequence().generate_state(1)[0])
        self.endpoints: Optional[Tuple[Endpoint, ...]] = None
        self.keys: List[ShuffleKeys] = []
        self.randomness: List[CorrelatedRandomness] = []

    @property
    def parties(self) -> List[int]:
        if self.config.transport == 'tcp':
            return [self.config.party_id]
        return [0, 1]

    def party_secret(self, party: int) -> int:
        """
        Seed of one server's key pair and private stream.

        In-process runs derive it from the experiment seed so they replay
        exactly. In tcp mode it comes from ``FLURP_PARTY_SEED`` or, when that
        is unset, from fresh entropy drawn when the session was created.
        """
        if self.config.transport != 'tcp':
            return derive_seed(self.config.seed, 0xAE, party)
        if self.settings.party_seed is not None:
            return derive_seed(self.settings.party_seed, 0xAE, party)
        return self._fresh_secret

    def _keypair(self, party: int) -> AheKeypair:
        if self.keypairs is not None:
            return self.keypairs[party]
        return keygen(self.config.key_bits, seed=self.party_secret(party))

    def open(self) -> None:
        if self.endpoints is not None:
            return
        timeout = self.settings.recv_timeout
        if self.config.transport == 'tcp':
            party = self.config.party_id
            if party == 0:
                host, port = parse_address(self.config.listen, self.settings.host)
                endpoint = TcpEndpoint.listen(host, port, 0, timeout)
            else:
                host, port = parse_address(self.config.connect, self.settings.host)
                endpoint = TcpEndpoint.connect(host, port, 1, timeout, self.settings.connect_retries)
            self.endpoints = (endpoint,)
            self.keys = [ShuffleKeys.establish(endpoint, self.config.key_bits, keypair=self._keypair(party))]
        else:
            self.endpoints = in_process_pair(timeout)
            self.keys = list(run_pair(
                lambda ep: ShuffleKeys.establish(ep, self.config.key_bits, keypair=self._keypair(0)),
                lambda ep: ShuffleKeys.establish(ep, self.config.key_bits, keypair=self._keypair(1)),
                pair=self.endpoints,
            ))
        self.randomness = [
            CorrelatedRandomness(self.session_seed, p, private_seed=derive_seed(self.party_secret(p), 0xF1))
            for p in self.parties
        ]
        logger.info(f"Secure session open ({self.config.transport}, parties {self.parties})")

    def run_round(self, defense: FlurpDefense, shares: Sequence[Tuple[ClientShares, ClientShares]]) -> DefenseOutcome:
        """
        One secure round over all clients' uploads.

        Raises:
            NoQualifiedClientsError: when no client qualified; the session
                stays usable
        """
        self.open()

        def server(index: int) -> Callable[[Endpoint], Optional[DefenseOutcome]]:
            party = self.parties[index]

            def body(endpoint: Endpoint) -> Optional[DefenseOutcome]:
                try:
                    return defense.secure_round([s[party] for s in shares], endpoint,
                                                self.randomness[index], self.keys[index])
                except NoQualifiedClientsError:
                    return None
            return body

        if self.config.transport == 'tcp':
            outcome = server(0)(self.endpoints[0])
        else:
            outcome, other = run_pair(server(0), server(1), pair=self.endpoints)
            if outcome is not None and other is not None and outcome.qualified != other.qualified:
                raise RuntimeError(f"servers disagree on the qualified set: {outcome.qualified} vs {other.qualified}")
        if outcome is None:
            raise NoQualifiedClientsError("no client qualified this round")
        return outcome

    def close(self) -> None:
        if self.endpoints is None:
            return
        for endpoint in self.endpoints:
            endpoint.close()
        self.endpoints = None


class ExperimentEngine:
    """
    Federated training on the blob task with poisoning and defense.

    Args:
        config: Experiment configuration
        settings: Process settings
        keypairs: Optional pre-generated Paillier key pairs for secure mode
    """

    def __init__(self, config: ExperimentConfig, settings: Optional[Settings] = None,
                 keypairs: Optional[Sequence[AheKeypair]] = None):
        self.config = config
        self.settings = settings or load_settings()
        self.keypairs = keypairs
        self.malicious = list(range(config.malicious_count))
        self.metrics: List[RoundMetrics] = []
        self.session: Optional[SecureSession] = None
        self._setup()

    def _setup(self) -> None:
        c = self.config
        data = make_blobs(c.classes, c.features, c.samples_per_class, c.separation, seed=c.seed)
        self.train, self.test = train_test_split(data, c.test_fraction, seed=c.seed)
        self.clients: List[ToyDataset] = partition(self.train, c.clients, c.partition, c.dirichlet_alpha, seed=c.seed)
        for i in self.malicious:
            if c.attack == 'label_flipping':
                self.clients[i] = label_flipping(self.clients[i])
            elif c.attack == 'backdoor':
                self.clients[i] = backdoor(self.clients[i], c.trigger_features, c.trigger_value,
                                           c.target_label, c.poison_fraction, seed=derive_seed(c.seed, i))
        self.triggered = backdoor_test_set(self.test, c.trigger_features, c.trigger_value, c.target_label)
        self.weights = [len(d) for d in self.clients]
        self.model = ToyModel(c.features, c.classes, c.arch, c.hidden, seed=c.seed)
        self.defense = FlurpDefense(
            self.model.parameter_count,
            window=c.window,
            sampler=c.sampler,
            bits=c.bits,
            lur_fixed_bits=c.lur_fixed_bits,
            update_fixed_bits=c.fixed_bits,
            chunk_bits=c.chunk_bits,
            layer_sizes=self.model.layer_sizes,
            strict_overflow=c.strict_overflow,
        )
        logger.info(
            f"Experiment: {c.clients} clients ({len(self.malicious)} malicious, attack={c.attack}), "
            f"defense={c.defense}, mode={c.mode}, {self.model.parameter_count} parameters, "
            f"window={self.defense.window}"
        )

    def local_updates(self, round_index: int) -> np.ndarray:
        """Every client's honest (or sign-flipped) update from the current model."""
        c = self.config
        rows = []
        for i, dataset in enumerate(self.clients):
            rows.append(local_train(
                self.model, dataset,
                epochs=c.epochs,
                batch_size=c.batch_size,
                learning_rate=c.learning_rate,
                momentum=c.momentum,
                seed=derive_seed(c.seed, round_index, i),
                sign_flip=(c.attack == 'sign_flipping' and i in self.malicious),
            ))
        return np.vstack(rows)

    def inject(self, updates: np.ndarray, round_index: int) -> Tuple[np.ndarray, dict]:
        """
        Replace malicious rows for the update-level attacks.

        Returns:
            Tuple of (updates, adaptive attack info)
        """
        c = self.config
        if c.attack not in UPDATE_ATTACKS or not self.malicious:
            return updates, {}
        seed = derive_seed(c.seed, round_index, 0xA7)
        ctx = AttackContext(updates, self.malicious, seed)
        info = {}
        if c.attack == 'noise':
            poisoned = noise_attack((len(self.malicious), updates.shape[1]), c.noise_mean, c.noise_std, seed)
        elif c.attack == 'alie':
            poisoned = alie(ctx, c.alie_quantile)
        elif c.attack == 'minmax':
            poisoned, _ = min_max(ctx)
        elif c.attack == 'ipm':
            poisoned = ipm(ctx, c.ipm_alpha)
        else:
            result = adaptive_flurp(ctx, lambda u: self.defense.plaintext_round(u, self.weights).qualified)
            poisoned = result.updates
            info = {'gamma': result.gamma, 'acceptance': result.acceptance, 'epsilon': result.epsilon}
        return ctx.assemble(poisoned), info

    def fedavg(self, updates: np.ndarray) -> np.ndarray:
        return np.average(updates, axis=0, weights=np.asarray(self.weights, dtype=np.float64))

    def _client_shares(self, updates: np.ndarray, round_index: int) -> List[Tuple[ClientShares, ClientShares]]:
        updates_ring, lurs_ring = self.defense.encode(updates)
        return [
            self.defense.client_shares(updates_ring[i], lurs_ring[i], self.weights[i],
                                       seed=derive_seed(self.config.seed, round_index, i, 0x5A))
            for i in range(len(updates))
        ]

    def defend(self, updates: np.ndarray, round_index: int) -> DefenseOutcome:
        """Aggregate one round's updates with the configured defense and mode."""
        if self.config.defense == 'fedavg':
            aggregate = self.fedavg(updates)
            return DefenseOutcome(list(range(len(updates))), aggregate, aggregate)
        if self.config.mode == 'oracle':
            return self.defense.plaintext_round(updates, self.weights)
        if self.session is None:
            self.session = SecureSession(self.config, self.settings, self.keypairs)
        return self.session.run_round(self.defense, self._client_shares(updates, round_index))

    def attack_success_rate(self) -> float:
        if len(self.triggered) == 0:
            return 0.0
        predicted = self.model.predict(self.triggered.features)
        return float(np.mean(predicted == self.config.target_label))

    def run_round(self, round_index: int) -> RoundMetrics:
        started = time.time()
        updates, info = self.inject(self.local_updates(round_index), round_index)
        skipped = False
        qualified: List[int] = []
        counters = {}
        try:
            outcome = self.defend(updates, round_index)
            self.model.params = self.model.params + outcome.update
            qualified = outcome.qualified
            counters = outcome.counters
        except NoQualifiedClientsError:
            logger.warning(f"Round {round_index}: no client qualified, model kept")
            skipped = True
        metrics = RoundMetrics(
            round=round_index,
            main_accuracy=self.model.accuracy(self.test),
            attack_success_rate=self.attack_success_rate(),
            qualified=list(qualified),
            malicious_qualified=[i for i in qualified if i in self.malicious],
            skipped=skipped,
            counters=counters,
            upload_bytes=self.defense.upload_bytes() if self.config.defense == 'flurp' else 0,
            **info,
        )
        logger.info(
            f"Round {round_index}: MA={metrics.main_accuracy:.4f} ASR={metrics.attack_success_rate:.4f} "
            f"qualified={metrics.qualified} malicious_qualified={metrics.malicious_qualified} "
            f"({time.time() - started:.2f}s)"
        )
        return metrics

    def run(self) -> List[RoundMetrics]:
        """
        Run all configured rounds.

        Returns:
            One RoundMetrics per round
        """
        try:
            for t in range(self.config.rounds):
                self.metrics.append(self.run_round(t))
        finally:
            if self.session is not None:
                self.session.close()
                self.session = None
        final = self.metrics[-1]
        logger.info(f"Experiment complete: final MA={final.main_accuracy:.4f} ASR={final.attack_success_rate:.4f}")
        return self.metrics


def run_experiment(config: ExperimentConfig, settings: Optional[Settings] = None,
                   keypairs: Optional[Sequence[AheKeypair]] = None) -> List[RoundMetrics]:
    return ExperimentEngine(config, settings, keypairs).run()
