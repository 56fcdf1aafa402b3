import numpy as np
import pytest

from src.attacks import (
    AttackContext,
    adaptive_flurp,
    alie,
    alie_alpha,
    apply_trigger,
    backdoor,
    backdoor_test_set,
    ipm,
    label_flipping,
    min_max,
    min_max_alpha,
    noise_attack,
    shift_ratio,
    sign_flipping,
)
from src.defense import FlurpDefense
from src.exceptions import NoQualifiedClientsError
from src.fl import ToyDataset, ToyModel, local_train, make_blobs


@pytest.fixture
def ctx(rng):
    return AttackContext(rng.normal(0.0, 1.0, size=(10, 20)), malicious=[0, 1, 2])


class TestDataAttacks:
    def test_label_flipping(self):
        dataset = ToyDataset(np.zeros((3, 2)), [3, 0, 9], 10)
        flipped = label_flipping(dataset)
        assert flipped.labels.tolist() == [6, 9, 0]
        assert label_flipping(flipped).labels.tolist() == [3, 0, 9]

    def test_backdoor_poisons_half(self):
        dataset = make_blobs(classes=4, dims=8, per_class=25, seed=1)
        poisoned = backdoor(dataset, poison_fraction=0.5, target=0, seed=2)
        stamped = np.all(poisoned.features[:, :3] == 8.0, axis=1)
        assert stamped.sum() == 50
        assert np.all(poisoned.labels[stamped] == 0)
        assert np.array_equal(poisoned.features[~stamped], dataset.features[~stamped])

    def test_backdoor_test_set(self):
        dataset = make_blobs(classes=4, dims=8, per_class=10, seed=3)
        triggered = backdoor_test_set(dataset, target=2)
        assert len(triggered) == 30
        assert np.all(triggered.labels != 2)
        assert np.all(triggered.features[:, :3] == 8.0)

    def test_apply_trigger_copies(self):
        features = np.zeros((2, 5))
        stamped = apply_trigger(features, 2, 1.5)
        assert stamped[:, :2].tolist() == [[1.5, 1.5], [1.5, 1.5]]
        assert not features.any()

    def test_sign_flipping_reverses_single_step(self):
        dataset = make_blobs(classes=3, dims=6, per_class=20, seed=4)
        model = ToyModel(6, 3, arch='logreg')
        honest = local_train(model, dataset, epochs=1, batch_size=len(dataset))
        flipped = sign_flipping(model, dataset, epochs=1, batch_size=len(dataset))
        assert np.allclose(flipped, -honest)


class TestUpdateAttacks:
    def test_context_splits_clients(self, ctx):
        assert ctx.benign == list(range(3, 10))
        with pytest.raises(ValueError):
            AttackContext(np.zeros((2, 3)), [0, 1])

    def test_noise_moments(self):
        noise = noise_attack((200_000,), mean=0.5, std=2.0, seed=1)
        assert noise.mean() == pytest.approx(0.5, abs=0.02)
        assert noise.std() == pytest.approx(2.0, abs=0.02)

    def test_alie_alpha(self):
        assert alie_alpha(20, 8) == pytest.approx(0.6745, abs=1e-4)

    def test_alie_shifts_by_alpha_sigma(self, ctx):
        poisoned = alie(ctx)
        assert poisoned.shape == (3, 20)
        alpha = alie_alpha(10, 3)
        assert np.allclose(poisoned[1], ctx.mean + alpha * ctx.std)

    def test_alie_zero_std_returns_mean(self):
        updates = np.vstack([np.zeros(4), np.ones((4, 4))])
        poisoned = alie(AttackContext(updates, [0]))
        assert np.allclose(poisoned, 1.0)

    def test_min_max_stays_within_benign_diameter(self, ctx):
        poisoned, alpha = min_max(ctx)
        benign = ctx.benign_updates
        diameter = max(np.linalg.norm(a - b) for a in benign for b in benign)
        assert alpha > 0
        assert np.linalg.norm(benign - poisoned[0], axis=1).max() <= diameter + 1e-9
        too_far = ctx.mean - 1.05 * alpha * ctx.std
        assert np.linalg.norm(benign - too_far, axis=1).max() > diameter

    def test_min_max_equal_updates(self):
        ctx = AttackContext(np.ones((5, 3)), [0])
        assert min_max_alpha(ctx) == 0.0

    def test_ipm_inner_product(self, ctx):
        poisoned = ipm(ctx, alpha=2.0)
        mu = ctx.mean
        assert float(poisoned[0] @ mu) == pytest.approx(-2.0 * float(mu @ mu))

    def test_assemble_replaces_malicious_rows(self, ctx):
        full = ctx.assemble(np.full(20, 7.0))
        assert np.all(full[:3] == 7.0)
        assert np.array_equal(full[3:], ctx.updates[3:])


def gamma_of(ctx, updates):
    """Recover the shift from the first malicious row."""
    return float(np.linalg.norm(updates[ctx.malicious[0]] - ctx.mean) / np.linalg.norm(ctx.std))


class TestAdaptive:
    def test_shift_ratio(self):
        ctx = AttackContext(np.array([[2.0, 4.0], [4.0, 4.0], [0.0, 0.0]]), [2])
        assert shift_ratio(2.0, ctx) == pytest.approx(0.4)

    def test_ties_go_to_larger_gamma(self, ctx):
        result = adaptive_flurp(ctx, lambda updates: range(len(updates)))
        assert result.gamma == pytest.approx(5.0)
        assert result.acceptance == 3

    def test_finds_acceptance_edge(self, ctx):
        def oracle(updates):
            accepted = gamma_of(ctx, updates) <= 1.3
            return ctx.benign + (ctx.malicious if accepted else [])

        result = adaptive_flurp(ctx, oracle)
        assert 1.25 <= result.gamma <= 1.3
        assert result.acceptance == 3
        assert result.epsilon == pytest.approx(shift_ratio(result.gamma, ctx))
        assert np.allclose(result.updates, ctx.mean + result.gamma * ctx.std)

    def test_empty_round_counts_as_rejection(self, ctx):
        def oracle(updates):
            if gamma_of(ctx, updates) > 2.0:
                raise NoQualifiedClientsError("nobody")
            return ctx.malicious

        result = adaptive_flurp(ctx, oracle)
        assert result.gamma <= 2.0
        assert result.acceptance == 3

    def test_best_gamma_against_plaintext_defense(self, rng):
        updates = rng.normal(0.0, 0.01, size=(10, 64))
        ctx = AttackContext(updates, [0, 1, 2])
        defense = FlurpDefense(64, 8)
        weights = [1] * 10
        result = adaptive_flurp(ctx, lambda u: defense.plaintext_round(u, weights).qualified)
        assert result.acceptance == max(result.evaluated.values())
        assert all(result.acceptance >= result.evaluated[round(g, 10)] for g in np.arange(0.0, 5.125, 0.25))
        assert result.updates.shape == (3, 64)

    def test_accepted_shift_is_small_when_benign_cluster(self, rng):
        updates = 0.5 + rng.normal(0.0, 0.01, size=(10, 256))
        ctx = AttackContext(updates, [0, 1, 2, 3])
        defense = FlurpDefense(256, 8)
        result = adaptive_flurp(ctx, lambda u: defense.plaintext_round(u, [1] * 10).qualified)
        assert result.epsilon == pytest.approx(shift_ratio(result.gamma, ctx))
        assert result.epsilon < 0.5
        assert all(shift_ratio(g, ctx) < 0.5 for g, accepted in result.evaluated.items() if accepted)
