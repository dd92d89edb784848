import numpy as np
import pytest

from oracles import adamw_reference
from phonodec.errors import ParameterError
from phonodec.training import (AdamWState, AugmentPolicy, SchedulerConfig,
                               adamw_step, clip_grad_norm, cosine_lr,
                               label_smooth, specaugment)


class TestAdamW:
    def test_decay_only_path(self):
        theta = np.array([1.0])
        state = AdamWState.zeros_like(theta)
        new_theta, _ = adamw_step(theta, np.array([0.0]), state, lr=0.1,
                                  weight_decay=0.01)
        assert new_theta[0] == pytest.approx(0.999, abs=1e-15)

    def test_first_step_unit_gradient(self):
        theta = np.array([0.0])
        state = AdamWState.zeros_like(theta)
        new_theta, state = adamw_step(theta, np.array([1.0]), state, lr=0.1,
                                      weight_decay=0.0)
        # bias-corrected m/sqrt(v) is 1 up to eps on the first step
        assert new_theta[0] == pytest.approx(-0.1, abs=1e-8)
        assert state.step == 1

    def test_two_step_scalar_trace_matches_reference(self):
        grads = [0.3, -1.2]
        expected = adamw_reference(0.5, grads, lr=0.05)
        theta = np.array([0.5])
        state = AdamWState.zeros_like(theta)
        for g, want in zip(grads, expected):
            theta, state = adamw_step(theta, np.array([g]), state, lr=0.05)
            assert theta[0] == pytest.approx(want, abs=1e-12)

    def test_identity_under_zero_grad_zero_decay(self, rng):
        theta = rng.normal(size=(3, 2))
        state = AdamWState.zeros_like(theta)
        new_theta, _ = adamw_step(theta, np.zeros_like(theta), state, lr=0.1,
                                  weight_decay=0.0)
        assert np.array_equal(new_theta, theta)

    def test_shape_mismatch_rejected(self):
        theta = np.zeros(3)
        with pytest.raises(ParameterError):
            adamw_step(theta, np.zeros(4), AdamWState.zeros_like(theta), lr=0.1)


class TestCosineLr:
    CFG = SchedulerConfig(eta_max=3e-4, eta_min=0.0, warmup_epochs=10,
                          total_epochs=100)

    def test_endpoints(self):
        assert cosine_lr(0, self.CFG) == 0.0
        assert cosine_lr(10, self.CFG) == pytest.approx(3e-4, abs=1e-18)
        assert cosine_lr(100, self.CFG) == pytest.approx(0.0, abs=1e-18)

    def test_continuous_at_warmup(self):
        before = cosine_lr(10 - 1e-9, self.CFG)
        after = cosine_lr(10 + 1e-9, self.CFG)
        assert before == pytest.approx(after, abs=1e-10)

    def test_monotone_nonincreasing_after_warmup(self):
        values = [cosine_lr(t, self.CFG) for t in np.linspace(10, 100, 181)]
        assert all(a >= b - 1e-18 for a, b in zip(values, values[1:]))

    def test_fractional_steps_allowed(self):
        assert cosine_lr(5.5, self.CFG) == pytest.approx(3e-4 * 0.55)

    def test_invalid_config_rejected(self):
        with pytest.raises(ParameterError):
            SchedulerConfig(warmup_epochs=100, total_epochs=100)


class TestLabelSmooth:
    def test_matches_42_class_recipe(self):
        dist = label_smooth(7, 42, eps=0.1)
        assert dist[7] == pytest.approx(0.9, abs=1e-15)
        others = np.delete(dist, 7)
        assert np.allclose(others, 0.1 / 41.0, atol=1e-15)

    def test_zero_eps_is_one_hot(self):
        dist = label_smooth(3, 10, eps=0.0)
        assert dist[3] == 1.0
        assert dist.sum() == 1.0

    def test_sums_to_one(self, rng):
        for _ in range(50):
            vocab = int(rng.integers(2, 60))
            eps = float(rng.uniform(0.0, 0.99))
            dist = label_smooth(int(rng.integers(0, vocab)), vocab, eps)
            assert dist.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(dist >= 0.0)


class TestClipGradNorm:
    def test_three_four_five(self):
        clipped, norm = clip_grad_norm([np.array([3.0, 4.0])], max_norm=1.0)
        assert norm == pytest.approx(5.0)
        assert np.allclose(clipped[0], [0.6, 0.8])

    def test_below_threshold_unchanged(self):
        grads = [np.array([0.1, 0.2])]
        clipped, norm = clip_grad_norm(grads, max_norm=1.0)
        assert np.array_equal(clipped[0], grads[0])
        assert norm < 1.0

    def test_post_clip_norm(self, rng):
        for _ in range(20):
            grads = [rng.normal(size=(4,)) * 10, rng.normal(size=(2, 3)) * 10]
            clipped, norm = clip_grad_norm(grads, max_norm=1.0)
            post = np.sqrt(sum(np.sum(g * g) for g in clipped))
            assert post == pytest.approx(min(norm, 1.0), abs=1e-9)

    def test_idempotent(self, rng):
        grads = [rng.normal(size=(5,)) * 7]
        once, _ = clip_grad_norm(grads, max_norm=1.0)
        twice, _ = clip_grad_norm(once, max_norm=1.0)
        assert np.allclose(once[0], twice[0], atol=1e-15)


class TestSpecAugment:
    def test_zero_widths_identity(self, rng):
        x = rng.normal(size=(50, 20))
        policy = AugmentPolicy(n_time_masks=3, max_time_width=0,
                               n_channel_masks=2, max_channel_width=0, seed=1)
        assert np.array_equal(specaugment(x, policy), x)

    def test_same_seed_same_output(self, rng):
        x = rng.normal(size=(120, 30))
        policy = AugmentPolicy(seed=9, max_time_width=40, max_channel_width=10)
        assert np.array_equal(specaugment(x, policy), specaugment(x, policy))

    def test_masked_region_structure(self, rng):
        # diff-scan oracle: differing cells lie in <= n_t full rows and
        # <= n_c full columns, and are zero afterwards
        x = rng.normal(size=(200, 40)) + 5.0  # keep all entries nonzero
        policy = AugmentPolicy(n_time_masks=3, max_time_width=30,
                               n_channel_masks=2, max_channel_width=8, seed=4)
        out = specaugment(x, policy)
        diff = out != x
        changed_rows = np.where(diff.all(axis=1))[0]
        changed_cols = np.where(diff.all(axis=0))[0]
        remaining = diff.copy()
        remaining[changed_rows, :] = False
        remaining[:, changed_cols] = False
        assert not remaining.any()
        assert len(changed_rows) <= 3 * 30
        assert len(changed_cols) <= 2 * 8
        assert np.all(out[changed_rows, :] == 0.0)
        assert np.all(out[:, changed_cols] == 0.0)

    def test_never_increases_nonzeros(self, rng):
        for seed in range(10):
            x = rng.normal(size=(60, 15))
            policy = AugmentPolicy(seed=seed, max_time_width=20,
                                   max_channel_width=5)
            out = specaugment(x, policy)
            assert np.count_nonzero(out) <= np.count_nonzero(x)

    def test_oversized_widths_rejected(self, rng):
        with pytest.raises(ParameterError):
            specaugment(rng.normal(size=(10, 10)),
                        AugmentPolicy(max_time_width=11, max_channel_width=2))
