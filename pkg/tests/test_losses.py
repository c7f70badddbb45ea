import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _oracles import numerical_grad, random_one_hot, random_simplex, rel_error
from simulearn.errors import ShapeError
from simulearn.groups import GroupLayout, Hyperparameters
from simulearn.losses import (
    cce,
    group_penalty,
    sll,
    sll_batch,
    sll_grad_logits,
    weighted_group_loss,
    wgcc,
)
from simulearn.ops import softmax

LAYOUT = GroupLayout(k=2, m=2)


def _sample(rng, layout, group="target"):
    y = np.zeros(layout.n)
    if group == "target":
        y[rng.integers(layout.k)] = 1.0
    else:
        y[layout.k + rng.integers(layout.m)] = 1.0
    return y, random_simplex(rng, layout.n)


class TestCce:
    def test_perfect_prediction_is_zero(self):
        y = np.array([0.0, 1.0, 0.0])
        p = np.array([0.0, 1.0, 0.0])
        assert cce(y, p) == 0.0

    def test_half_confidence_is_ln2(self):
        y = np.array([1.0, 0.0])
        p = np.array([0.5, 0.5])
        assert cce(y, p) == pytest.approx(0.6931471805599453, abs=1e-15)

    def test_matches_scalar_oracle_on_random_simplex(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            n = int(rng.integers(2, 9))
            p = random_simplex(rng, n)
            hot = int(rng.integers(n))
            y = np.zeros(n)
            y[hot] = 1.0
            assert cce(y, p) == pytest.approx(-math.log(p[hot]), rel=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            cce(np.array([1.0, 0.0]), np.array([1.0, 0.0, 0.0]))


class TestWeightedGroupLoss:
    def test_single_group_reduces_to_cce(self):
        rng = np.random.default_rng(3)
        y, p = _sample(rng, LAYOUT)
        assert weighted_group_loss(y, p, [range(4)], [1.0]) == cce(y, p)

    def test_two_groups_equal_wgcc(self):
        rng = np.random.default_rng(4)
        for lam in (0.0, 0.3, 0.7, 1.0):
            y, p = _sample(rng, LAYOUT, "auxiliary")
            got = weighted_group_loss(y, p, [range(2), range(2, 4)], [lam, 1.0 - lam])
            assert got == wgcc(y, p, lam, layout=LAYOUT)

    def test_three_groups_match_hand_summation(self):
        rng = np.random.default_rng(5)
        n = 6
        p = random_simplex(rng, n)
        y = np.zeros(n)
        y[4] = 1.0
        groups = [[0, 1], [2, 3], [4, 5]]
        weights = [0.5, 0.2, 0.3]
        expected = 0.0
        for idx, w in zip(groups, weights):
            expected += w * sum(-y[i] * math.log(max(p[i], 1e-12)) for i in idx)
        got = weighted_group_loss(y, p, groups, weights)
        assert got == pytest.approx(expected, rel=1e-14)

    def test_overlapping_partition_rejected(self):
        y, p = np.array([1.0, 0, 0]), np.array([0.5, 0.3, 0.2])
        with pytest.raises(ValueError):
            weighted_group_loss(y, p, [[0, 1], [1, 2]], [0.5, 0.5])

    def test_incomplete_partition_rejected(self):
        y, p = np.array([1.0, 0, 0]), np.array([0.5, 0.3, 0.2])
        with pytest.raises(ValueError):
            weighted_group_loss(y, p, [[0, 1]], [1.0])

    def test_negative_weight_rejected(self):
        y, p = np.array([1.0, 0]), np.array([0.5, 0.5])
        with pytest.raises(ValueError):
            weighted_group_loss(y, p, [[0], [1]], [-0.1, 1.1])


class TestWgcc:
    def test_lam_one_equals_target_restricted_cce(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            y, p = _sample(rng, LAYOUT, "target")
            assert wgcc(y, p, 1.0, layout=LAYOUT) == cce(y[:2], p[:2])

    def test_lam_zero_on_target_sample_is_zero(self):
        rng = np.random.default_rng(7)
        y, p = _sample(rng, LAYOUT, "target")
        assert wgcc(y, p, 0.0, layout=LAYOUT) == 0.0

    def test_hand_oracle_value(self):
        # target sample, lam=0.7: only the target hot term contributes,
        # so the loss is 0.7 * (-ln 0.4)
        y = np.array([1.0, 0.0, 0.0, 0.0])
        p = np.array([0.4, 0.1, 0.3, 0.2])
        assert wgcc(y, p, 0.7, layout=LAYOUT) == pytest.approx(
            0.6414035123119085, abs=1e-15
        )

    @pytest.mark.parametrize("lam", [-0.01, 1.01])
    def test_lam_out_of_range(self, lam):
        y, p = np.zeros(4), np.full(4, 0.25)
        y[0] = 1.0
        with pytest.raises(ValueError):
            wgcc(y, p, lam, layout=LAYOUT)


class TestGroupPenalty:
    def test_mass_in_own_group_gives_zero(self):
        y = np.array([1.0, 0.0, 0.0, 0.0])
        p = np.array([0.6, 0.4, 0.0, 0.0])
        assert group_penalty(y, p, 1.0, 1.0, layout=LAYOUT) == 0.0

    def test_target_sample_fully_misplaced(self):
        y = np.array([1.0, 0.0, 0.0, 0.0])
        p = np.array([0.0, 0.0, 0.7, 0.3])
        assert group_penalty(y, p, 1.0, 1.0, layout=LAYOUT) == 1.0

    def test_aux_sample_partial_leak(self):
        y = np.array([0.0, 0.0, 1.0, 0.0])
        p = np.array([0.2, 0.1, 0.5, 0.2])
        assert group_penalty(y, p, 1.0, 1.0, layout=LAYOUT) == pytest.approx(0.3)

    def test_beta_zero_vanishes_on_aux_samples(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            y, p = _sample(rng, LAYOUT, "auxiliary")
            assert group_penalty(y, p, 2.5, 0.0, layout=LAYOUT) == 0.0

    def test_negative_factors_rejected(self):
        y, p = np.array([1.0, 0, 0, 0]), np.full(4, 0.25)
        with pytest.raises(ValueError):
            group_penalty(y, p, -1.0, 0.0, layout=LAYOUT)
        with pytest.raises(ValueError):
            group_penalty(y, p, 0.0, -1.0, layout=LAYOUT)

    def test_bounds_over_random_draws(self):
        rng = np.random.default_rng(9)
        alpha, beta = 1.3, 0.4
        for _ in range(2000):
            group = "target" if rng.random() < 0.5 else "auxiliary"
            y, p = _sample(rng, LAYOUT, group)
            gp = group_penalty(y, p, alpha, beta, layout=LAYOUT)
            assert 0.0 <= gp <= max(alpha, beta)


class TestSll:
    def test_reduces_to_target_cce(self):
        rng = np.random.default_rng(10)
        h = Hyperparameters(lam=1.0, alpha=0.0, beta=0.0)
        for _ in range(20):
            y, p = _sample(rng, LAYOUT, "target")
            assert sll(y, p, h, layout=LAYOUT) == cce(y[:2], p[:2])

    def test_hand_oracle_with_penalty(self):
        # hot target prob 0.6, auxiliary mass 0.2: -ln 0.6 + 0.2
        y = np.array([1.0, 0.0, 0.0, 0.0])
        p = np.array([0.6, 0.2, 0.15, 0.05])
        h = Hyperparameters(lam=1.0, alpha=1.0, beta=1.0)
        assert sll(y, p, h, layout=LAYOUT) == pytest.approx(
            0.7108256237659907, abs=1e-15
        )

    def test_batch_mean_matches_loop(self):
        rng = np.random.default_rng(12)
        h = Hyperparameters(lam=0.6, alpha=1.3, beta=0.4)
        ys, ps = [], []
        for _ in range(16):
            group = "target" if rng.random() < 0.5 else "auxiliary"
            y, p = _sample(rng, LAYOUT, group)
            ys.append(y)
            ps.append(p)
        ys, ps = np.array(ys), np.array(ps)
        looped = np.mean([sll(y, p, h, layout=LAYOUT) for y, p in zip(ys, ps)])
        assert sll_batch(ys, ps, h, layout=LAYOUT) == pytest.approx(looped, rel=1e-14)

    @given(
        lam=st.floats(0.0, 1.0),
        alpha=st.floats(0.0, 5.0),
        beta=st.floats(0.0, 5.0),
        seed=st.integers(0, 2**31),
    )
    @settings(max_examples=150, deadline=None)
    def test_nonnegative(self, lam, alpha, beta, seed):
        rng = np.random.default_rng(seed)
        group = "target" if rng.random() < 0.5 else "auxiliary"
        y, p = _sample(rng, LAYOUT, group)
        h = Hyperparameters(lam=lam, alpha=alpha, beta=beta)
        assert sll(y, p, h, layout=LAYOUT) >= 0.0


class TestSllGradLogits:
    def test_reduces_to_softmax_minus_label(self):
        rng = np.random.default_rng(13)
        h = Hyperparameters(lam=1.0, alpha=0.0, beta=0.0)
        layout = GroupLayout(k=4, m=0)
        z = rng.normal(size=4)
        y = random_one_hot(rng, 4)
        got = sll_grad_logits(y, z, h, layout=layout)
        np.testing.assert_allclose(got, softmax(z) - y, atol=1e-12)

    def test_finite_difference_named_case(self):
        rng = np.random.default_rng(14)
        layout = GroupLayout(k=3, m=4)
        h = Hyperparameters(lam=0.6, alpha=1.3, beta=0.4)
        z = rng.normal(size=7)
        y = np.zeros(7)
        y[rng.integers(7)] = 1.0
        analytic = sll_grad_logits(y, z, h, layout=layout)
        numeric = numerical_grad(lambda zz: sll(y, softmax(zz), h, layout=layout), z)
        assert rel_error(analytic, numeric) < 1e-6

    def test_finite_difference_random_sweep(self):
        rng = np.random.default_rng(15)
        for _ in range(100):
            k = int(rng.integers(1, 5))
            m = int(rng.integers(0, 5))
            layout = GroupLayout(k=k, m=m)
            h = Hyperparameters(
                lam=float(rng.random()),
                alpha=float(rng.random() * 2),
                beta=float(rng.random() * 2),
            )
            z = rng.normal(size=layout.n) * 2.0
            y = random_one_hot(rng, layout.n)
            analytic = sll_grad_logits(y, z, h, layout=layout)
            numeric = numerical_grad(lambda zz: sll(y, softmax(zz), h, layout=layout), z)
            assert rel_error(analytic, numeric) < 1e-6

    def test_uniform_logits_symmetry(self):
        # with uniform logits and a target label, every auxiliary component
        # of the gradient is identical by symmetry
        layout = GroupLayout(k=2, m=3)
        h = Hyperparameters(lam=0.5, alpha=1.0, beta=1.0)
        y = np.array([1.0, 0, 0, 0, 0])
        z = np.zeros(5)
        g = sll_grad_logits(y, z, h, layout=layout)
        aux = g[layout.aux_slice]
        np.testing.assert_allclose(aux, aux[0], atol=1e-15)

    def test_batch_shape_matches(self):
        rng = np.random.default_rng(16)
        layout = GroupLayout(k=2, m=2)
        h = Hyperparameters(lam=0.5)
        z = rng.normal(size=(6, 4))
        y = np.array([random_one_hot(rng, 4) for _ in range(6)])
        g = sll_grad_logits(y, z, h, layout=layout)
        assert g.shape == (6, 4)
        for i in range(6):
            np.testing.assert_allclose(
                g[i], sll_grad_logits(y[i], z[i], h, layout=layout), atol=1e-14
            )
