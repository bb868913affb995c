import numpy as np
import pytest

from ebmlab.errors import InvalidArgumentError, NumericError
from ebmlab.numerics import (
    OptimizerState,
    RealVector,
    RngStream,
    finite_diff_gradient,
    gaussian_vector,
    optimizer_step,
    rademacher_vector,
)


def test_gaussian_vector_deterministic():
    a = gaussian_vector(RngStream(seed=1), 3)
    b = gaussian_vector(RngStream(seed=1), 3)
    assert np.array_equal(a.entries, b.entries)


def test_gaussian_vector_rejects_zero_dim():
    with pytest.raises(InvalidArgumentError):
        gaussian_vector(RngStream(seed=1), 0)


def test_gaussian_moments_at_1e6_draws():
    draws = RngStream(seed=11).normal(1_000_000)
    assert abs(draws.mean()) < 0.004  # 3 sigma is 0.003; slack allowed
    assert 0.99 < draws.var() < 1.01
    z = (draws - draws.mean()) / draws.std()
    kurtosis = np.mean(z**4)
    assert abs(kurtosis - 3.0) < 0.05


def test_distinct_stream_ids_are_independent():
    a = RngStream(seed=5, stream_id=1).normal(10_000)
    b = RngStream(seed=5, stream_id=2).normal(10_000)
    assert not np.array_equal(a, b)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.03


def test_split_streams_never_collide_and_are_deterministic():
    parent = RngStream(seed=3)
    kids = [parent.split() for _ in range(50)]
    ids = {k.stream_id for k in kids}
    assert len(ids) == 50 and parent.stream_id not in ids
    parent2 = RngStream(seed=3)
    kids2 = [parent2.split() for _ in range(50)]
    assert [k.stream_id for k in kids] == [k.stream_id for k in kids2]


def test_counter_advances_once_per_draw():
    rng = RngStream(seed=9)
    rng.normal(4)
    assert rng.counter == 1
    rng.rademacher((2, 2))
    assert rng.counter == 2


def test_rademacher_entries_and_norm():
    v = rademacher_vector(RngStream(seed=2), 7)
    assert set(np.unique(v.entries)).issubset({-1.0, 1.0})
    assert np.sum(v.entries**2) == 7.0


def test_rademacher_cross_moment():
    draws = RngStream(seed=21).rademacher((100_000, 2))
    assert abs(np.mean(draws[:, 0] * draws[:, 1])) < 0.01  # 3 sigma binomial bound


def test_real_vector_rejects_non_finite():
    with pytest.raises(NumericError):
        RealVector(np.array([1.0, np.inf]))


def test_fd_quadratic_exact_to_rounding():
    g = finite_diff_gradient(lambda x: x[0] ** 2, np.array([3.0]), h=1e-4)
    assert abs(g[0] - 6.0) < 1e-7


def test_fd_constant_is_zero():
    g = finite_diff_gradient(lambda x: 4.2, np.array([1.0, -2.0]))
    assert np.array_equal(g, np.zeros(2))


def test_fd_sin_example():
    g = finite_diff_gradient(lambda x: np.sin(x[0]), np.array([0.0, 5.0]), h=1e-5)
    assert abs(g[0] - 1.0) < 1e-9
    assert g[1] == 0.0


def test_fd_propagates_non_finite_with_coordinate():
    def f(x):
        return np.inf if x[1] > 0.5 else 0.0

    with pytest.raises(NumericError, match="coordinate 1"):
        finite_diff_gradient(f, np.array([0.0, 0.5]))


def test_adam_zero_gradient_noop():
    state = OptimizerState.fresh(3)
    new_state, params = optimizer_step(state, np.ones(3), np.zeros(3))
    assert np.array_equal(params, np.ones(3))
    assert new_state.step_count == 1


def test_adam_first_step_is_signed_lr():
    state = OptimizerState.fresh(2, learning_rate=0.01)
    g = np.array([3.0, -0.5])  # |g| >> epsilon
    _, params = optimizer_step(state, np.zeros(2), g)
    np.testing.assert_allclose(params, -0.01 * np.sign(g), rtol=1e-6)


def test_adam_deterministic():
    s1 = OptimizerState.fresh(2)
    s2 = OptimizerState.fresh(2)
    g = np.array([0.3, -0.7])
    out1 = optimizer_step(s1, np.array([1.0, 2.0]), g)
    out2 = optimizer_step(s2, np.array([1.0, 2.0]), g)
    assert np.array_equal(out1[1], out2[1])
    assert np.array_equal(out1[0].first_moment, out2[0].first_moment)


def test_adam_rejects_dim_mismatch():
    with pytest.raises(InvalidArgumentError):
        optimizer_step(OptimizerState.fresh(2), np.zeros(2), np.zeros(3))
