import numpy as np
import pytest
from helpers import grad_check, numeric_grad, projection_loss, rel_err
from hypothesis import given, settings
from hypothesis import strategies as st

from ecgrhythm import autodiff as ad
from ecgrhythm.errors import (DomainError, NonFiniteValue, NotScalar,
                              ShapeMismatch)

RNG = np.random.default_rng(1234)


def randn(*shape):
    return RNG.standard_normal(shape)


def away_from_zero(*shape, margin=0.05):
    x = RNG.standard_normal(shape)
    x += np.sign(x) * margin
    return x


# --- forward values ---

def test_relu_values():
    out = ad.relu(ad.tensor([-1.0, 2.0]))
    assert out.data.tolist() == [0.0, 2.0]


def test_softmax_uniform():
    out = ad.softmax(ad.tensor([[3.0] * 5]))
    np.testing.assert_allclose(out.data, 0.2)


def test_softmax_rows_sum_to_one():
    out = ad.softmax(ad.tensor(randn(40, 5)), axis=-1)
    np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-9)


def test_conv1d_hand_example():
    out = ad.conv1d(ad.tensor([1.0, 2.0, 3.0]), ad.tensor([1.0, 1.0]), stride=1)
    assert out.data.tolist() == [3.0, 5.0]


def test_avg_pool1d_values():
    out = ad.avg_pool1d(ad.tensor([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), width=3, stride=3)
    assert out.data.tolist() == [2.0, 5.0]


def test_cross_entropy_perfect_prediction():
    probs = np.zeros((1, 5))
    probs[0, 2] = 1.0
    loss = ad.cross_entropy(ad.tensor(probs), [2])
    assert loss.item() == 0.0


def test_cross_entropy_uniform_is_ln5():
    loss = ad.cross_entropy(ad.tensor(np.full((3, 5), 0.2)), [0, 3, 4])
    np.testing.assert_allclose(loss.item(), np.log(5.0), rtol=1e-12)


def test_cross_entropy_rejects_bad_rows():
    with pytest.raises(DomainError):
        ad.cross_entropy(ad.tensor([[0.5, 0.2, 0.1, 0.1, 0.2]]), [0])


def test_reconstruction_loss_matches_loop():
    x, y = randn(6, 7), randn(6, 7)
    loss = ad.reconstruction_loss(ad.tensor(x), ad.tensor(y)).item()
    acc = 0.0
    for i in range(6):
        for j in range(7):
            acc += (x[i, j] - y[i, j]) ** 2
    np.testing.assert_allclose(loss, acc / 42.0, rtol=1e-12)


def test_reconstruction_loss_simple_cases():
    x = ad.tensor([0.0, 0.0])
    assert ad.reconstruction_loss(x, x).item() == 0.0
    assert ad.reconstruction_loss(x, ad.tensor([1.0, 1.0])).item() == 1.0


def kl_quadrature(mu, var):
    xs = np.linspace(-40.0, 40.0, 400001)
    q = np.exp(-((xs - mu) ** 2) / (2 * var)) / np.sqrt(2 * np.pi * var)
    p = np.exp(-(xs ** 2) / 2) / np.sqrt(2 * np.pi)
    mask = q > 0
    return float(np.trapezoid(np.where(mask, q * (np.log(q + 1e-300) - np.log(p + 1e-300)), 0.0), xs))


def test_gaussian_kl_identical_distributions():
    z = ad.tensor([[0.0]])
    assert ad.gaussian_kl(z, z).item() == 0.0


def test_gaussian_kl_matches_quadrature_oracle():
    got = ad.gaussian_kl(ad.tensor([[1.0]]), ad.tensor([[0.0]])).item()
    np.testing.assert_allclose(got, kl_quadrature(1.0, 1.0), atol=1e-6)
    assert abs(got - 0.5) < 1e-12

    got = ad.gaussian_kl(ad.tensor([[0.0]]), ad.tensor([[np.log(4.0)]])).item()
    np.testing.assert_allclose(got, kl_quadrature(0.0, 4.0), atol=1e-6)
    np.testing.assert_allclose(got, 0.5 * (4.0 - 1.0 - np.log(4.0)), rtol=1e-12)


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-4, 3)), min_size=1, max_size=32))
@settings(max_examples=200, deadline=None)
def test_gaussian_kl_nonnegative(pairs):
    mean = ad.tensor([[m for m, _ in pairs]])
    log_var = ad.tensor([[v for _, v in pairs]])
    assert ad.gaussian_kl(mean, log_var).item() >= -1e-12


# --- reparameterization ---

def test_reparameterize_scale_zero_is_mean():
    mean = ad.tensor(randn(4, 8))
    out = ad.reparameterize(mean, ad.tensor(randn(4, 8)), 0.0, ad.Rng(0))
    np.testing.assert_array_equal(out.data, mean.data)


def test_reparameterize_statistics():
    rng = ad.Rng(42)
    n = 100_000
    zeros = ad.tensor(np.zeros((n, 1)))
    z = ad.reparameterize(zeros, zeros, 1.0, rng).data
    assert abs(z.mean()) < 0.02
    assert abs(z.std() - 1.0) < 0.02
    z = ad.reparameterize(zeros, zeros, 0.3, ad.Rng(43)).data
    assert abs(z.std() - 0.3) < 0.01


def test_reparameterize_reproducible_bitwise():
    mean, lv = ad.tensor(randn(5, 3)), ad.tensor(randn(5, 3))
    a = ad.reparameterize(mean, lv, 0.7, ad.Rng(9, (1, 2))).data
    b = ad.reparameterize(mean, lv, 0.7, ad.Rng(9, (1, 2))).data
    assert np.array_equal(a, b)


def test_rng_split_streams_differ_and_reproduce():
    r = ad.Rng(5)
    a, b = r.split(0), r.split(1)
    assert not np.array_equal(a.normal((8,)), b.normal((8,)))
    assert np.array_equal(ad.Rng(5).split(0).normal((8,)), ad.Rng(5).split(0).normal((8,)))


# --- backward basics ---

def test_backward_sum_gives_ones():
    x = ad.parameter(randn(3, 4))
    with ad.Tape() as t:
        ad.backward(ad.reduce_sum(x), t)
    np.testing.assert_array_equal(x.grad, np.ones((3, 4)))


def test_backward_product_rule():
    x, y = ad.parameter([2.0]), ad.parameter([3.0])
    with ad.Tape() as t:
        ad.backward(ad.reduce_sum(ad.mul(x, y)), t)
    assert x.grad.tolist() == [3.0]
    assert y.grad.tolist() == [2.0]


def test_backward_requires_scalar():
    x = ad.parameter(randn(3))
    with ad.Tape() as t:
        y = ad.relu(x)
        with pytest.raises(NotScalar):
            ad.backward(y, t)


def test_nonparticipating_leaf_gets_zero():
    x, y = ad.parameter(randn(3)), ad.parameter(randn(3))
    with ad.Tape() as t:
        _unused = ad.relu(y)
        ad.backward(ad.reduce_sum(x), t)
    np.testing.assert_array_equal(y.grad, np.zeros(3))


def test_same_forward_twice_same_grads():
    data = randn(4, 4)
    grads = []
    for _ in range(2):
        w = ad.parameter(data.copy())
        with ad.Tape() as t:
            loss = ad.reduce_sum(ad.tanh(ad.matmul(w, w)))
            ad.backward(loss, t)
        grads.append(w.grad.copy())
    assert np.array_equal(grads[0], grads[1])


def test_shape_mismatch_reports_both_shapes():
    with pytest.raises(ShapeMismatch) as exc:
        ad.matmul(ad.tensor(randn(2, 3)), ad.tensor(randn(4, 2)))
    assert "(2, 3)" in str(exc.value) and "(4, 2)" in str(exc.value)


def test_nan_tripwire():
    assert ad.debug_checks_enabled()
    with np.errstate(over="ignore"), pytest.raises(NonFiniteValue):
        ad.mul(ad.tensor([1e308]), ad.tensor([1e308]))


# --- gradient checks: every differentiable op ---

def test_grad_add():
    grad_check(lambda a, b: ad.reduce_sum(ad.mul(ad.add(a, b), ad.add(a, b))),
               [randn(3, 4), randn(3, 4)])


def test_grad_add_scalar():
    grad_check(lambda a: ad.reduce_sum(ad.tanh(ad.add(a, 0.7))), [randn(5)])


def test_grad_sub():
    grad_check(lambda a, b: ad.reduce_sum(ad.mul(ad.sub(a, b), ad.sub(a, b))),
               [randn(3, 4), randn(3, 4)])


def test_grad_sub_scalar_lhs():
    grad_check(lambda a: ad.reduce_sum(ad.tanh(ad.sub(1.0, a))), [randn(6)])


def test_grad_mul():
    grad_check(projection_loss(ad.mul), [randn(4, 3), randn(4, 3)])


def test_grad_mul_scalar():
    grad_check(lambda a: ad.reduce_sum(ad.mul(a, 2.5)), [randn(4)])


def test_grad_matmul():
    grad_check(projection_loss(ad.matmul), [randn(4, 6), randn(6, 3)])


def test_grad_dense():
    grad_check(projection_loss(ad.dense), [randn(5, 4), randn(4, 3), randn(3)])


def test_grad_conv1d_multichannel():
    grad_check(projection_loss(lambda x, w, b: ad.conv1d(x, w, b, stride=1, padding=1)),
               [randn(2, 3, 12), randn(4, 3, 3), randn(4)])


def test_grad_conv1d_strided():
    grad_check(projection_loss(lambda x, w: ad.conv1d(x, w, stride=2)),
               [randn(2, 2, 11), randn(3, 2, 3)])


def test_grad_conv1d_flat():
    grad_check(projection_loss(lambda x, w: ad.conv1d(x, w)), [randn(9), randn(3)])


def test_grad_avg_pool1d():
    grad_check(projection_loss(lambda x: ad.avg_pool1d(x, 3, 3)), [randn(4, 12)])


def test_grad_relu_away_from_kink():
    grad_check(projection_loss(ad.relu), [away_from_zero(4, 5)])


def test_grad_tanh():
    grad_check(projection_loss(ad.tanh), [randn(4, 5)])


def test_grad_sigmoid():
    grad_check(projection_loss(ad.sigmoid), [randn(4, 5)])


def test_grad_softmax():
    grad_check(projection_loss(lambda x: ad.softmax(x, axis=-1)), [randn(4, 5)])


def test_grad_concat():
    grad_check(projection_loss(lambda a, b: ad.concat([a, b], axis=1)),
               [randn(3, 2), randn(3, 4)])


def test_grad_narrow():
    grad_check(projection_loss(lambda x: ad.narrow(x, 1, 1, 3)), [randn(4, 6)])


def test_grad_reshape():
    grad_check(projection_loss(lambda x: ad.reshape(x, (6, 2))), [randn(3, 4)])


def test_grad_reduce_sum_axis():
    grad_check(projection_loss(lambda x: ad.reduce_sum(x, axis=1)), [randn(3, 5)])


def test_grad_reduce_mean_axis():
    grad_check(projection_loss(lambda x: ad.reduce_mean(x, axis=0)), [randn(3, 5)])


def test_grad_stack_unstack():
    def op(a, b):
        stacked = ad.stack([a, b], axis=1)
        parts = ad.unstack(stacked, axis=1)
        return ad.concat(parts, axis=1)

    grad_check(projection_loss(op), [randn(3, 4), randn(3, 4)])


def test_grad_weighted_sum():
    grad_check(projection_loss(ad.weighted_sum), [randn(3, 5, 4), randn(3, 5)])


def test_grad_gru_cell():
    grad_check(projection_loss(ad.gru_cell),
               [randn(4, 3), randn(4, 5), randn(3, 15), randn(5, 15),
                randn(15), randn(15)])


def test_grad_reconstruction_loss():
    grad_check(ad.reconstruction_loss, [randn(4, 6), randn(4, 6)])


def test_grad_gaussian_kl():
    grad_check(ad.gaussian_kl, [randn(5, 3), randn(5, 3)])


def test_grad_cross_entropy_through_softmax():
    labels = [0, 2, 4, 1]
    grad_check(lambda z: ad.cross_entropy(ad.softmax(z, axis=-1), labels),
               [randn(4, 5)])


def test_grad_softmax_cross_entropy_fused():
    labels = [0, 2, 4, 1]
    grad_check(lambda z: ad.softmax_cross_entropy(z, labels), [randn(4, 5)])


def test_fused_and_composed_ce_grads_agree():
    z = randn(6, 5)
    labels = [0, 1, 2, 3, 4, 2]
    p1 = ad.parameter(z.copy())
    with ad.Tape() as t:
        ad.backward(ad.softmax_cross_entropy(p1, labels), t)
    p2 = ad.parameter(z.copy())
    with ad.Tape() as t:
        ad.backward(ad.cross_entropy(ad.softmax(p2, axis=-1), labels), t)
    assert rel_err(p1.grad, p2.grad) < 1e-9


def test_grad_reparameterize_fixed_stream():
    def make(mean, lv):
        z = ad.reparameterize(mean, lv, 0.6, ad.Rng(77))
        return ad.reduce_sum(ad.mul(z, z))

    grad_check(make, [randn(4, 3), randn(4, 3)])


# --- optimizer ---

def test_adam_zero_grad_keeps_params():
    p = ad.parameter([1.0, -2.0])
    opt = ad.Adam([p], lr=0.1)
    p.grad = np.zeros(2)
    opt.step()
    assert p.data.tolist() == [1.0, -2.0]


def test_adam_first_step_matches_hand_update():
    p = ad.parameter([0.0])
    opt = ad.Adam([p], lr=0.1)
    p.grad = np.array([1.0])
    opt.step()
    # bias-corrected first step: lr * g / (|g| + eps) ~= lr
    np.testing.assert_allclose(p.data, [-0.1], rtol=1e-6)


def test_adam_shape_mismatch():
    p = ad.parameter([0.0, 1.0])
    opt = ad.Adam([p])
    p.grad = np.zeros(3)
    with pytest.raises(ShapeMismatch):
        opt.step()


def test_adam_trajectory_deterministic():
    def run():
        rng = ad.Rng(3)
        p = ad.parameter(rng.normal((4, 4)))
        opt = ad.Adam([p], lr=0.05)
        for _ in range(25):
            with ad.Tape() as t:
                loss = ad.reduce_sum(ad.mul(ad.tanh(p), ad.tanh(p)))
                opt.zero_grad()
                ad.backward(loss, t)
            opt.step()
        return p.data.copy()

    assert np.array_equal(run(), run())


def test_numeric_grad_helper_self_check():
    x = np.array([1.5])
    g = numeric_grad(lambda: float(x[0] ** 3), x)
    np.testing.assert_allclose(g, 3 * 1.5 ** 2, rtol=1e-6)
