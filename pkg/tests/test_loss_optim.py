import math

import numpy as np
import pytest

from thermofuse import ShapeError
from thermofuse.nn import Adam, NonFiniteGradientError, logcosh_loss
from thermofuse.nn.gradcheck import gradient_check_fn


def test_logcosh_hand_values():
    loss, grad = logcosh_loss(np.array([0.0]), np.array([0.0]))
    assert loss == 0.0
    assert grad[0] == 0.0
    loss, _ = logcosh_loss(np.array([1.0]), np.array([0.0]))
    assert loss == pytest.approx(math.log(math.cosh(1.0)), abs=1e-15)


def test_logcosh_limits():
    # large residual r: log cosh r -> |r| - log 2
    for r in (30.0, 100.0, 700.0, 1e4):
        loss, grad = logcosh_loss(np.array([r]), np.array([0.0]))
        assert abs(loss - (r - math.log(2.0))) < 1e-8
        assert abs(grad[0] - 1.0) < 1e-8
        loss_m, grad_m = logcosh_loss(np.array([-r]), np.array([0.0]))
        assert abs(loss_m - (r - math.log(2.0))) < 1e-8
        assert abs(grad_m[0] + 1.0) < 1e-8
    # small residual: log cosh r ~ r^2 / 2
    for r in (1e-4, 1e-5):
        loss, _ = logcosh_loss(np.array([r]), np.array([0.0]))
        assert abs(loss - r * r / 2.0) < 1e-8


def test_logcosh_no_overflow():
    with np.errstate(over="raise"):
        loss, grad = logcosh_loss(np.full((4,), 1e8), np.zeros(4))
    assert np.isfinite(loss) and np.all(np.isfinite(grad))


def test_logcosh_mean_and_gradient():
    rng = np.random.default_rng(19)
    pred = rng.normal(size=(3, 4))
    target = rng.normal(size=(3, 4))
    loss, grad = logcosh_loss(pred, target)
    want = np.log(np.cosh(pred - target)).mean()
    assert loss == pytest.approx(want, rel=1e-12)
    assert grad.shape == pred.shape
    assert np.allclose(grad, np.tanh(pred - target) / pred.size, atol=1e-15)

    report = gradient_check_fn(lambda p: logcosh_loss(p, target), pred)
    assert report.passed, str(report)


def test_logcosh_shape_mismatch():
    with pytest.raises(ShapeError):
        logcosh_loss(np.zeros((2, 3)), np.zeros((3, 2)))


def test_adam_first_step_is_exactly_signed_lr():
    # step 1: corrected first moment equals the gradient exactly, so the
    # update is lr * g / (|g| + eps)
    rng = np.random.default_rng(8)
    for seed in range(5):
        g = np.random.default_rng(seed).normal(size=(4, 3))
        p = rng.normal(size=(4, 3))
        p0 = p.copy()
        opt = Adam(lr=0.01)
        opt.step({"w": p}, {"w": g})
        assert np.array_equal(opt.m["w"], g)  # bitwise, not approx
        assert np.array_equal(opt.v["w"], g * g)
        want = p0 - 0.01 * g / (np.abs(g) + 1e-8)
        assert np.allclose(p, want, atol=0.0)


def test_adam_zero_gradient_is_identity():
    p = np.array([1.0, -2.0, 3.5])
    p0 = p.copy()
    opt = Adam()
    for _ in range(3):
        opt.step({"w": p}, {"w": np.zeros(3)})
    assert np.array_equal(p, p0)


def test_adam_matches_reference_recurrence():
    # textbook form: m_t/(1-b1^t), v_t/(1-b2^t) with raw EMAs
    rng = np.random.default_rng(44)
    p = rng.normal(size=(6,))
    ref = p.copy()
    opt = Adam(lr=0.05, beta1=0.8, beta2=0.95, eps=1e-8)
    m = np.zeros(6)
    v = np.zeros(6)
    for t in range(1, 30):
        g = rng.normal(size=(6,))
        opt.step({"w": p}, {"w": g.copy()})
        m = 0.8 * m + 0.2 * g
        v = 0.95 * v + 0.05 * g * g
        mhat = m / (1.0 - 0.8**t)
        vhat = v / (1.0 - 0.95**t)
        ref -= 0.05 * mhat / (np.sqrt(vhat) + 1e-8)
        assert np.allclose(p, ref, rtol=1e-12, atol=1e-12)


def test_adam_rejects_non_finite_and_keeps_state():
    p = np.array([1.0])
    opt = Adam()
    opt.step({"w": p}, {"w": np.array([0.5])})
    m_before = opt.m["w"].copy()
    count_before = opt.step_count
    with pytest.raises(NonFiniteGradientError) as err:
        opt.step({"w": p}, {"w": np.array([np.nan])})
    assert "w" in str(err.value)
    assert np.array_equal(opt.m["w"], m_before)
    assert opt.step_count == count_before
    with pytest.raises(NonFiniteGradientError):
        opt.step({"w": p}, {"w": np.array([np.inf])})


def test_adam_descends_on_quadratic():
    p = np.array([5.0, -3.0])
    opt = Adam(lr=0.1)
    for _ in range(500):
        opt.step({"w": p}, {"w": 2.0 * p})
    assert np.abs(p).max() < 1e-2
