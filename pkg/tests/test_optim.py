import numpy as np
import pytest

from sceneadapt.diffcore import Tensor
from sceneadapt.errors import ConfigurationError, UsageError
from sceneadapt.optim import Adam, PolySchedule, SgdMomentum, poly_multiplier, zero_grads


def _param(value, grad):
    p = Tensor(np.asarray(value, dtype=np.float32))
    p.grad = np.asarray(grad, dtype=np.float32)
    return p


def test_sgd_plain_step_without_momentum():
    p = _param([1.0], [0.5])
    SgdMomentum(lr=0.1, momentum=0.0).step({"p": p})
    assert p.data[0] == pytest.approx(0.95)


def test_sgd_momentum_two_step_unroll():
    # Constant gradient 1, lr 1, momentum 0.9: velocities 1 then 1.9.
    p = _param([0.0], [1.0])
    opt = SgdMomentum(lr=1.0, momentum=0.9)
    opt.step({"p": p})
    assert p.data[0] == pytest.approx(-1.0)
    p.grad = np.asarray([1.0], dtype=np.float32)
    opt.step({"p": p})
    assert p.data[0] == pytest.approx(-2.9)


def test_sgd_lr_multiplier_zero_is_exact_noop():
    p = _param([1.25], [3.0])
    before = p.data.copy()
    SgdMomentum(lr=0.5).step({"p": p}, lr_multiplier=0.0)
    assert np.array_equal(p.data, before)


def test_sgd_missing_grad_is_usage_error():
    p = Tensor(np.ones(2, dtype=np.float32))
    with pytest.raises(UsageError, match="p"):
        SgdMomentum().step({"p": p})


def test_sgd_weight_decay_shrinks_parameter():
    p = _param([2.0], [0.0])
    SgdMomentum(lr=0.1, momentum=0.0, weight_decay=0.5).step({"p": p})
    assert p.data[0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)


def test_sgd_converges_on_quadratic():
    p = _param([1.0], [0.0])
    opt = SgdMomentum(lr=0.01)
    for _ in range(500):
        p.grad = 2.0 * p.data
        opt.step({"p": p})
    assert abs(float(p.data[0])) < 0.1


def test_adam_first_step_moves_by_lr():
    # Bias correction makes mhat = g, vhat = g*g, so the first update is
    # lr * sign(g) up to eps.
    p = _param([0.0, 0.0], [0.3, -40.0])
    Adam(lr=0.01).step({"p": p})
    assert np.allclose(p.data, [-0.01, 0.01], atol=1e-6)


def test_adam_zero_gradient_is_noop():
    p = _param([1.5], [0.0])
    before = p.data.copy()
    Adam(lr=0.01).step({"p": p})
    assert np.array_equal(p.data, before)


def test_adam_converges_on_quadratic():
    p = _param([1.0], [0.0])
    opt = Adam(lr=0.01)
    for _ in range(500):
        p.grad = 2.0 * p.data
        opt.step({"p": p})
    assert abs(float(p.data[0])) < 0.1


def test_adam_first_step_bounded_by_lr():
    p = _param([0.0], [1e-12])
    Adam(lr=0.01).step({"p": p})
    assert abs(float(p.data[0])) <= 0.01 + 1e-9


def test_optimizers_are_deterministic():
    runs = []
    for _ in range(2):
        rng = np.random.default_rng(7)
        p = _param(rng.standard_normal(8), rng.standard_normal(8))
        q = _param(rng.standard_normal(8), rng.standard_normal(8))
        sgd, adam = SgdMomentum(lr=0.05), Adam(lr=0.01)
        for _ in range(10):
            sgd.step({"p": p})
            adam.step({"q": q})
            p.grad = p.data * 0.5
            q.grad = q.data * 0.5
        runs.append((p.data.copy(), q.data.copy()))
    assert np.array_equal(runs[0][0], runs[1][0])
    assert np.array_equal(runs[0][1], runs[1][1])


def test_poly_schedule_endpoints_and_midpoint():
    sched = PolySchedule(total_iterations=3750, power=0.9)
    assert poly_multiplier(0, sched) == 1.0
    assert poly_multiplier(3750, sched) == 0.0
    assert poly_multiplier(1875, sched) == pytest.approx(0.53589, abs=1e-5)


def test_poly_schedule_clamps_past_horizon():
    sched = PolySchedule(total_iterations=100, power=0.9)
    assert poly_multiplier(101, sched) == 0.0
    assert poly_multiplier(10_000, sched) == 0.0
    assert poly_multiplier(-5, sched) == 1.0


def test_poly_schedule_is_monotone_nonincreasing():
    sched = PolySchedule(total_iterations=777, power=0.9)
    values = [poly_multiplier(i, sched) for i in range(0, 900, 7)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_poly_schedule_rejects_bad_config():
    with pytest.raises(ConfigurationError):
        PolySchedule(total_iterations=0)
    with pytest.raises(ConfigurationError):
        PolySchedule(power=0.0)


def test_zero_grads_clears_buffers():
    p = _param([1.0], [1.0])
    zero_grads({"p": p})
    assert p.grad is None
