import numpy as np
import pytest

from dpcore.optim import Moments, OptimConfig, adamw_step


def test_zero_grad_no_move():
    p = np.array([[1.0, -2.0]])
    q, m = adamw_step(p, np.zeros_like(p), None, OptimConfig())
    np.testing.assert_array_equal(q, p)
    assert m.t == 1


def test_first_step_is_sign_times_lr():
    cfg = OptimConfig(lr=0.01)
    g = np.array([3.0, -0.2, 1e-3])
    q, _ = adamw_step(np.zeros(3), g, None, cfg)
    np.testing.assert_allclose(q, -0.01 * np.sign(g), rtol=1e-4)


@pytest.mark.parametrize("start", [2.0, 4.0])
def test_quadratic_converges(start):
    cfg = OptimConfig(lr=0.1)
    p, m = np.array([start]), None
    for _ in range(50):
        p, m = adamw_step(p, 2 * (p - 3), m, cfg)
    assert abs(p[0] - 3) <= 0.05


def test_quadratic_from_far_start_still_ringing():
    # three units away, 50 steps of size ~0.1 overshoot and have not settled yet
    cfg = OptimConfig(lr=0.1)
    p, m = np.array([0.0]), None
    for _ in range(50):
        p, m = adamw_step(p, 2 * (p - 3), m, cfg)
    assert 0.05 < abs(p[0] - 3) < 0.5


def test_matches_scalar_reference():
    """Hand-rolled scalar recursion as the oracle."""
    cfg = OptimConfig(lr=0.05, weight_decay=0.1)
    grads = [0.5, -1.0, 2.0, 0.1]
    p, m = np.array([1.0]), None
    ref, mm, vv = 1.0, 0.0, 0.0
    for t, g in enumerate(grads, 1):
        p, m = adamw_step(p, np.array([g]), m, cfg)
        mm = 0.9 * mm + 0.1 * g
        vv = 0.999 * vv + 0.001 * g * g
        ref = ref * (1 - 0.05 * 0.1)
        ref -= 0.05 * (mm / (1 - 0.9 ** t)) / (np.sqrt(vv / (1 - 0.999 ** t)) + 1e-8)
        assert p[0] == pytest.approx(ref, rel=1e-12)


def test_decoupled_decay_with_zero_grad():
    q, _ = adamw_step(np.array([2.0]), np.array([0.0]), None, OptimConfig(lr=0.1, weight_decay=0.5))
    assert q[0] == pytest.approx(2.0 * 0.95)


def test_inputs_untouched_and_shape_check():
    p, g = np.ones(3), np.ones(3)
    m = Moments.zeros_like(p)
    adamw_step(p, g, m, OptimConfig())
    assert m.t == 0 and np.all(m.m == 0) and np.all(p == 1)
    with pytest.raises(ValueError):
        adamw_step(p, np.ones(2), None, OptimConfig())


@pytest.mark.parametrize("kw", [dict(lr=0), dict(steps_scratch=0), dict(steps_refine=0),
                                dict(beta1=1.0), dict(grad_mode="adjoint")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        OptimConfig(**kw)
