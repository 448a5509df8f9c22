import numpy as np
import pytest

from dpcore.extractor import (
    LINEAR_ADDITIVE,
    ExtractorSpec,
    InputBatch,
    alignment_loss,
    alignment_loss_and_grad,
    central_difference,
    extract,
    finite_diff_grad,
    init_prompt,
    make_linear_additive,
    make_mlp_prepend,
    relative_error,
    zero_prompt,
)
from dpcore.stats import EPS_STD, compute_stats


def test_identity_features_equal_inputs(linear_eye):
    x = np.arange(12.0).reshape(3, 4)
    np.testing.assert_array_equal(extract(linear_eye, x), x)
    np.testing.assert_array_equal(extract(linear_eye, x, zero_prompt(linear_eye, 3)), x)


def test_additive_prompt_is_column_broadcast():
    spec = make_linear_additive(5, 3, seed=2)
    rng = np.random.default_rng(0)
    p = rng.normal(size=(4, 3))
    for _ in range(3):
        x = rng.normal(size=(6, 5))
        np.testing.assert_allclose(extract(spec, x, p) - extract(spec, x), np.tile(p.sum(0), (6, 1)), atol=1e-12)


def test_mlp_deterministic(mlp):
    x = np.random.default_rng(1).normal(size=(4, 5))
    p = np.random.default_rng(2).normal(size=(2, 5))
    a, b = extract(mlp, x, p), extract(mlp, x, p)
    assert a.tobytes() == b.tobytes()
    assert make_mlp_prepend(5, 7, 3, seed=11).to_dict() == mlp.to_dict()


def test_dimension_checks(linear_eye, mlp):
    with pytest.raises(ValueError):
        extract(linear_eye, np.zeros((2, 3)))
    with pytest.raises(ValueError):
        extract(linear_eye, np.zeros((2, 4)), np.zeros((1, 5)))
    with pytest.raises(ValueError):
        extract(mlp, np.zeros((2, 5)), np.zeros(5))
    with pytest.raises(ValueError):
        make_linear_additive(3, weight=np.eye(4))
    with pytest.raises(ValueError):
        ExtractorSpec("conv", {"W": np.eye(2)})


def test_params_frozen(mlp):
    with pytest.raises(ValueError):
        mlp.params["W1"][0, 0] = 1.0
    assert mlp.d_tok == mlp.d_in == 5 and mlp.d_f == 3
    back = ExtractorSpec.from_dict(mlp.to_dict())
    assert all(np.array_equal(back.params[k], mlp.params[k]) for k in mlp.params)


def test_hidden_domain_does_not_change_features(mlp):
    x = np.random.default_rng(3).normal(size=(4, 5))
    a = extract(mlp, InputBatch(x, hidden_domain=1))
    b = extract(mlp, InputBatch(x, hidden_domain=9))
    assert a.tobytes() == b.tobytes() == extract(mlp, x).tobytes()


def test_aligned_case_zero_loss(linear_eye):
    x = np.random.default_rng(4).normal(size=(32, 4))
    loss, g = alignment_loss_and_grad(linear_eye, x, zero_prompt(linear_eye, 2), compute_stats(x))
    assert loss <= 2 * EPS_STD * np.sqrt(4)
    assert np.linalg.norm(g) < 1e-12


def test_shift_optimum_closed_form():
    """Minimising the mean term by plain gradient flow recovers -t."""
    spec = make_linear_additive(2, weight=np.eye(2))
    rng = np.random.default_rng(5)
    src = rng.normal(size=(200, 2))
    src -= src.mean(0)
    t = np.array([2.0, -1.0])
    p = np.zeros((3, 2))
    for _ in range(4000):
        loss, g = alignment_loss_and_grad(spec, src + t, p, compute_stats(src))
        p -= 1e-3 * g
    np.testing.assert_allclose(p.sum(0), [-2.0, 1.0], atol=1e-2)
    assert loss < 1e-2


def test_std_term_gradient_is_zero_for_additive():
    spec = make_linear_additive(3, seed=1)
    rng = np.random.default_rng(6)
    x = rng.normal(size=(20, 3))
    feats = compute_stats(extract(spec, x))
    src = type(feats)(feats.mean, feats.std * 3)
    loss, g = alignment_loss_and_grad(spec, x, zero_prompt(spec, 2), src)
    # means agree, so the whole loss is the std term; a shift cannot move it
    assert loss > 0
    assert np.linalg.norm(g) == 0.0


def test_quadratic_toy_fd():
    g = central_difference(lambda p: float(p[0] ** 2), np.array([1.0]))
    assert g[0] == pytest.approx(2.0, abs=1e-6)


def test_fd_zero_at_minimum(linear_eye):
    x = np.random.default_rng(7).normal(size=(16, 4))
    src = compute_stats(x + 0.5)
    p = np.full((1, 4), 0.5)
    # p sits at the mean optimum, loss is a norm so use a point slightly off the kink
    g = finite_diff_grad(linear_eye, x, p + 1e-3, src)
    assert np.linalg.norm(g) == pytest.approx(1.0, rel=1e-3)  # unit norm gradient of ||.||
    assert alignment_loss(linear_eye, x, p, src) < 1e-9


@pytest.mark.parametrize("kind", ["linear", "mlp"])
def test_fd_agrees_with_analytic(kind):
    rng = np.random.default_rng(8)
    worst = 0.0
    for i in range(20):
        if kind == "linear":
            spec = make_linear_additive(6, 4, seed=i)
        else:
            spec = make_mlp_prepend(6, 9, 4, seed=i)
        x = rng.normal(size=(16, 6)) * 2 + rng.normal(size=6)
        src = compute_stats(rng.normal(size=(50, spec.d_f)))
        p = init_prompt(3, spec.d_tok, rng, std=0.5)
        _, g = alignment_loss_and_grad(spec, x, p, src)
        worst = max(worst, relative_error(g, finite_diff_grad(spec, x, p, src)))
    assert worst <= (1e-5 if kind == "linear" else 1e-4)


def test_source_dim_mismatch(linear_eye):
    with pytest.raises(ValueError):
        alignment_loss_and_grad(linear_eye, np.zeros((2, 4)), zero_prompt(linear_eye),
                                compute_stats(np.zeros((2, 3))))


def test_init_prompt_scale():
    p = init_prompt(400, 50, np.random.default_rng(0))
    assert p.shape == (400, 50)
    assert abs(p.std() - 0.02) < 0.001
    with pytest.raises(ValueError):
        init_prompt(0, 3, np.random.default_rng(0))
    assert make_linear_additive(3).kind == LINEAR_ADDITIVE
