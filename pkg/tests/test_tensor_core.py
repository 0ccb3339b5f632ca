import numpy as np
import pytest

from services.errors import DimensionMismatchError, InvariantViolationError, ShapeMismatchError
from services.fixtures import random_mlp_fixture
from services.tensor_core import ACTIVATIONS, LayerSpec, forward, grad_input, objective_and_grad
from utils.rng_utils import make_rng


def test_identity_activation_passes_input_through():
    out = forward([LayerSpec.act("identity")], np.array([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(out, [1.0, 2.0, 3.0])


def test_dense_layer_matches_hand_arithmetic():
    layer = LayerSpec.dense([[2.0, 0.0], [0.0, 3.0]], [1.0, 1.0])
    np.testing.assert_array_equal(forward([layer], [1.0, 1.0]), [3.0, 4.0])


def test_two_layer_relu_net_matches_loop_evaluation():
    w1 = [[0.5, -1.0, 0.25], [1.5, 0.5, -0.75]]
    b1 = [0.1, -0.2]
    w2 = [[1.0, -2.0], [0.3, 0.7], [-0.4, 0.9]]
    b2 = [0.0, 0.5, -0.5]
    layers = [LayerSpec.dense(w1, b1), LayerSpec.act("relu"), LayerSpec.dense(w2, b2)]
    z = [0.3, -0.6, 1.2]

    hidden = []
    for row, bias in zip(w1, b1):
        total = bias
        for w, v in zip(row, z):
            total += w * v
        hidden.append(max(total, 0.0))
    expected = []
    for row, bias in zip(w2, b2):
        total = bias
        for w, h in zip(row, hidden):
            total += w * h
        expected.append(total)

    np.testing.assert_allclose(forward(layers, z), expected, rtol=0, atol=1e-15)


def test_forward_is_pure_and_repeatable():
    spec = random_mlp_fixture(5, (7, 3), seed=11)
    z = np.array([0.1, -0.2, 0.3, 0.4, -0.5])
    before = z.copy()
    first = spec.forward(z)
    second = spec.forward(z)
    np.testing.assert_array_equal(first, second)
    np.testing.assert_array_equal(z, before)


def test_batch_forward_matches_row_by_row():
    spec = random_mlp_fixture(3, (6, 4), seed=2)
    batch = make_rng(5).standard_normal((10, 3))
    rows = np.stack([spec.forward(z) for z in batch])
    np.testing.assert_allclose(spec.forward(batch), rows, rtol=0, atol=1e-14)


def test_dimension_mismatch_names_the_layer():
    layers = [LayerSpec.act("tanh"), LayerSpec.dense(np.ones((2, 2)), np.zeros(2))]
    with pytest.raises(DimensionMismatchError) as info:
        forward(layers, np.ones(3))
    assert info.value.layer_index == 1


def test_layer_invariants():
    with pytest.raises(InvariantViolationError):
        LayerSpec.dense(np.ones((2, 3)), np.zeros(3))
    with pytest.raises(InvariantViolationError):
        LayerSpec.act("leaky_relu", slope=1.5)
    with pytest.raises(InvariantViolationError):
        LayerSpec.act("softplus")


def test_grad_of_identity_net_is_the_cotangent():
    c = np.array([0.5, -1.5, 2.0])
    np.testing.assert_array_equal(grad_input([LayerSpec.act("identity")], np.zeros(3), c), c)


def test_grad_of_dense_layer_is_the_adjoint():
    w = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    c = np.array([1.0, -1.0, 0.5])
    grad = grad_input([LayerSpec.dense(w, np.zeros(3))], np.array([0.2, 0.3]), c)
    np.testing.assert_allclose(grad, w.T @ c, rtol=0, atol=1e-15)


def test_grad_rejects_wrong_cotangent_shape():
    with pytest.raises(ShapeMismatchError):
        grad_input([LayerSpec.act("identity")], np.zeros(3), np.zeros(2))


def test_objective_is_zero_at_a_perfect_fit():
    spec = random_mlp_fixture(4, (5, 6), seed=3)
    z = np.array([0.2, 0.1, -0.3, 0.7])
    value, grad = spec.objective_and_grad(z, spec.forward(z))
    assert value == 0.0
    np.testing.assert_array_equal(grad, np.zeros(4))


def test_objective_on_identity_net():
    value, grad = objective_and_grad([LayerSpec.act("identity")], np.array([1.0, 0.0]), np.zeros(2))
    assert value == 0.5
    np.testing.assert_array_equal(grad, [1.0, 0.0])


def test_linear_net_is_affine():
    rng = make_rng(8)
    layers = [
        LayerSpec.dense(rng.standard_normal((6, 4)), rng.standard_normal(6)),
        LayerSpec.act("identity"),
        LayerSpec.dense(rng.standard_normal((3, 6)), rng.standard_normal(3)),
    ]
    z1, z2 = rng.standard_normal(4), rng.standard_normal(4)
    origin = forward(layers, np.zeros(4))
    lhs = forward(layers, z1 + z2) - origin
    rhs = (forward(layers, z1) - origin) + (forward(layers, z2) - origin)
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12)


def _random_net(rng):
    """Up to four dense layers of width <= 32 with random activations between them."""
    dim_in = int(rng.integers(1, 33))
    widths = [int(w) for w in rng.integers(1, 33, size=int(rng.integers(1, 5)))]
    layers, fan_in = [], dim_in
    for width in widths:
        weight = rng.standard_normal((width, fan_in)) * np.sqrt(2.0 / fan_in)
        layers.append(LayerSpec.dense(weight, 0.1 * rng.standard_normal(width)))
        layers.append(LayerSpec.act(ACTIVATIONS[int(rng.integers(len(ACTIVATIONS)))]))
        fan_in = width
    return layers, dim_in


def _kink_pattern(layers, z):
    """Signs of every relu / leaky_relu input."""
    pattern = []
    for index, layer in enumerate(layers):
        if layer.kind == "activation" and layer.activation in ("relu", "leaky_relu"):
            pattern.append(forward(layers[:index], z) > 0.0)
    return pattern


def _near_kink(layers, z, margin=1e-4):
    for index, layer in enumerate(layers):
        if layer.kind == "activation" and layer.activation in ("relu", "leaky_relu"):
            if np.min(np.abs(forward(layers[:index], z))) < margin:
                return True
    return False


def _same_pattern(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


@pytest.mark.slow
def test_gradients_match_central_differences_on_random_nets():
    rng = make_rng(2024)
    step = 1e-5
    worst = 0.0
    for _ in range(200):
        layers, dim_in = _random_net(rng)
        z = rng.standard_normal(dim_in)
        while _near_kink(layers, z):
            z = rng.standard_normal(dim_in)
        out_dim = forward(layers, z).shape[0]
        cotangent = rng.standard_normal(out_dim)
        grad = grad_input(layers, z, cotangent)
        pattern = _kink_pattern(layers, z)

        for i in range(dim_in):
            plus, minus = z.copy(), z.copy()
            plus[i] += step
            minus[i] -= step
            if not (_same_pattern(pattern, _kink_pattern(layers, plus))
                    and _same_pattern(pattern, _kink_pattern(layers, minus))):
                continue
            fd = (cotangent @ forward(layers, plus) - cotangent @ forward(layers, minus)) / (2 * step)
            rel = abs(grad[i] - fd) / max(1e-3, abs(grad[i]) + abs(fd))
            worst = max(worst, rel)
    assert worst <= 1e-4


def test_objective_gradient_matches_finite_differences():
    spec = random_mlp_fixture(6, (10, 8), seed=21, hidden_activation="tanh")
    rng = make_rng(22)
    z = rng.standard_normal(6)
    target = rng.uniform(-1.0, 1.0, 8)
    _, grad = spec.objective_and_grad(z, target)
    step = 1e-5
    for i in range(6):
        plus, minus = z.copy(), z.copy()
        plus[i] += step
        minus[i] -= step
        fd = (spec.objective_and_grad(plus, target)[0] - spec.objective_and_grad(minus, target)[0]) / (2 * step)
        assert abs(grad[i] - fd) / max(1e-3, abs(grad[i]) + abs(fd)) <= 1e-4
