import numpy as np
import pytest

from services.errors import InvariantViolationError
from services.fixtures import (
    PiecewiseLinearManifold,
    affine_fixture,
    brute_force_ball_probability,
    cartoon_manifold,
    constant_fixture,
    exact_ball_probability,
    manifold_to_spec,
    random_mlp_fixture,
    scaling_fixture,
    two_branch_fixture,
    write_fixture_bundle,
)
from services.generator_model import load_spec
from utils.dataset_io import load_dataset
from utils.rng_utils import make_rng


def test_network_reproduces_the_cartoon_vertices(cartoon):
    manifold, spec, _ = cartoon
    for z, vertex in zip(manifold.breakpoints, manifold.vertices):
        np.testing.assert_allclose(spec.forward([z]), vertex, rtol=0, atol=1e-12)


def test_network_matches_the_polyline_everywhere(cartoon):
    manifold, spec, _ = cartoon
    probes = make_rng(3).uniform(-0.5, 1.5, 1000)
    np.testing.assert_allclose(spec.forward(probes[:, None]), manifold.evaluate(probes), rtol=0, atol=1e-12)


def test_cartoon_layout(cartoon):
    manifold, spec, targets = cartoon
    assert manifold.segment_count == 10
    assert manifold.point_mass_segments() == [3]
    assert spec.noise.is_gaussian is False
    assert set(targets) == {"cyan", "purple", "orange", "red", "green"}
    np.testing.assert_allclose(manifold.evaluate(-0.2), targets["green"], atol=1e-12)
    _, cyan = manifold.point_at(1, 0.5)
    np.testing.assert_allclose(cyan, targets["cyan"], atol=1e-12)


def test_manifold_invariants():
    with pytest.raises(InvariantViolationError):
        PiecewiseLinearManifold(breakpoints=(0.0, 0.6, 0.5, 1.0), vertices=np.zeros((4, 2)))
    with pytest.raises(InvariantViolationError):
        PiecewiseLinearManifold(breakpoints=(0.1, 1.0), vertices=np.zeros((2, 2)))
    with pytest.raises(InvariantViolationError):
        PiecewiseLinearManifold(breakpoints=(0.0, 1.0), vertices=np.zeros((3, 2)))


def test_exact_ball_probability_examples():
    line = PiecewiseLinearManifold(breakpoints=(0.0, 1.0), vertices=np.array([[0.0, 0.0], [1.0, 0.0]]))
    # radius^2 = 2 * 0.005 = 0.01, so the ball covers z in (0.4, 0.6)
    assert exact_ball_probability(line, [0.5, 0.0], 0.005) == pytest.approx(0.2, abs=1e-12)
    assert exact_ball_probability(line, [0.5, 5.0], 0.005) == 0.0
    assert exact_ball_probability(line, [0.0, 0.0], 0.005) == pytest.approx(0.1, abs=1e-12)

    manifold, targets = cartoon_manifold()
    assert exact_ball_probability(manifold, [0.45, 0.70], 1e-4) >= 0.1
    assert exact_ball_probability(manifold, targets["red"], 1e-4) == 0.0


@pytest.mark.slow
def test_exact_matches_brute_force(cartoon):
    manifold, _, targets = cartoon
    for name in ("cyan", "purple", "orange"):
        center = targets[name]
        for ceiling in (1e-4, 1e-3):
            exact = exact_ball_probability(manifold, center, ceiling)
            assert abs(brute_force_ball_probability(manifold, center, ceiling) - exact) <= 1e-4


def test_affine_columns_are_orthonormal():
    fixture = affine_fixture(16, 32, seed=5)
    np.testing.assert_allclose(fixture.weight.T @ fixture.weight, np.eye(16), rtol=0, atol=1e-12)


def test_least_squares_recovers_the_latent():
    fixture = affine_fixture(8, 16, seed=6)
    z = make_rng(7).standard_normal(8)
    x = fixture.generate(z)
    z_ls = fixture.least_squares(x)
    assert np.mean((fixture.generate(z_ls) - x) ** 2) <= 1e-20
    np.testing.assert_allclose(z_ls, z, rtol=0, atol=1e-12)


def test_affine_conditioning_scales_the_gram_matrix():
    fixture = affine_fixture(2, 4, seed=8, conditioning=(1.0, 4.0))
    gram = fixture.weight.T @ fixture.weight
    assert gram[1, 1] / gram[0, 0] == pytest.approx(16.0, rel=1e-12)
    with pytest.raises(ValueError):
        affine_fixture(4, 2, seed=1)


def test_random_mlp_is_deterministic_and_in_range():
    first = random_mlp_fixture(8, (16, 12), seed=3)
    second = random_mlp_fixture(8, (16, 12), seed=3)
    assert first == second
    outputs = first.forward(make_rng(4).standard_normal((200, 8)) * 5.0)
    assert outputs.shape == (200, 12)
    assert np.all(np.isfinite(outputs))
    assert np.all(outputs >= -1.0) and np.all(outputs <= 1.0)
    assert [layer.kind for layer in first.layers] == ["dense", "activation", "dense", "activation", "dense"]


def test_analytic_fixtures():
    np.testing.assert_array_equal(scaling_fixture(3, 2.0).forward([1.0, -1.0, 0.5]), [2.0, -2.0, 1.0])
    np.testing.assert_array_equal(constant_fixture(3, 0.25, dim_out=2).forward([9.0, 9.0, 9.0]), [0.25, 0.25])
    branch = two_branch_fixture(2, 4.0)
    np.testing.assert_array_equal(branch.forward([0.5, -0.5]), [0.5, -2.0])
    with pytest.raises(ValueError):
        two_branch_fixture(2, 0.0)


def test_fixture_bundle_round_trips(tmp_path):
    written = write_fixture_bundle(tmp_path, seed=2, affine_samples=6, mlp_targets=3)
    assert set(written) == {
        "affine_spec", "affine_samples", "cartoon_spec", "cartoon_targets", "mlp_spec", "mlp_targets",
    }
    affine = load_spec(written["affine_spec"])
    samples = load_dataset(written["affine_samples"])
    assert len(samples) == 6 and samples.flat_length == affine.flat_length
    assert samples.splits == ("train", "test") * 3

    cartoon = load_spec(written["cartoon_spec"])
    targets = load_dataset(written["cartoon_targets"])
    assert targets.flat_length == cartoon.flat_length == 2
    np.testing.assert_allclose(targets.sample(0), [0.26, 0.565])

    mlp = load_spec(written["mlp_spec"])
    assert mlp.latent_dim == 64
    assert load_dataset(written["mlp_targets"]).flat_length == mlp.flat_length
