import numpy as np
import pytest

from core.augment import augment_data, perturb_latent, perturbation_scale
from core.model.schema import AugmentationConfig, PerturbationConfig
from core.numerics import Rng, Tensor, grad_check


def test_zero_latent_is_a_fixed_point_of_noise_related_perturbation():
    z = np.zeros((5, 4))
    out = perturb_latent(z, PerturbationConfig(mode="noise_related", l1=0.1), Rng(0))
    np.testing.assert_array_equal(out, z)


def test_zero_scales_are_the_identity():
    z = Rng(1).normal(size=(3, 4))
    cfg = PerturbationConfig(mode="fixed", sigma_fixed=0.0)
    np.testing.assert_array_equal(perturb_latent(z, cfg, Rng(2)), z)


def test_noise_related_std_monte_carlo():
    z = np.full((100_000, 1), -2.0)
    eps = perturb_latent(z, PerturbationConfig(mode="noise_related", l1=0.1), Rng(3)) - z
    assert abs(eps.std() - 0.2) < 0.01


def test_view_distance_matches_scale():
    z = np.array([1.0, -2.0, 0.5, 3.0])
    cfg = PerturbationConfig(mode="noise_related", l1=0.1)
    batch = np.tile(z, (100_000, 1))
    sq = np.sum((perturb_latent(batch, cfg, Rng(4)) - batch) ** 2, axis=1)
    expected = float(np.sum((0.1 * np.abs(z)) ** 2))
    assert abs(sq.mean() / expected - 1.0) < 0.02


@pytest.mark.parametrize("c", [-3.0, 0.5, 2.0])
def test_noise_related_scale_is_equivariant(c):
    z = Rng(5).normal(size=(4, 6))
    cfg = PerturbationConfig(mode="noise_related", l1=0.1)
    np.testing.assert_allclose(perturbation_scale(c * z, cfg), abs(c) * perturbation_scale(z, cfg), rtol=1e-15)


def test_mode_scales():
    z = np.array([0.0, 0.05, -2.0])
    cfg = PerturbationConfig(mode="fixed", l1=0.2, sigma_fixed=0.3)
    np.testing.assert_allclose(perturbation_scale(z, cfg), [0.3, 0.3, 0.3])
    np.testing.assert_allclose(perturbation_scale(z, cfg, "noise_related"), [0.0, 0.01, 0.4])
    np.testing.assert_allclose(perturbation_scale(z, cfg, "negative_prior"), [2.0, 2.0, 0.1])
    with pytest.raises(ValueError):
        perturbation_scale(z, cfg, "bogus")


# --- augment_data ---

def test_disabled_augmentation_is_identity():
    x = Rng(6).normal(size=(10, 2))
    out = augment_data(x, AugmentationConfig(enabled=False), Rng(7))
    assert out is x
    assert augment_data(x, AugmentationConfig(jitter_std=0.0, rotation_max=0.0), Rng(7)) is x


def test_jitter_mean_squared_displacement():
    x = Rng(8).normal(size=(100_000, 2))
    out = augment_data(x, AugmentationConfig(jitter_std=0.05, rotation_max=0.0), Rng(9))
    msd = np.mean(np.sum((out - x) ** 2, axis=1))
    assert abs(msd / (2 * 0.05 ** 2) - 1.0) < 0.05


def test_rotation_preserves_distance_to_batch_mean():
    x = Rng(10).normal(size=(50, 2))
    out = augment_data(x, AugmentationConfig(jitter_std=0.0, rotation_max=0.5), Rng(11))
    center = x.mean(axis=0)
    np.testing.assert_allclose(np.linalg.norm(out - center, axis=1), np.linalg.norm(x - center, axis=1),
                               rtol=1e-12)
    assert not np.allclose(out, x)


def test_augmentation_is_seed_deterministic_and_keeps_cardinality():
    x = Rng(12).normal(size=(33, 2))
    cfg = AugmentationConfig()
    a, b = augment_data(x, cfg, Rng(13)), augment_data(x, cfg, Rng(13))
    assert a.shape == x.shape
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, augment_data(x, cfg, Rng(14)))


def test_tensor_input_stays_differentiable():
    x = Rng(15).normal(size=(6, 2))
    cfg = AugmentationConfig(rotation_max=0.4, jitter_std=0.1)
    out = augment_data(Tensor(x), cfg, Rng(16))
    assert isinstance(out, Tensor)
    assert grad_check(lambda t: (augment_data(t, cfg, Rng(16)) ** 2).sum(), x) < 1e-6


def test_rejects_non_planar_batches():
    with pytest.raises(ValueError):
        augment_data(np.zeros((4, 3)), AugmentationConfig(), Rng(0))
