import numpy as np
import pytest

from wildclass.augment import AugmentationPolicy, augment


def random_image(seed, size=32):
    rng = np.random.default_rng(seed)
    return rng.random((size, size, 3), dtype=np.float32)


def test_none_is_identity():
    img = random_image(0)
    out = augment(img, AugmentationPolicy.for_level("none"), seed=123)
    assert out is img


def test_constant_image_flip_only():
    img = np.full((16, 16, 3), 0.5, dtype=np.float32)
    policy = AugmentationPolicy(level="custom", flip_p=1.0)
    out = augment(img, policy, seed=1)
    assert np.array_equal(out, img)


def test_deterministic_given_seed():
    img = random_image(1)
    policy = AugmentationPolicy.for_level("strong")
    a = augment(img, policy, seed=42)
    b = augment(img, policy, seed=42)
    assert np.array_equal(a, b)
    c = augment(img, policy, seed=43)
    assert not np.array_equal(a, c)


def test_shape_and_range_preserved():
    img = random_image(2, size=48)
    for level in ("light", "medium", "strong"):
        out = augment(img, AugmentationPolicy.for_level(level), seed=7)
        assert out.shape == img.shape
        assert out.dtype == np.float32
        assert out.min() >= 0.0 and out.max() <= 1.0


def test_policy_magnitudes_monotone():
    levels = [AugmentationPolicy.for_level(lv) for lv in ("none", "light", "medium", "strong")]
    for field in ("flip_p", "rotation_deg", "brightness", "contrast", "blur_p", "blur_sigma", "noise_sigma"):
        values = [getattr(p, field) for p in levels]
        assert values == sorted(values), field


def test_mean_perturbation_monotone_in_level():
    # smaller-sample version of the acceptance property
    levels = ("none", "light", "medium", "strong")
    distances = {lv: 0.0 for lv in levels}
    n = 60
    for i in range(n):
        img = random_image(1000 + i)
        for lv in levels:
            out = augment(img, AugmentationPolicy.for_level(lv), seed=5000 + i)
            distances[lv] += float(np.abs(out - img).mean()) / n
    assert distances["none"] <= distances["light"] <= distances["medium"] <= distances["strong"]


def test_unknown_level_rejected():
    with pytest.raises(ValueError):
        AugmentationPolicy.for_level("extreme")
