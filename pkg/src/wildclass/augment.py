"""Tiered image augmentation mimicking camera-trap capture variation.

Magnitudes are monotone none -> light -> medium -> strong by construction,
so the mean perturbation grows with the level. All randomness flows from
the seed passed to augment(); the same (image, policy, seed) triple always
produces the same output regardless of worker count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class AugmentationPolicy:
    level: str
    flip_p: float = 0.0
    rotation_deg: float = 0.0
    brightness: float = 0.0   # additive, fraction of full range
    contrast: float = 0.0     # multiplicative, +- fraction
    blur_p: float = 0.0
    blur_sigma: float = 0.0
    noise_sigma: float = 0.0

    @classmethod
    def for_level(cls, level: str) -> "AugmentationPolicy":
        if level == "none":
            return cls(level="none")
        if level == "light":
            return cls(level="light", flip_p=0.5, rotation_deg=10.0,
                       brightness=0.10, contrast=0.10)
        if level == "medium":
            return cls(level="medium", flip_p=0.5, rotation_deg=20.0,
                       brightness=0.20, contrast=0.20,
                       blur_p=0.3, blur_sigma=1.0, noise_sigma=0.02)
        if level == "strong":
            return cls(level="strong", flip_p=0.5, rotation_deg=30.0,
                       brightness=0.30, contrast=0.30,
                       blur_p=0.5, blur_sigma=1.0, noise_sigma=0.05)
        raise ValueError(f"unknown augmentation level: {level}")


def augment(image: np.ndarray, policy: AugmentationPolicy, seed: int) -> np.ndarray:
    """Apply the policy to a float32 HxWx3 image in [0,1].

    Level "none" returns the input unchanged. Output has the same shape
    and stays clipped to [0,1].
    """
    if policy.level == "none":
        return image
    rng = np.random.default_rng(seed)
    out = image.astype(np.float32, copy=True)

    if policy.flip_p > 0 and rng.random() < policy.flip_p:
        out = out[:, ::-1, :]

    if policy.rotation_deg > 0:
        angle = float(rng.uniform(-policy.rotation_deg, policy.rotation_deg))
        out = ndimage.rotate(out, angle, axes=(1, 0), reshape=False, order=1,
                             mode="nearest", prefilter=False)

    if policy.brightness > 0:
        out = out + float(rng.uniform(-policy.brightness, policy.brightness))

    if policy.contrast > 0:
        factor = 1.0 + float(rng.uniform(-policy.contrast, policy.contrast))
        mean = float(out.mean())
        out = (out - mean) * factor + mean

    if policy.blur_p > 0 and rng.random() < policy.blur_p:
        sigma = float(rng.uniform(0.3, policy.blur_sigma))
        out = ndimage.gaussian_filter(out, sigma=(sigma, sigma, 0.0))

    if policy.noise_sigma > 0:
        out = out + rng.normal(0.0, policy.noise_sigma, size=out.shape).astype(np.float32)

    return np.clip(out, 0.0, 1.0).astype(np.float32)
