"""Shared synthetic corpora for the test suite.

Two deterministic procedural 64x64 grayscale textures: a smooth
band-limited field with a diagonal gradient, and a multi-octave field
rank-equalized to a flat histogram.  Both span most of the intensity
range, which keeps photometric transforms informative.
"""

import numpy as np
from scipy import ndimage


def smooth_texture(seed, size=64):
    rng = np.random.default_rng(seed)
    img = ndimage.gaussian_filter(rng.normal(size=(size, size)), 3.0)
    img = img + 0.35 * ndimage.gaussian_filter(rng.normal(size=(size, size)), 1.0)
    yy, xx = np.mgrid[0:size, 0:size]
    img = img + 0.5 * (xx + yy) / size * img.std() * 4
    img = img - img.min()
    return img / img.max() * 235 + 10


def flat_texture(seed, size=64, lo=4, hi=251):
    rng = np.random.default_rng(seed)
    img = np.zeros((size, size))
    for octave, amp in ((10.0, 1.0), (4.0, 0.6), (1.5, 0.3)):
        img += amp * ndimage.gaussian_filter(rng.normal(size=(size, size)), octave)
    ranks = np.argsort(np.argsort(img.ravel()))
    return (lo + ranks / (ranks.size - 1) * (hi - lo)).reshape(img.shape)


def brightness_base(seed, size=64):
    """Texture compressed into [34, 150]: any brightness map with
    a in [0.9, 1.5], b in [-30, 30] then stays strictly inside [0, 255],
    so fits are never confounded by clipping."""
    return np.clip(smooth_texture(seed, size) * 0.45 + 34.0, 34.0, 150.0)
