"""FFT plumbing shared by the filterbank and the scattering pipeline.

Subsampling is done by frequency periodization: block-averaging the spectrum
over 2^r x 2^r aliased tiles is exactly the DFT of the spatially decimated
signal x[::2^r, ::2^r].  ``unfold`` is the adjoint of ``fold`` under the real
inner product Re<conj(a), b>.
"""

from __future__ import annotations

import numpy as np
import scipy.fft


def fft2(x: np.ndarray, workers: int = 1) -> np.ndarray:
    return scipy.fft.fft2(x, workers=workers)


def ifft2(x: np.ndarray, workers: int = 1) -> np.ndarray:
    return scipy.fft.ifft2(x, workers=workers)


def fold(field: np.ndarray, r: int) -> np.ndarray:
    """Periodize the last two (frequency) axes by a factor 2^r.

    Returns the block mean over the 2^r x 2^r aliased tiles, i.e. the DFT of
    the 2^r-decimated spatial signal.  r = 0 is the identity.
    """
    if r == 0:
        return field
    k = 2 ** r
    m = field.shape[-1]
    if field.shape[-2] != m or m % k:
        raise ValueError(f"cannot periodize shape {field.shape} by {k}")
    lead = field.shape[:-2]
    blocks = field.reshape(lead + (k, m // k, k, m // k))
    return blocks.mean(axis=(-4, -2))


def unfold(field: np.ndarray, r: int) -> np.ndarray:
    """Adjoint of ``fold``: tile over the 2^r x 2^r alias blocks and divide
    by 4^r."""
    if r == 0:
        return field
    k = 2 ** r
    tiled = np.tile(field, (1,) * (field.ndim - 2) + (k, k))
    return tiled / k ** 2
