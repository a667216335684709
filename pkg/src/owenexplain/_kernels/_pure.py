"""Pure numpy implementations of the hot kernels.

These mirror owenexplain._kernels._compiled operation for operation. Tap
accumulation in the blur runs in the same ascending-offset order as the C
loop so both backends agree to the last few ulps.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "pure"


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps truncated at 3*sigma (radius >= 1)."""
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    radius = max(1, int(math.ceil(3.0 * sigma)))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-0.5 * (offsets / sigma) ** 2)
    return weights / weights.sum()


def gaussian_blur(data: np.ndarray, shape: tuple[int, ...], sigma: float) -> np.ndarray:
    """Separable Gaussian blur of a flat row-major tensor, clamp-to-edge."""
    kernel = gaussian_kernel(sigma)
    radius = (len(kernel) - 1) // 2
    arr = np.asarray(data, dtype=np.float64).reshape(shape)
    for axis, dim in enumerate(shape):
        if dim == 1:
            continue
        base = np.arange(dim)
        acc = np.zeros_like(arr)
        for tap in range(len(kernel)):
            idx = np.clip(base + (tap - radius), 0, dim - 1)
            acc = acc + kernel[tap] * np.take(arr, idx, axis=axis)
        arr = acc
    return arr.reshape(-1)


def apply_masks(
    x: np.ndarray, fill: np.ndarray, cell_atom: np.ndarray, active: np.ndarray
) -> np.ndarray:
    """Masked inputs for a batch of coalitions.

    active is a (n_coalitions, n_atoms) uint8 matrix; cells of inactive
    atoms are replaced by the fill reference.
    """
    active_cells = active[:, cell_atom].astype(bool)
    return np.where(active_cells, x[np.newaxis, :], fill[np.newaxis, :])


def popcounts(n: int) -> np.ndarray:
    """Population count of every mask in [0, 2**n) as uint8."""
    masks = np.arange(1 << n, dtype=np.uint32)
    counts = np.zeros(1 << n, dtype=np.uint8)
    for bit in range(n):
        counts += ((masks >> bit) & 1).astype(np.uint8)
    return counts


def shapley_from_table(values: np.ndarray, n: int) -> np.ndarray:
    """Exact Shapley values from a dense 2**n game-value table.

    values[mask] is the game value of the coalition whose members are the
    set bits of mask. Weights use lgamma to avoid factorial overflow.
    """
    size = 1 << n
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (size,):
        raise ValueError("value table must have length 2**n")
    counts = popcounts(n)
    lg = [math.lgamma(k + 1) for k in range(n + 1)]
    weights = np.array(
        [math.exp(lg[s] + lg[n - s - 1] - lg[n]) for s in range(n)], dtype=np.float64
    )
    masks = np.arange(size, dtype=np.uint32)
    phi = np.empty(n, dtype=np.float64)
    for i in range(n):
        bit = np.uint32(1 << i)
        without = masks[(masks & bit) == 0]
        gains = values[without | bit] - values[without]
        phi[i] = float(np.dot(weights[counts[without]], gains))
    return phi
