"""Coalition masking: turn an on/off pattern of atoms into a concrete
model input.

Cells of inactive atoms are replaced by a fill reference computed once
from the original input (Gaussian blur of the whole tensor, a fixed
baseline tensor, or the scalar mean). Computing the reference from the
original input, never from partially masked tensors, is what makes
coalition-keyed memoization sound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import AtomGrid, Coalition, ensure_tensor

FILL_KINDS = ("blur", "baseline", "mean")


@dataclass(frozen=True)
class MaskerSpec:
    """Fill rule plus the atom grid it masks over.

    sigma defaults to the largest block extent; the blur kernel is
    truncated at 3*sigma with clamp-to-edge handling.
    """

    grid: AtomGrid
    fill: str = "blur"
    sigma: float | None = None
    baseline: np.ndarray | None = None

    def __post_init__(self):
        if self.fill not in FILL_KINDS:
            raise ValueError(f"fill must be one of {FILL_KINDS}, got {self.fill!r}")
        if self.fill == "blur":
            sigma = self.sigma if self.sigma is not None else float(max(self.grid.block))
            if sigma <= 0:
                raise ValueError("sigma must be positive")
            object.__setattr__(self, "sigma", float(sigma))
        if self.fill == "baseline":
            if self.baseline is None:
                raise ValueError("baseline fill needs a baseline tensor")
            base = ensure_tensor(self.baseline, self.grid.input_shape)
            base.setflags(write=False)
            object.__setattr__(self, "baseline", base)


def blur_reference(x, shape, sigma: float) -> np.ndarray:
    """Separable Gaussian blur of a flat tensor (normalized kernel,
    truncated at 3*sigma, clamp-to-edge)."""
    flat = ensure_tensor(x, shape)
    return _kernels.gaussian_blur(flat, tuple(shape), float(sigma))


def fill_reference(x: np.ndarray, spec: MaskerSpec) -> np.ndarray:
    """The tensor that replaces masked-out cells."""
    flat = ensure_tensor(x, spec.grid.input_shape)
    if spec.fill == "blur":
        return blur_reference(flat, spec.grid.input_shape, spec.sigma)
    if spec.fill == "baseline":
        return spec.baseline.copy()
    return np.full_like(flat, float(flat.mean()))


class BoundMasker:
    """Masker bound to one input: the fill reference is computed once and
    reused for every coalition of the explanation."""

    def __init__(self, x, spec: MaskerSpec):
        self.spec = spec
        self.grid = spec.grid
        self.x = ensure_tensor(x, spec.grid.input_shape)
        self.x.setflags(write=False)
        self.fill = fill_reference(self.x, spec)
        self.fill.setflags(write=False)

    def active_rows(self, bits_list) -> np.ndarray:
        n = self.grid.atom_count
        rows = np.zeros((len(bits_list), n), dtype=np.uint8)
        for r, bits in enumerate(bits_list):
            for i in range(n):
                if (bits >> i) & 1:
                    rows[r, i] = 1
        return rows

    def masked_batch(self, bits_list) -> np.ndarray:
        """(len(bits_list), n_cells) masked inputs."""
        return _kernels.apply_masks(
            self.x, self.fill, self.grid.cell_atom, self.active_rows(bits_list)
        )

    def masked(self, bits: int) -> np.ndarray:
        return self.masked_batch([bits])[0]


def apply_mask(x, coalition: Coalition, spec: MaskerSpec) -> np.ndarray:
    """Pure single-coalition masking; depends only on (x, coalition, spec)."""
    if coalition.width != spec.grid.atom_count:
        raise ValueError(
            f"coalition width {coalition.width} != atom count {spec.grid.atom_count}"
        )
    return BoundMasker(x, spec).masked(coalition.bits)
