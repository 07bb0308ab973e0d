"""Linear operators of the block-averaging measurement model.

The forward model maps a high-resolution (HR) image to a low-resolution (LR)
one by averaging over non-overlapping ``L x L`` blocks.  Writing ``A`` for
summation over blocks, the operators provided here are

* ``block_sum``        -- ``A``, summation over ``L x L`` blocks
* ``block_replicate``  -- ``A^T``, replication of each pixel into a block
* ``block_average``    -- ``A / L**2``, the actual measurement map
* ``bicubic_upsample`` -- ``B``, a smooth backprojector used in place of
  ``A^T`` to avoid blocky artifacts

``A`` and ``A^T`` satisfy the exact identity ``A A^T = L**2 I``, which the
closed-form data-fidelity update and all dense-matrix certification in
:mod:`macesr.theory` rely on; inputs whose dimensions are not divisible by
``L`` are rejected rather than padded.

Images are plain 2-D ``float64`` arrays with finite entries, nominally in
``[0, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MaterializeLimitError",
    "as_image",
    "block_sum",
    "block_replicate",
    "block_average",
    "cubic_kernel",
    "bicubic_upsample",
    "BlockOperator",
    "BicubicUpsampler",
    "materialize",
]

# Dense materialization guard: basis-image sweeps stay sub-second up to here.
MATERIALIZE_MAX_PIXELS = 64 * 64


class MaterializeLimitError(ValueError):
    """Input too large to realize as a dense matrix."""


def as_image(x: np.ndarray) -> np.ndarray:
    """Validate and coerce ``x`` to a 2-D float64 image.

    Raises:
        ValueError: if ``x`` is not 2-D or contains non-finite values.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains NaN or Inf values")
    return arr


def _check_divisible(shape: tuple[int, int], factor: int) -> None:
    h, w = shape
    if h % factor or w % factor:
        raise ValueError(
            f"image shape {shape} is not divisible by the scale factor {factor}"
        )


def _tree_fold(a: np.ndarray, axis: int) -> np.ndarray:
    """Sum along ``axis`` by pairwise folding.

    For power-of-two lengths the reduction is a perfect binary tree, so
    summing ``k`` identical values is bitwise exact; this is what makes
    ``A A^T = L**2 I`` hold exactly for the scales used in practice.
    """
    while a.shape[axis] > 1:
        n = a.shape[axis]
        half = n // 2
        even = [slice(None)] * a.ndim
        odd = [slice(None)] * a.ndim
        even[axis] = slice(0, 2 * half, 2)
        odd[axis] = slice(1, 2 * half, 2)
        folded = a[tuple(even)] + a[tuple(odd)]
        if n % 2:
            last = [slice(None)] * a.ndim
            last[axis] = slice(n - 1, n)
            folded = np.concatenate([folded, a[tuple(last)]], axis=axis)
        a = folded
    return np.squeeze(a, axis=axis)


def block_sum(x: np.ndarray, factor: int) -> np.ndarray:
    """Sum over non-overlapping ``factor x factor`` blocks.

    Maps an ``(h, w)`` image to ``(h/factor, w/factor)``; each output pixel
    is the sum of its block.  Requires both dimensions divisible by
    ``factor``.
    """
    x = as_image(x)
    if factor < 1:
        raise ValueError("scale factor must be a positive integer")
    _check_divisible(x.shape, factor)
    if factor == 1:
        return x.copy()
    h, w = x.shape
    blocks = x.reshape(h // factor, factor, w // factor, factor)
    return _tree_fold(_tree_fold(blocks, 3), 1)


def block_replicate(z: np.ndarray, factor: int) -> np.ndarray:
    """Replicate each pixel into a ``factor x factor`` block (adjoint of
    :func:`block_sum`)."""
    z = as_image(z)
    if factor < 1:
        raise ValueError("scale factor must be a positive integer")
    if factor == 1:
        return z.copy()
    return np.repeat(np.repeat(z, factor, axis=0), factor, axis=1)


def block_average(x: np.ndarray, factor: int) -> np.ndarray:
    """Average over ``factor x factor`` blocks: the measurement map
    ``A / factor**2``."""
    return block_sum(x, factor) / float(factor * factor)


def cubic_kernel(s: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Cubic-convolution interpolation kernel with free parameter ``a``.

    ``a = -0.5`` is the Catmull-Rom choice, the common "bicubic" convention.
    The kernel has support ``|s| < 2`` and unit partition sums, so
    interpolating a constant reproduces it exactly.
    """
    s = np.abs(np.asarray(s, dtype=np.float64))
    out = np.zeros_like(s)
    near = s < 1.0
    far = (s >= 1.0) & (s < 2.0)
    out[near] = (a + 2.0) * s[near] ** 3 - (a + 3.0) * s[near] ** 2 + 1.0
    out[far] = a * (s[far] ** 3 - 5.0 * s[far] ** 2 + 8.0 * s[far] - 4.0)
    return out


def _upsample_axis_weights(
    n_in: int, factor: int, a: float
) -> tuple[np.ndarray, np.ndarray]:
    """Tap indices and weights for 1-D cubic upsampling along one axis.

    Sample alignment matches the block-average geometry: LR sample ``j``
    sits at the center of its block, HR coordinate ``j*factor +
    (factor - 1) / 2``.  Taps outside ``[0, n_in)`` are clamped (edge
    replication), which preserves the unit weight sums at the borders.
    """
    i = np.arange(n_in * factor, dtype=np.float64)
    t = (i - (factor - 1) / 2.0) / factor
    base = np.floor(t).astype(np.int64)
    frac = t - base
    offsets = np.arange(-1, 3)
    idx = base[:, None] + offsets[None, :]
    weights = cubic_kernel(frac[:, None] - offsets[None, :], a=a)
    idx = np.clip(idx, 0, n_in - 1)
    return idx, weights


def bicubic_upsample(z: np.ndarray, factor: int, a: float = -0.5) -> np.ndarray:
    """Separable cubic-convolution upsampling by an integer ``factor``.

    Output is ``(h*factor, w*factor)`` with sample positions aligned to the
    block-average geometry (each LR pixel center maps to the center of its
    HR block) and edge-replicated boundary handling.
    """
    z = as_image(z)
    if factor < 1:
        raise ValueError("scale factor must be a positive integer")
    if factor == 1:
        return z.copy()
    h, w = z.shape
    idx_r, w_r = _upsample_axis_weights(h, factor, a)
    idx_c, w_c = _upsample_axis_weights(w, factor, a)
    # rows: (h*factor, 4, w) gathered taps contracted against weights
    rows = np.einsum("imw,im->iw", z[idx_r, :], w_r)
    out = np.einsum("ijm,jm->ij", rows[:, idx_c], w_c)
    return out


@dataclass(frozen=True)
class BlockOperator:
    """The block-sum map ``A``, its adjoint and the block average.

    Immutable after construction and safe to share across threads; all
    apply methods are pure.

    Attributes:
        factor: integer scale ``L >= 1``.
        hr_shape: high-resolution ``(height, width)``, divisible by ``L``.
    """

    factor: int
    hr_shape: tuple[int, int]

    def __post_init__(self) -> None:
        if self.factor < 1:
            raise ValueError("scale factor must be a positive integer")
        _check_divisible(self.hr_shape, self.factor)

    @property
    def lr_shape(self) -> tuple[int, int]:
        return (self.hr_shape[0] // self.factor, self.hr_shape[1] // self.factor)

    def _check_hr(self, x: np.ndarray) -> np.ndarray:
        x = as_image(x)
        if x.shape != self.hr_shape:
            raise ValueError(f"expected HR shape {self.hr_shape}, got {x.shape}")
        return x

    def apply(self, x: np.ndarray) -> np.ndarray:
        """``A x``: block sums."""
        return block_sum(self._check_hr(x), self.factor)

    def adjoint(self, z: np.ndarray) -> np.ndarray:
        """``A^T z``: block replication."""
        z = as_image(z)
        if z.shape != self.lr_shape:
            raise ValueError(f"expected LR shape {self.lr_shape}, got {z.shape}")
        return block_replicate(z, self.factor)

    def average(self, x: np.ndarray) -> np.ndarray:
        """``A x / L**2``: the measurement map."""
        return self.apply(x) / float(self.factor**2)


@dataclass(frozen=True)
class BicubicUpsampler:
    """Bicubic upsampling ``B``, the relaxed stand-in for ``A^T``.

    Attributes:
        factor: integer scale ``L >= 1``.
        a: cubic-convolution kernel parameter (Catmull-Rom by default).
        boundary: edge handling; only pixel replication is supported, which
            keeps interpolation weights a partition of unity at borders.
    """

    factor: int
    a: float = -0.5
    boundary: str = field(default="edge")

    def __post_init__(self) -> None:
        if self.factor < 1:
            raise ValueError("scale factor must be a positive integer")
        if self.boundary != "edge":
            raise ValueError("only 'edge' boundary replication is supported")

    def apply(self, z: np.ndarray) -> np.ndarray:
        return bicubic_upsample(z, self.factor, a=self.a)


def materialize(op, in_shape: tuple[int, int]) -> np.ndarray:
    """Realize an image-to-image operator as a dense matrix.

    Column ``j`` equals the operator applied to the ``j``-th standard basis
    image, flattened row-major.  Intended for small verification instances;
    refuses inputs larger than 64x64.

    Args:
        op: callable mapping a 2-D image to a 2-D image.
        in_shape: ``(height, width)`` of the operator's input domain.

    Returns:
        Dense ``(out_size, in_size)`` float64 matrix.
    """
    h, w = in_shape
    n = h * w
    if n > MATERIALIZE_MAX_PIXELS:
        raise MaterializeLimitError(
            f"refusing to materialize a {in_shape} domain "
            f"({n} > {MATERIALIZE_MAX_PIXELS} pixels)"
        )
    basis = np.zeros((h, w))
    cols = []
    for j in range(n):
        basis.flat[j] = 1.0
        cols.append(np.asarray(op(basis)).ravel())
        basis.flat[j] = 0.0
    return np.column_stack(cols)
