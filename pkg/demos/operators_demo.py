"""Walk through the measurement-model operators.

Shows the block sum / replication pair, the exact A A^T = L^2 I identity,
the adjoint inner-product property, and bicubic upsampling as the smooth
backprojector, including its dense materialization.

Run:
    python3 demos/operators_demo.py
"""

import numpy as np

from macesr.linops import (
    BicubicUpsampler,
    bicubic_upsample,
    block_average,
    block_replicate,
    block_sum,
    materialize,
)

rng = np.random.default_rng(0)

# --- block sum and its adjoint -------------------------------------------
x = rng.random((8, 8))
L = 4
summed = block_sum(x, L)
print(f"block_sum maps {x.shape} -> {summed.shape} (factor {L})")

z = rng.random((2, 2))
roundtrip = block_sum(block_replicate(z, L), L)
print("A A^T = L^2 I identity, max error:",
      np.max(np.abs(roundtrip - L**2 * z)))

lhs = np.vdot(block_sum(x, L), z)
rhs = np.vdot(x, block_replicate(z, L))
print(f"adjoint property <Ax, z> = <x, A^T z>: {lhs:.12f} vs {rhs:.12f}")

# --- the measurement map is the scaled sum --------------------------------
print("block_average == block_sum / L^2:",
      np.array_equal(block_average(x, L), block_sum(x, L) / L**2))

# --- bicubic upsampling ----------------------------------------------------
up = BicubicUpsampler(factor=4)
constant = np.full((4, 4), 0.37)
print("constant image upsampled stays constant:",
      np.allclose(up.apply(constant), 0.37))

# a linear ramp is reproduced exactly away from the borders
n = 12
rows, cols = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
ramp = 0.02 * rows + 0.04 * cols
up4 = bicubic_upsample(ramp, 4)
t = (np.arange(n * 4) - 1.5) / 4.0
tr, tc = np.meshgrid(t, t, indexing="ij")
exact = 0.02 * tr + 0.04 * tc
interior = slice(8, -8)
print("ramp reproduction error (interior):",
      np.max(np.abs(up4[interior, interior] - exact[interior, interior])))

# --- dense materialization for small sizes ---------------------------------
b_mat = materialize(lambda im: bicubic_upsample(im, 2), (4, 4))
print(f"materialized upsampler is {b_mat.shape}; row sums in "
      f"[{b_mat.sum(axis=1).min():.12f}, {b_mat.sum(axis=1).max():.12f}]")
a_mat = materialize(lambda im: block_sum(im, 2), (4, 4))
at_mat = materialize(lambda im: block_replicate(im, 2), (2, 2))
print("materialize(block_sum) == materialize(block_replicate).T:",
      np.array_equal(a_mat, at_mat.T))
