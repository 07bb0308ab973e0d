"""Super-resolution by multi-agent consensus equilibrium (MACE).

A low-resolution measurement is modeled as the block average of an unknown
high-resolution image plus white Gaussian noise.  Reconstruction is posed as
a consensus equilibrium between a data-fidelity agent (a closed-form proximal
update, optionally with a relaxed bicubic backprojector) and a prior agent
(a pluggable denoiser), solved by Mann iteration.

Subpackage layout:

* ``linops``    block sum / replication / average and bicubic upsampling
* ``agents``    data-fidelity, relaxed-backprojection and denoiser agents
* ``mace``      stacked state, weighted averaging and the Mann solver
* ``theory``    dense-matrix certification of the equivalence and
  convergence results behind the relaxed backprojector
* ``metrics``   PSNR, Fourier ring correlation, acquisition speed-up
* ``pipeline``  image I/O, phantoms, experiment orchestration
"""

from . import agents, linops, mace, metrics, pipeline, theory

__version__ = "0.1.0"

__all__ = ["agents", "linops", "mace", "metrics", "pipeline", "theory", "__version__"]
