"""Consensus agents: data-fidelity updates and denoiser priors.

An agent is a shape-preserving map on images.  Reconstruction balances two
kinds of agents:

* **Data fidelity.**  The proximal map of the Gaussian negative
  log-likelihood under the block-averaging model has the closed form
  ``F(x) = [x + g * A^T (y - A x / L**2)]_+`` with gain
  ``g = sigma_lambda**2 / (sigma_lambda**2 + L**2 sigma_w**2)``, where
  ``[.]_+`` clips at zero to impose nonnegativity.  The *relaxed* variant
  (RAP) replaces the block-replication backprojector ``A^T`` with bicubic
  upsampling ``B``, trading the exact proximal interpretation for smoother
  updates; :mod:`macesr.theory` certifies the equivalence of the two
  formulations on dense instances.

* **Priors.**  Any denoiser acts as a prior agent.  Classical baselines
  (Gaussian, non-local means, total variation) are built in; an arbitrary
  external denoiser can be attached over a bit-exact binary frame protocol
  (see :class:`ExternalDenoiser`).

Clipping is at zero only; upper clipping is left to output formatting.
"""

from __future__ import annotations

import shlex
import socket
import struct
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.ndimage import gaussian_filter

from .linops import BicubicUpsampler, as_image, block_average, block_replicate

__all__ = [
    "NoiseParams",
    "Agent",
    "DenoiserSpec",
    "data_fidelity_apply",
    "rap_apply",
    "data_fidelity_agent",
    "rap_agent",
    "gaussian_denoise",
    "nlm_denoise",
    "tv_denoise",
    "external_denoise",
    "make_denoiser",
    "ExternalDenoiser",
    "DenoiserEndpointError",
    "EndpointUnreachableError",
    "ProtocolViolationError",
    "ReplyShapeError",
    "FRAME_MAGIC",
    "read_frame",
    "write_frame",
]


@dataclass(frozen=True)
class NoiseParams:
    """Noise scales of the data-fidelity proximal map.

    Attributes:
        sigma_w: measurement noise standard deviation (> 0).
        sigma_lambda: proximal coupling standard deviation (> 0).
    """

    sigma_w: float
    sigma_lambda: float

    def __post_init__(self) -> None:
        if self.sigma_w <= 0 or self.sigma_lambda <= 0:
            raise ValueError("sigma_w and sigma_lambda must be positive")

    @property
    def sigma2(self) -> float:
        """Squared scale ratio ``sigma_lambda**2 / sigma_w**2``."""
        return (self.sigma_lambda / self.sigma_w) ** 2

    def r(self, factor: int) -> float:
        """Contraction coefficient ``1 / (1 + sigma2 * L**2)``, in (0, 1)."""
        return 1.0 / (1.0 + self.sigma2 * factor**2)

    def gain(self, factor: int) -> float:
        """Update gain ``sigma_lambda**2 / (sigma_lambda**2 + L**2 sigma_w**2)``."""
        sl2 = self.sigma_lambda**2
        return sl2 / (sl2 + factor**2 * self.sigma_w**2)

    @classmethod
    def balanced(cls, sigma_w: float, factor: int) -> "NoiseParams":
        """Default coupling ``sigma_lambda = sigma_w * L``, giving gain 1/2."""
        return cls(sigma_w=sigma_w, sigma_lambda=sigma_w * factor)


@dataclass(frozen=True)
class Agent:
    """A shape-preserving image map participating in the equilibrium.

    ``apply`` must be deterministic for fixed construction parameters.
    Agents are immutable and reentrant.
    """

    kind: str  # "data-fidelity" | "rap" | "denoiser"
    apply: Callable[[np.ndarray], np.ndarray]
    name: str = ""
    params: dict = field(default_factory=dict)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.apply(x)


def _check_pair(
    x: np.ndarray, y: np.ndarray, factor: int
) -> tuple[np.ndarray, np.ndarray]:
    x = as_image(x)
    y = as_image(y)
    if x.shape[0] != factor * y.shape[0] or x.shape[1] != factor * y.shape[1]:
        raise ValueError(
            f"HR shape {x.shape} does not match LR shape {y.shape} at factor {factor}"
        )
    return x, y


def data_fidelity_apply(
    x: np.ndarray, y: np.ndarray, factor: int, params: NoiseParams
) -> np.ndarray:
    """Closed-form data-fidelity proximal update with nonnegativity clip.

    Returns ``[x + g * A^T (y - A x / L**2)]_+`` where ``g`` is
    ``params.gain(factor)``.  When ``y`` equals the block average of a
    nonnegative ``x`` the update is a fixed point.
    """
    x, y = _check_pair(x, y, factor)
    residual = y - block_average(x, factor)
    step = params.gain(factor) * block_replicate(residual, factor)
    return np.maximum(x + step, 0.0)


def rap_apply(
    x: np.ndarray,
    y: np.ndarray,
    factor: int,
    params: NoiseParams,
    upsampler: BicubicUpsampler | None = None,
) -> np.ndarray:
    """Relaxed data-fidelity update: bicubic backprojection of the residual.

    Identical to :func:`data_fidelity_apply` except the LR residual is
    carried back to HR by ``upsampler`` instead of block replication.
    """
    x, y = _check_pair(x, y, factor)
    if upsampler is None:
        upsampler = BicubicUpsampler(factor=factor)
    if upsampler.factor != factor:
        raise ValueError(
            f"upsampler factor {upsampler.factor} does not match scale {factor}"
        )
    residual = y - block_average(x, factor)
    step = params.gain(factor) * upsampler.apply(residual)
    return np.maximum(x + step, 0.0)


def data_fidelity_agent(y: np.ndarray, factor: int, params: NoiseParams) -> Agent:
    """Bind measurements into a data-fidelity agent."""
    y = as_image(y)
    return Agent(
        kind="data-fidelity",
        apply=lambda x: data_fidelity_apply(x, y, factor, params),
        name="data-fidelity",
        params={
            "factor": factor,
            "sigma_w": params.sigma_w,
            "sigma_lambda": params.sigma_lambda,
        },
    )


def rap_agent(
    y: np.ndarray,
    factor: int,
    params: NoiseParams,
    upsampler: BicubicUpsampler | None = None,
) -> Agent:
    """Bind measurements into a relaxed-backprojection agent."""
    y = as_image(y)
    up = upsampler if upsampler is not None else BicubicUpsampler(factor=factor)
    return Agent(
        kind="rap",
        apply=lambda x: rap_apply(x, y, factor, params, up),
        name="rap",
        params={
            "factor": factor,
            "sigma_w": params.sigma_w,
            "sigma_lambda": params.sigma_lambda,
            "kernel_a": up.a,
        },
    )


# ---------------------------------------------------------------------------
# Denoisers
# ---------------------------------------------------------------------------


def gaussian_denoise(x: np.ndarray, sigma_blur: float) -> np.ndarray:
    """Separable Gaussian smoothing.

    Uses a symmetric boundary extension, which makes the convolution matrix
    symmetric: constants map to themselves and the mean intensity is
    preserved.
    """
    x = as_image(x)
    if sigma_blur <= 0:
        raise ValueError("sigma_blur must be positive")
    return gaussian_filter(x, sigma=sigma_blur, mode="reflect")


def nlm_denoise(
    x: np.ndarray,
    patch_radius: int = 1,
    search_radius: int = 3,
    bandwidth: float = 0.1,
) -> np.ndarray:
    """Exact non-local means: patch-similarity weighted averaging.

    Each pixel becomes the weighted average of pixels in its search
    window, with weights ``exp(-||patch_i - patch_j||**2 / h**2)`` computed
    over full ``(2*patch_radius+1)**2`` patches (no pre-selection).  The
    image is edge-padded so every pixel has complete patch and search
    windows; weights are normalized to sum to one per pixel.

    The accumulation order over search offsets and patch taps is fixed so
    that a naive per-pixel implementation reproduces the result bit for
    bit.
    """
    x = as_image(x)
    if patch_radius < 1 or search_radius < 1:
        raise ValueError("patch and search radii must be >= 1")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    h, w = x.shape
    if min(h, w) < 2 * patch_radius + 1:
        raise ValueError(
            f"image {x.shape} smaller than the patch window "
            f"({2 * patch_radius + 1} pixels)"
        )
    pad = patch_radius + search_radius
    xp = np.pad(x, pad, mode="edge")
    inv_h2 = 1.0 / bandwidth**2

    numerator = np.zeros_like(x)
    denominator = np.zeros_like(x)
    prad, srad = patch_radius, search_radius
    for dy in range(-srad, srad + 1):
        for dx in range(-srad, srad + 1):
            dist = np.zeros_like(x)
            for u in range(-prad, prad + 1):
                for v in range(-prad, prad + 1):
                    a = xp[pad + u:pad + u + h, pad + v:pad + v + w]
                    b = xp[pad + dy + u:pad + dy + u + h,
                           pad + dx + v:pad + dx + v + w]
                    d = a - b
                    dist += d * d
            weight = np.exp(-dist * inv_h2)
            numerator += weight * xp[pad + dy:pad + dy + h, pad + dx:pad + dx + w]
            denominator += weight
    return numerator / denominator


def _tv_gradient(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gy = np.zeros_like(u)
    gx = np.zeros_like(u)
    gy[:-1, :] = u[1:, :] - u[:-1, :]
    gx[:, :-1] = u[:, 1:] - u[:, :-1]
    return gy, gx


def _tv_divergence(py: np.ndarray, px: np.ndarray) -> np.ndarray:
    # negative adjoint of _tv_gradient: <grad u, p> == -<u, div p>
    div = np.zeros_like(py)
    div[:-1, :] += py[:-1, :]
    div[1:, :] -= py[:-1, :]
    div[:, :-1] += px[:, :-1]
    div[:, 1:] -= px[:, :-1]
    return div


def tv_denoise(x: np.ndarray, weight: float, inner_iters: int = 100) -> np.ndarray:
    """Approximate proximal map of ``weight * TV`` by dual projection.

    Runs a fixed number of projected dual ascent steps (step 1/4) for the
    isotropic total-variation proximal problem
    ``min_u ||u - x||**2 / 2 + weight * TV(u)``.  The objective at the
    output never exceeds the objective at the input.
    """
    x = as_image(x)
    if weight <= 0:
        raise ValueError("weight must be positive")
    if inner_iters < 1:
        raise ValueError("inner_iters must be >= 1")
    tau = 0.25
    py = np.zeros_like(x)
    px = np.zeros_like(x)
    scaled = x / weight
    for _ in range(inner_iters):
        div_p = _tv_divergence(py, px)
        gy, gx = _tv_gradient(div_p - scaled)
        denom = 1.0 + tau * np.sqrt(gy * gy + gx * gx)
        py = (py + tau * gy) / denom
        px = (px + tau * gx) / denom
    return x - weight * _tv_divergence(py, px)


# ---------------------------------------------------------------------------
# External denoiser protocol
# ---------------------------------------------------------------------------

FRAME_MAGIC = b"MDF1"
_HEADER = struct.Struct("<4sII")


class DenoiserEndpointError(RuntimeError):
    """Base class for external-denoiser failures; a solve must abort on these."""


class EndpointUnreachableError(DenoiserEndpointError):
    """The endpoint process or socket could not be reached."""


class ProtocolViolationError(DenoiserEndpointError):
    """The endpoint sent bytes that are not a valid frame."""


class ReplyShapeError(DenoiserEndpointError):
    """The endpoint replied with an image of a different shape."""


def write_frame(stream, image: np.ndarray) -> None:
    """Serialize one image frame: magic, u32 height/width, float64 payload.

    All integers little-endian; pixel data row-major float64.
    """
    image = np.ascontiguousarray(image, dtype="<f8")
    h, w = image.shape
    stream.write(_HEADER.pack(FRAME_MAGIC, h, w))
    stream.write(image.tobytes())
    stream.flush()


def _read_exact(stream, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = stream.read(remaining)
        if not chunk:
            raise ProtocolViolationError(
                f"stream closed mid-frame ({n - remaining} of {n} bytes read)"
            )
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(stream) -> np.ndarray:
    """Read one image frame; raises :class:`ProtocolViolationError` on
    malformed input."""
    header = _read_exact(stream, _HEADER.size)
    magic, h, w = _HEADER.unpack(header)
    if magic != FRAME_MAGIC:
        raise ProtocolViolationError(f"bad frame magic {magic!r}")
    if h == 0 or w == 0:
        raise ProtocolViolationError(f"degenerate frame shape ({h}, {w})")
    payload = _read_exact(stream, 8 * h * w)
    return np.frombuffer(payload, dtype="<f8").reshape(h, w).astype(np.float64)


class _SocketStream:
    """File-like adapter over a connected socket."""

    def __init__(self, sock: socket.socket):
        self._sock = sock

    def read(self, n: int) -> bytes:
        return self._sock.recv(n)

    def write(self, data: bytes) -> None:
        self._sock.sendall(data)

    def flush(self) -> None:
        pass

    def close(self) -> None:
        self._sock.close()


class _StdioStream:
    """Frame stream over a child process's stdin/stdout."""

    def __init__(self, proc: subprocess.Popen):
        self._proc = proc

    def read(self, n: int) -> bytes:
        return self._proc.stdout.read(n)

    def write(self, data: bytes) -> None:
        self._proc.stdin.write(data)

    def flush(self) -> None:
        self._proc.stdin.flush()

    def close(self) -> None:
        for pipe in (self._proc.stdin, self._proc.stdout):
            try:
                pipe.close()
            except OSError:
                pass


class ExternalDenoiser:
    """Client for a denoiser served over the binary frame protocol.

    Endpoint descriptors:

    * ``"stdio:<command line>"`` -- spawn the command and exchange frames
      over its stdin/stdout.
    * ``"tcp:<host>:<port>"`` -- connect to a listening socket.

    Requests on one connection are serialized; the connection is opened
    lazily on first use.  Any transport or protocol failure raises a
    distinct :class:`DenoiserEndpointError` subclass so the solver aborts
    instead of silently dropping the prior.
    """

    def __init__(self, endpoint: str):
        self.endpoint = endpoint
        self._lock = threading.Lock()
        self._proc: subprocess.Popen | None = None
        self._stream = None

    def _connect(self) -> None:
        if self._stream is not None:
            return
        if self.endpoint.startswith("stdio:"):
            command = shlex.split(self.endpoint[len("stdio:"):])
            if not command:
                raise EndpointUnreachableError("empty stdio command line")
            try:
                self._proc = subprocess.Popen(
                    command, stdin=subprocess.PIPE, stdout=subprocess.PIPE
                )
            except OSError as exc:
                raise EndpointUnreachableError(
                    f"failed to spawn {command!r}: {exc}"
                ) from exc
            self._stream = _StdioStream(self._proc)
        elif self.endpoint.startswith("tcp:"):
            rest = self.endpoint[len("tcp:"):]
            host, sep, port = rest.rpartition(":")
            if not sep or not host:
                raise EndpointUnreachableError(
                    f"malformed tcp endpoint {self.endpoint!r}"
                )
            try:
                sock = socket.create_connection((host, int(port)), timeout=30.0)
            except (OSError, ValueError) as exc:
                raise EndpointUnreachableError(
                    f"cannot connect to {rest}: {exc}"
                ) from exc
            self._stream = _SocketStream(sock)
        else:
            raise EndpointUnreachableError(
                f"unknown endpoint descriptor {self.endpoint!r} "
                "(expected 'stdio:...' or 'tcp:host:port')"
            )

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = as_image(x)
        with self._lock:
            self._connect()
            try:
                write_frame(self._stream, x)
                reply = read_frame(self._stream)
            except ProtocolViolationError:
                self.close()
                raise
            except (OSError, ValueError) as exc:
                self.close()
                raise EndpointUnreachableError(
                    f"endpoint {self.endpoint!r} died mid-request: {exc}"
                ) from exc
        if reply.shape != x.shape:
            raise ReplyShapeError(
                f"endpoint returned shape {reply.shape}, expected {x.shape}"
            )
        return reply

    def close(self) -> None:
        if self._stream is not None:
            try:
                self._stream.close()
            except OSError:
                pass
            self._stream = None
        if self._proc is not None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
            self._proc = None

    def __enter__(self) -> "ExternalDenoiser":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def external_denoise(x: np.ndarray, endpoint: str) -> np.ndarray:
    """One-shot denoise through an external endpoint (opens and closes the
    connection)."""
    with ExternalDenoiser(endpoint) as client:
        return client.apply(x)


# ---------------------------------------------------------------------------
# Declarative denoiser descriptions
# ---------------------------------------------------------------------------

_DENOISER_KINDS = ("gaussian", "nlm", "tv", "external")


@dataclass(frozen=True)
class DenoiserSpec:
    """Declarative description of a prior agent.

    ``sigma_n`` is the noise scale the denoiser targets (for trained
    denoisers, the training noise); the consensus solver uses it to scale
    its convergence-error metric.
    """

    kind: str
    sigma_n: float = 0.1
    sigma_blur: float = 1.0
    patch_radius: int = 1
    search_radius: int = 3
    bandwidth: float = 0.1
    weight: float = 0.05
    inner_iters: int = 100
    endpoint: str = ""

    def __post_init__(self) -> None:
        if self.kind not in _DENOISER_KINDS:
            raise ValueError(
                f"unknown denoiser kind {self.kind!r}; expected one of {_DENOISER_KINDS}"
            )
        if self.sigma_n <= 0:
            raise ValueError("sigma_n must be positive")
        if self.kind == "gaussian" and self.sigma_blur <= 0:
            raise ValueError("sigma_blur must be positive")
        if self.kind == "nlm":
            if self.patch_radius < 1 or self.search_radius < 1:
                raise ValueError("patch and search radii must be >= 1")
            if self.bandwidth <= 0:
                raise ValueError("bandwidth must be positive")
        if self.kind == "tv" and (self.weight <= 0 or self.inner_iters < 1):
            raise ValueError("tv requires weight > 0 and inner_iters >= 1")
        if self.kind == "external" and not self.endpoint:
            raise ValueError("external denoiser requires an endpoint descriptor")

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "sigma_n": self.sigma_n}
        if self.kind == "gaussian":
            out["sigma_blur"] = self.sigma_blur
        elif self.kind == "nlm":
            out.update(
                patch_radius=self.patch_radius,
                search_radius=self.search_radius,
                bandwidth=self.bandwidth,
            )
        elif self.kind == "tv":
            out.update(weight=self.weight, inner_iters=self.inner_iters)
        elif self.kind == "external":
            out["endpoint"] = self.endpoint
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DenoiserSpec":
        return cls(**data)


def make_denoiser(spec: DenoiserSpec, client: ExternalDenoiser | None = None) -> Agent:
    """Instantiate the prior agent described by ``spec``.

    For external denoisers a shared ``client`` may be injected (e.g. to
    reuse one connection across a whole solve); otherwise one is created
    per agent.
    """
    if spec.kind == "gaussian":
        apply = lambda x: gaussian_denoise(x, spec.sigma_blur)
    elif spec.kind == "nlm":
        apply = lambda x: nlm_denoise(
            x, spec.patch_radius, spec.search_radius, spec.bandwidth
        )
    elif spec.kind == "tv":
        apply = lambda x: tv_denoise(x, spec.weight, spec.inner_iters)
    else:
        live = client if client is not None else ExternalDenoiser(spec.endpoint)
        apply = live.apply
    return Agent(kind="denoiser", apply=apply, name=spec.kind, params=spec.to_dict())
