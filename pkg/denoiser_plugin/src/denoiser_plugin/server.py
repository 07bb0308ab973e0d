"""Frame-protocol server: answer denoise requests over stdio or TCP.

Wire format (little-endian): magic ``MDF1``, u32 height, u32 width, then
``height * width`` float64 pixels, row-major.  One response per request,
in order.  A malformed request (wrong magic, zero-sized shape, truncated
payload) is answered with an error frame -- magic ``MDFE`` and a zero
height/width header -- and the connection is closed.

Each connection serves one request at a time; over TCP, connections are
handled in parallel threads.
"""

from __future__ import annotations

import socket
import struct
import sys
import threading
from pathlib import Path

import numpy as np
import torch

from .model import ResidualDenoiser, load_model

FRAME_MAGIC = b"MDF1"
ERROR_MAGIC = b"MDFE"
_HEADER = struct.Struct("<4sII")


class MalformedFrame(ValueError):
    pass


def _read_exact(read, n: int) -> bytes | None:
    """Read exactly n bytes; None on clean EOF at a frame boundary."""
    data = b""
    while len(data) < n:
        chunk = read(n - len(data))
        if not chunk:
            if not data:
                return None
            raise MalformedFrame(
                f"stream ended mid-frame ({len(data)} of {n} bytes)"
            )
        data += chunk
    return data


def read_request(read) -> np.ndarray | None:
    """Read one request frame; None on end of stream."""
    header = _read_exact(read, _HEADER.size)
    if header is None:
        return None
    magic, h, w = _HEADER.unpack(header)
    if magic != FRAME_MAGIC:
        raise MalformedFrame(f"bad magic {magic!r}")
    if h == 0 or w == 0:
        raise MalformedFrame(f"degenerate shape ({h}, {w})")
    payload = _read_exact(read, 8 * h * w)
    if payload is None:
        raise MalformedFrame("missing payload")
    return np.frombuffer(payload, dtype="<f8").reshape(h, w)


def write_reply(write, image: np.ndarray) -> None:
    image = np.ascontiguousarray(image, dtype="<f8")
    h, w = image.shape
    write(_HEADER.pack(FRAME_MAGIC, h, w))
    write(image.tobytes())


def write_error(write) -> None:
    write(_HEADER.pack(ERROR_MAGIC, 0, 0))


class DenoiserServer:
    """Serves a loaded model (or plain echo) over the frame protocol."""

    def __init__(self, model: ResidualDenoiser | None = None, echo: bool = False):
        if model is None and not echo:
            raise ValueError("need a model unless echo mode is enabled")
        self.model = model
        self.echo = echo

    @classmethod
    def from_file(cls, model_path: str | Path) -> "DenoiserServer":
        return cls(model=load_model(model_path))

    def process(self, image: np.ndarray) -> np.ndarray:
        if self.echo:
            return image
        tensor = torch.from_numpy(image.astype(np.float32))  # writable copy
        denoised = self.model.denoise(tensor.unsqueeze(0).unsqueeze(0))
        return denoised.squeeze(0).squeeze(0).numpy().astype(np.float64)

    def _serve_stream(self, read, write, flush) -> None:
        """Answer frames until EOF; error frame + stop on a malformed one."""
        while True:
            try:
                request = read_request(read)
            except MalformedFrame:
                write_error(write)
                flush()
                return
            if request is None:
                return
            write_reply(write, self.process(request))
            flush()

    def serve_stdio(self) -> None:
        stdin = sys.stdin.buffer
        stdout = sys.stdout.buffer
        self._serve_stream(stdin.read, stdout.write, stdout.flush)

    def serve_tcp(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        max_connections: int | None = None,
        ready: threading.Event | None = None,
    ) -> int:
        """Listen and serve; returns the bound port.

        ``max_connections`` bounds how many connections are accepted
        (None: serve forever); ``ready`` is set once listening, with
        ``bound_port`` available on the server.
        """
        listener = socket.create_server((host, port))
        self.bound_port = listener.getsockname()[1]
        if ready is not None:
            ready.set()
        served = 0
        threads = []
        try:
            while max_connections is None or served < max_connections:
                conn, _ = listener.accept()
                served += 1
                worker = threading.Thread(
                    target=self._serve_connection, args=(conn,), daemon=True
                )
                worker.start()
                threads.append(worker)
        finally:
            for worker in threads:
                worker.join(timeout=30)
            listener.close()
        return self.bound_port

    def _serve_connection(self, conn: socket.socket) -> None:
        with conn:
            write = conn.sendall
            self._serve_stream(conn.recv, write, lambda: None)
