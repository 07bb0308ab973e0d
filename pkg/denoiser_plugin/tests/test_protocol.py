import socket
import struct
import subprocess
import sys
import threading

import numpy as np
import pytest

from denoiser_plugin.server import DenoiserServer

HEADER = struct.Struct("<4sII")


def pack_frame(image: np.ndarray, magic: bytes = b"MDF1") -> bytes:
    image = np.ascontiguousarray(image, dtype="<f8")
    h, w = image.shape
    return HEADER.pack(magic, h, w) + image.tobytes()


def read_exact(stream, n):
    data = b""
    while len(data) < n:
        chunk = stream.read(n - len(data))
        if not chunk:
            return data
        data += chunk
    return data


def spawn_server(*flags):
    return subprocess.Popen(
        [sys.executable, "-m", "denoiser_plugin.cli", "serve", "--stdio", *flags],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
    )


class TestEchoStdio:
    def test_roundtrip_256_is_bitwise(self):
        x = np.random.default_rng(0).random((256, 256))
        proc = spawn_server("--echo")
        try:
            proc.stdin.write(pack_frame(x))
            proc.stdin.flush()
            header = read_exact(proc.stdout, HEADER.size)
            magic, h, w = HEADER.unpack(header)
            assert magic == b"MDF1" and (h, w) == (256, 256)
            payload = read_exact(proc.stdout, 8 * h * w)
            back = np.frombuffer(payload, dtype="<f8").reshape(h, w)
            np.testing.assert_array_equal(back, x)
        finally:
            proc.stdin.close()
            proc.wait(timeout=10)

    def test_multiple_frames_in_order(self):
        proc = spawn_server("--echo")
        frames = [np.full((4, 4), float(i)) for i in range(3)]
        try:
            for frame in frames:
                proc.stdin.write(pack_frame(frame))
            proc.stdin.flush()
            for frame in frames:
                header = read_exact(proc.stdout, HEADER.size)
                _, h, w = HEADER.unpack(header)
                payload = read_exact(proc.stdout, 8 * h * w)
                back = np.frombuffer(payload, dtype="<f8").reshape(h, w)
                np.testing.assert_array_equal(back, frame)
        finally:
            proc.stdin.close()
            proc.wait(timeout=10)


class TestMalformedFrames:
    def _expect_error_and_close(self, payload: bytes):
        proc = spawn_server("--echo")
        try:
            proc.stdin.write(payload)
            proc.stdin.flush()
            try:
                proc.stdin.close()
            except BrokenPipeError:
                pass
            reply = read_exact(proc.stdout, HEADER.size)
            magic, h, w = HEADER.unpack(reply)
            assert magic == b"MDFE"
            assert (h, w) == (0, 0)
            assert proc.stdout.read() == b""  # connection closed after error
        finally:
            proc.wait(timeout=10)

    def test_bad_magic(self):
        self._expect_error_and_close(pack_frame(np.zeros((2, 2)), magic=b"JUNK"))

    def test_zero_shape(self):
        self._expect_error_and_close(HEADER.pack(b"MDF1", 0, 0))

    def test_truncated_payload(self):
        self._expect_error_and_close(HEADER.pack(b"MDF1", 8, 8) + b"\x00" * 16)


class TestTcp:
    def test_echo_over_tcp(self):
        server = DenoiserServer(echo=True)
        ready = threading.Event()
        thread = threading.Thread(
            target=server.serve_tcp,
            kwargs={"port": 0, "max_connections": 1, "ready": ready},
            daemon=True,
        )
        thread.start()
        assert ready.wait(timeout=10)
        x = np.random.default_rng(1).random((16, 16))
        with socket.create_connection(("127.0.0.1", server.bound_port)) as conn:
            conn.sendall(pack_frame(x))
            data = b""
            want = HEADER.size + 8 * 16 * 16
            while len(data) < want:
                data += conn.recv(want - len(data))
        magic, h, w = HEADER.unpack(data[: HEADER.size])
        assert magic == b"MDF1"
        back = np.frombuffer(data[HEADER.size:], dtype="<f8").reshape(h, w)
        np.testing.assert_array_equal(back, x)
        thread.join(timeout=10)

    def test_requires_model_or_echo(self):
        with pytest.raises(ValueError):
            DenoiserServer()
