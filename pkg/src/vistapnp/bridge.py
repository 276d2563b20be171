"""Wire protocol for out-of-process denoisers.

Frames a denoiser call as length-prefixed binary messages so external
servers (any language) can plug into the reconstruction loops:

    offset  size  field
    0       4     magic "VSTB"
    4       1     msg_type: 0=denoise_request, 1=denoise_response,
                  2=error, 3=handshake
    5       4     height   (u32 little-endian)
    9       4     width    (u32 little-endian)
    13      4     channels (u32 little-endian)
    17      ...   payload

Request/response payloads are height*width*channels little-endian float32
values (row-major, interleaved channels), copied bit-for-bit — subnormals
and signed zeros survive the round trip.  Error frames carry a u32 byte
length followed by a UTF-8 message and zero dims.  Handshake frames have
zero dims and no payload; the server echoes them.

The client enforces strict alternation (one outstanding request per
connection).  Timeouts, malformed frames, dimension mismatches, and
server-reported errors raise distinct exception types, all derived from
:class:`BridgeError`; the iteration loops catch that base class and abort
the run with the ``bridge_failed`` trace flag rather than crashing.
"""

from __future__ import annotations

import os
import select
import socket
import struct
import subprocess
import time

import numpy as np

from .image import as_image

MAGIC = b"VSTB"

MSG_DENOISE_REQUEST = 0
MSG_DENOISE_RESPONSE = 1
MSG_ERROR = 2
MSG_HANDSHAKE = 3

_HEADER = struct.Struct("<4sBIII")

_MAX_ELEMS = 1 << 28  # allocation guard on inbound dims


class BridgeError(RuntimeError):
    """Base class for all denoiser-bridge failures."""


class BridgeTimeoutError(BridgeError):
    pass


class BridgeProtocolError(BridgeError):
    """Malformed frame: bad magic, unknown type, short read, oversized dims."""


class BridgeDimsError(BridgeError):
    """Response dimensions do not match the request."""


class BridgeRemoteError(BridgeError):
    """The server answered with an error frame."""


def encode_frame(msg_type: int, image=None, error: str | None = None) -> bytes:
    """Serialize one frame."""
    if msg_type in (MSG_DENOISE_REQUEST, MSG_DENOISE_RESPONSE):
        img = as_image(image)
        h, w, c = img.shape
        payload = np.ascontiguousarray(img, dtype="<f4").tobytes()
        return _HEADER.pack(MAGIC, msg_type, h, w, c) + payload
    if msg_type == MSG_ERROR:
        msg = (error or "").encode("utf-8")
        return _HEADER.pack(MAGIC, msg_type, 0, 0, 0) + struct.pack("<I", len(msg)) + msg
    if msg_type == MSG_HANDSHAKE:
        return _HEADER.pack(MAGIC, msg_type, 0, 0, 0)
    raise ValueError(f"unknown msg_type {msg_type}")


class _Transport:
    """Deadline-aware exact reads over a socket or a subprocess pipe."""

    def read_exact(self, n: int, deadline: float) -> bytes:
        raise NotImplementedError

    def write(self, data: bytes) -> None:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class _SocketTransport(_Transport):
    def __init__(self, sock: socket.socket):
        self._sock = sock

    def read_exact(self, n, deadline):
        chunks = []
        got = 0
        while got < n:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BridgeTimeoutError("timed out waiting for frame bytes")
            self._sock.settimeout(remaining)
            try:
                chunk = self._sock.recv(n - got)
            except (socket.timeout, TimeoutError):
                raise BridgeTimeoutError("timed out waiting for frame bytes") from None
            if not chunk:
                raise BridgeProtocolError(f"connection closed mid-frame ({got} of {n} bytes)")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def write(self, data):
        self._sock.sendall(data)

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass


class _PipeTransport(_Transport):
    def __init__(self, proc: subprocess.Popen):
        self._proc = proc
        self._fd = proc.stdout.fileno()

    def read_exact(self, n, deadline):
        chunks = []
        got = 0
        while got < n:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BridgeTimeoutError("timed out waiting for frame bytes")
            ready, _, _ = select.select([self._fd], [], [], remaining)
            if not ready:
                raise BridgeTimeoutError("timed out waiting for frame bytes")
            chunk = os.read(self._fd, n - got)
            if not chunk:
                raise BridgeProtocolError(f"server closed pipe mid-frame ({got} of {n} bytes)")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def write(self, data):
        self._proc.stdin.write(data)
        self._proc.stdin.flush()

    def close(self):
        for stream in (self._proc.stdin, self._proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        try:
            self._proc.terminate()
            self._proc.wait(timeout=5)
        except Exception:
            self._proc.kill()


class BridgeClient:
    """One connection to a denoiser server (subprocess pipes or TCP)."""

    def __init__(self, transport: _Transport, timeout: float = 30.0):
        self._transport = transport
        self.timeout = timeout
        self._busy = False
        self._closed = False
        self.handshake()

    @classmethod
    def from_command(cls, command, timeout: float = 30.0) -> "BridgeClient":
        if isinstance(command, str):
            command = command.split()
        proc = subprocess.Popen(
            list(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            bufsize=0,
        )
        return cls(_PipeTransport(proc), timeout)

    @classmethod
    def from_tcp(cls, host: str, port: int, timeout: float = 30.0) -> "BridgeClient":
        sock = socket.create_connection((host, port), timeout=timeout)
        return cls(_SocketTransport(sock), timeout)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._transport.close()

    # -- framing ------------------------------------------------------

    def _read_frame(self, deadline):
        header = self._transport.read_exact(_HEADER.size, deadline)
        magic, msg_type, h, w, c = _HEADER.unpack(header)
        if magic != MAGIC:
            raise BridgeProtocolError(f"bad magic {magic!r}")
        if msg_type == MSG_HANDSHAKE:
            return msg_type, None, None
        if msg_type == MSG_ERROR:
            (length,) = struct.unpack("<I", self._transport.read_exact(4, deadline))
            if length > 1 << 20:
                raise BridgeProtocolError(f"oversized error message ({length} bytes)")
            msg = self._transport.read_exact(length, deadline).decode("utf-8", "replace")
            return msg_type, None, msg
        if msg_type in (MSG_DENOISE_REQUEST, MSG_DENOISE_RESPONSE):
            if h < 1 or w < 1 or c not in (1, 3) or h * w * c > _MAX_ELEMS:
                raise BridgeProtocolError(f"invalid frame dims {h}x{w}x{c}")
            payload = self._transport.read_exact(4 * h * w * c, deadline)
            arr = np.frombuffer(payload, dtype="<f4").reshape(h, w, c)
            return msg_type, arr, None
        raise BridgeProtocolError(f"unknown msg_type {msg_type}")

    def handshake(self) -> None:
        deadline = time.monotonic() + self.timeout
        self._transport.write(encode_frame(MSG_HANDSHAKE))
        msg_type, _, err = self._read_frame(deadline)
        if msg_type == MSG_ERROR:
            raise BridgeRemoteError(f"server error during handshake: {err}")
        if msg_type != MSG_HANDSHAKE:
            raise BridgeProtocolError(f"expected handshake echo, got type {msg_type}")

    def denoise(self, x) -> np.ndarray:
        """Round-trip one image.  The wire format is float32; inputs of
        other dtypes are quantized to float32 for transport."""
        if self._closed:
            raise BridgeProtocolError("client is closed")
        if self._busy:
            raise RuntimeError("bridge protocol violation: overlapping denoise calls")
        img = as_image(x)
        self._busy = True
        try:
            deadline = time.monotonic() + self.timeout
            self._transport.write(encode_frame(MSG_DENOISE_REQUEST, img))
            msg_type, arr, err = self._read_frame(deadline)
            if msg_type == MSG_ERROR:
                raise BridgeRemoteError(f"server error: {err}")
            if msg_type != MSG_DENOISE_RESPONSE:
                raise BridgeProtocolError(f"expected denoise_response, got type {msg_type}")
            if arr.shape != img.shape:
                raise BridgeDimsError(f"response dims {arr.shape} != request dims {img.shape}")
            return arr.astype(img.dtype, copy=True)
        finally:
            self._busy = False


def bridge_denoiser(
    command=None,
    host: str | None = None,
    port: int | None = None,
    timeout: float = 30.0,
):
    """Connect to a denoiser server and wrap it as a :class:`Denoiser`.

    Exactly one of ``command`` (subprocess over stdin/stdout) or
    ``host``/``port`` (TCP) must be given.  The underlying client is
    reachable as ``denoiser.params["_client"]`` for explicit shutdown.
    """
    from .denoisers import Denoiser  # local import: denoisers has no bridge dependency

    if (command is None) == (host is None or port is None):
        raise ValueError("specify either command= or host=/port=")
    if command is not None:
        client = BridgeClient.from_command(command, timeout)
        where = command if isinstance(command, str) else " ".join(map(str, command))
    else:
        client = BridgeClient.from_tcp(host, int(port), timeout)
        where = f"{host}:{port}"
    return Denoiser(client.denoise, "bridge", {"transport": where, "_client": client})
