"""Test-side networking helpers: an echo server built from the wire
primitives, and a persistent raw client connection."""

from __future__ import annotations

import socket
import threading
import time

from reqsentry.chunkwire import (
    Frame,
    FrameKind,
    Reassembler,
    chunk,
    encode_frame,
    read_frame,
)


class EchoServer:
    """Replies to every completed payload with an identical RESULT payload."""

    def __init__(self, delay: float = 0.0, cap: int = 1_000_000):
        self.delay = delay
        self.cap = cap
        self._listener = socket.create_server(("127.0.0.1", 0))
        self._listener.settimeout(0.2)
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._stop.set()
        self._listener.close()
        self._thread.join(timeout=5)

    @property
    def address(self):
        return self._listener.getsockname()[:2]

    def _accept_loop(self):
        while not self._stop.is_set():
            try:
                sock, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            threading.Thread(target=self._serve, args=(sock,), daemon=True).start()

    def _serve(self, sock: socket.socket):
        sock.settimeout(0.2)
        assembler = Reassembler()

        def read_exact(n):
            buf = bytearray()
            while len(buf) < n:
                if self._stop.is_set():
                    return None
                try:
                    piece = sock.recv(n - len(buf))
                except socket.timeout:
                    continue
                except OSError:
                    return None
                if not piece:
                    return None
                buf += piece
            return bytes(buf)

        try:
            while not self._stop.is_set():
                frame = read_frame(read_exact)
                if frame is None:
                    return
                payload = assembler.add(frame)
                if payload is None:
                    continue
                if self.delay:
                    time.sleep(self.delay)
                frames = chunk(frame.task_id, FrameKind.RESULT, payload, self.cap)
                sock.sendall(b"".join(encode_frame(f) for f in frames))
        except OSError:
            pass
        finally:
            sock.close()


class RawConnection:
    """A persistent client socket for multi-exchange tests on one connection."""

    def __init__(self, address, timeout: float = 5.0):
        self.sock = socket.create_connection(address, timeout=timeout)
        self.assembler = Reassembler()

    def close(self):
        self.sock.close()

    def send(self, frames: list[Frame]):
        self.sock.sendall(b"".join(encode_frame(f) for f in frames))

    def _read_exact(self, n):
        buf = bytearray()
        while len(buf) < n:
            piece = self.sock.recv(n - len(buf))
            if not piece:
                return None
            buf += piece
        return bytes(buf)

    def read_response(self) -> tuple[FrameKind, int, bytes]:
        """Blocks until one complete (kind, task_id, payload) arrives."""
        while True:
            frame = read_frame(self._read_exact)
            if frame is None:
                raise ConnectionError("server closed the connection")
            payload = self.assembler.add(frame)
            if payload is not None:
                return frame.kind, frame.task_id, payload
