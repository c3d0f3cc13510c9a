"""Wire protocol and client endpoints for black-box classifier evaluation.

Wire format, one JSON object per UTF-8 line:

* handshake (server -> client, first line): ``{"classes": [...], "max_batch": N}``
* request   (client -> server): ``{"id": k, "batch": [["tok", ...], ...]}``
* response  (server -> client): ``{"id": k, "scores": [[...], ...]}``

Servers may answer a broken request with ``{"id": k, "error": "..."}``;
the client treats that as a protocol violation, never as retryable.
Tokens always cross the wire as strings. Subprocess endpoints speak over
stdin/stdout, tcp endpoints over a plain stream socket. Requests are
serialized per connection (one in flight).
"""
from __future__ import annotations

import json
import queue
import shlex
import socket
import subprocess
import threading

import numpy as np

from .errors import (
    ConfigurationError,
    ContractViolation,
    HandshakeError,
    ProtocolError,
    TransportError,
)

DEFAULT_TIMEOUT = 5.0
TRANSPORT_ATTEMPTS = 3


def encode_request(request_id: int, batch) -> str:
    return json.dumps(
        {"id": int(request_id), "batch": [[str(t) for t in row] for row in batch]},
        separators=(",", ":"),
    )


def decode_response(line: str, expected_id: int, batch_len: int,
                    num_classes: int) -> np.ndarray:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"response is not valid JSON: {line!r}") from exc
    if not isinstance(msg, dict):
        raise ProtocolError(f"response is not an object: {line!r}")
    if "error" in msg:
        raise ProtocolError(f"server error for id {msg.get('id')}: {msg['error']}")
    if msg.get("id") != expected_id:
        raise ProtocolError(f"response id {msg.get('id')} does not match request {expected_id}")
    scores = msg.get("scores")
    if not isinstance(scores, list) or len(scores) != batch_len:
        raise ProtocolError(
            f"expected {batch_len} score rows, got {len(scores) if isinstance(scores, list) else scores!r}"
        )
    arr = np.asarray(scores, dtype=np.float64)
    if arr.shape != (batch_len, num_classes):
        raise ProtocolError(f"score matrix has shape {arr.shape}, expected ({batch_len}, {num_classes})")
    if not np.isfinite(arr).all():
        raise ProtocolError("scores contain non-finite values")
    return arr


def decode_handshake(line: str) -> tuple[tuple, int]:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise HandshakeError(f"handshake is not valid JSON: {line!r}") from exc
    if not isinstance(msg, dict) or "classes" not in msg or "max_batch" not in msg:
        raise HandshakeError(f"handshake must carry 'classes' and 'max_batch': {line!r}")
    classes = tuple(str(c) for c in msg["classes"])
    if len(classes) < 2:
        raise HandshakeError(f"endpoint declares {len(classes)} classes; at least 2 required")
    max_batch = int(msg["max_batch"])
    if max_batch < 1:
        raise HandshakeError(f"max_batch must be >= 1, got {max_batch}")
    return classes, max_batch


class InProcessEndpoint:
    """Wraps an in-process model behind the endpoint interface."""

    def __init__(self, model, class_labels=None, max_batch: int = 4096):
        score = getattr(model, "scores", None) or getattr(model, "score_batch", None)
        if score is None and callable(model):
            score = model
        if score is None:
            raise ConfigurationError("in-process model must expose scores(batch) or be callable")
        labels = class_labels if class_labels is not None else getattr(model, "class_labels", None)
        if labels is None:
            raise ConfigurationError("in-process endpoint needs class labels")
        labels = tuple(str(c) for c in labels)
        if len(labels) < 2:
            raise ConfigurationError(f"endpoint declares {len(labels)} classes; at least 2 required")
        if max_batch < 1:
            raise ConfigurationError("max_batch must be >= 1")
        self.model = model
        self._score = score
        self.class_labels = labels
        self.max_batch = max_batch

    def handshake(self) -> tuple[tuple, int]:
        return self.class_labels, self.max_batch

    def score_batch(self, batch) -> np.ndarray:
        if len(batch) > self.max_batch:
            raise ContractViolation(f"batch of {len(batch)} exceeds max_batch {self.max_batch}")
        if len(batch) == 0:
            return np.zeros((0, len(self.class_labels)))
        arr = np.asarray(self._score(batch), dtype=np.float64)
        if arr.shape != (len(batch), len(self.class_labels)):
            raise ProtocolError(f"model returned shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ProtocolError("scores contain non-finite values")
        return arr

    def close(self):
        pass


class _StdioChannel:
    """One subprocess speaking the line protocol; reads run on a helper thread."""

    def __init__(self, argv, timeout: float):
        self.timeout = timeout
        self.proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        try:
            for line in self.proc.stdout:
                self._lines.put(line)
        except ValueError:
            pass
        finally:
            self._lines.put(None)

    def send(self, line: str):
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as exc:
            raise TransportError(f"subprocess write failed: {exc}") from exc

    def recv(self, phase: str) -> str:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise TransportError(f"timeout after {self.timeout}s during {phase}") from None
        if line is None:
            raise TransportError(f"subprocess closed its output during {phase}")
        return line.rstrip("\n")

    def close(self):
        try:
            if self.proc.stdin:
                self.proc.stdin.close()
            self.proc.wait(timeout=self.timeout)
        except Exception:
            self.proc.kill()


class _TcpChannel:
    def __init__(self, host: str, port: int, timeout: float):
        self.timeout = timeout
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
        self.sock.settimeout(timeout)
        self.reader = self.sock.makefile("r", encoding="utf-8", newline="\n")

    def send(self, line: str):
        try:
            self.sock.sendall((line + "\n").encode("utf-8"))
        except OSError as exc:
            raise TransportError(f"socket write failed: {exc}") from exc

    def recv(self, phase: str) -> str:
        try:
            line = self.reader.readline()
        except socket.timeout:
            raise TransportError(f"timeout after {self.timeout}s during {phase}") from None
        except OSError as exc:
            raise TransportError(f"socket read failed during {phase}: {exc}") from exc
        if line == "":
            raise TransportError(f"connection closed during {phase}")
        return line.rstrip("\n")

    def close(self):
        try:
            self.reader.close()
            self.sock.close()
        except OSError:
            pass


class _RemoteEndpoint:
    """Shared client logic for subprocess and tcp endpoints."""

    def __init__(self, timeout: float = DEFAULT_TIMEOUT):
        self.timeout = timeout
        self.channel = None
        self.class_labels: tuple = ()
        self.max_batch = 0
        self._next_id = 0
        self._lock = threading.Lock()

    def _open_channel(self):
        raise NotImplementedError

    def _connect(self):
        self.channel = self._open_channel()
        try:
            line = self.channel.recv("handshake")
        except TransportError as exc:
            self.channel.close()
            self.channel = None
            raise HandshakeError(f"handshake failed: {exc}") from exc
        self.class_labels, self.max_batch = decode_handshake(line)

    def handshake(self) -> tuple[tuple, int]:
        with self._lock:
            if self.channel is None:
                self._connect()
            return self.class_labels, self.max_batch

    def score_batch(self, batch) -> np.ndarray:
        with self._lock:
            if self.channel is None:
                self._connect()
            if len(batch) > self.max_batch:
                raise ContractViolation(
                    f"batch of {len(batch)} exceeds max_batch {self.max_batch}"
                )
            if len(batch) == 0:
                return np.zeros((0, len(self.class_labels)))
            last_transport = None
            for _ in range(TRANSPORT_ATTEMPTS):
                if self.channel is None:
                    try:
                        self._connect()
                    except TransportError as exc:
                        last_transport = exc
                        continue
                request_id = self._next_id
                self._next_id += 1
                try:
                    self.channel.send(encode_request(request_id, batch))
                    line = self.channel.recv("score")
                except TransportError as exc:
                    last_transport = exc
                    self.channel.close()
                    self.channel = None
                    continue
                return decode_response(line, request_id, len(batch), len(self.class_labels))
            raise TransportError(
                f"transport failed after {TRANSPORT_ATTEMPTS} attempts: {last_transport}"
            )

    def close(self):
        with self._lock:
            if self.channel is not None:
                self.channel.close()
                self.channel = None

    def __enter__(self):
        self.handshake()
        return self

    def __exit__(self, *exc):
        self.close()


class SubprocessEndpoint(_RemoteEndpoint):
    """Endpoint served by a child process over stdin/stdout."""

    def __init__(self, command, timeout: float = DEFAULT_TIMEOUT):
        super().__init__(timeout)
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.argv:
            raise ConfigurationError("subprocess endpoint needs a command line")

    def _open_channel(self):
        try:
            return _StdioChannel(self.argv, self.timeout)
        except OSError as exc:
            raise TransportError(f"cannot spawn {self.argv[0]!r}: {exc}") from exc


class TcpEndpoint(_RemoteEndpoint):
    """Endpoint reached over a plain stream socket."""

    def __init__(self, host: str, port: int, timeout: float = DEFAULT_TIMEOUT):
        super().__init__(timeout)
        self.host = host
        self.port = int(port)

    def _open_channel(self):
        return _TcpChannel(self.host, self.port, self.timeout)


def resolve_endpoint(name: str, timeout: float = DEFAULT_TIMEOUT):
    """Endpoint registry for CLI names.

    ``rule:task1`` and ``stub`` run in process; ``subprocess:CMD`` spawns CMD;
    ``tcp:HOST:PORT`` connects out.
    """
    from .models import resolve_model

    if name.startswith("subprocess:"):
        return SubprocessEndpoint(name.split(":", 1)[1], timeout=timeout)
    if name.startswith("tcp:"):
        _, host, port = name.split(":", 2)
        return TcpEndpoint(host, int(port), timeout=timeout)
    return InProcessEndpoint(resolve_model(name))
