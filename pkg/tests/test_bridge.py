import glob
import json
import os
import socket
import sys
import threading

import numpy as np
import pytest

from wire_replay import load_transcript, replay
from ordershap import (
    ConfigurationError,
    ContractViolation,
    HandshakeError,
    InProcessEndpoint,
    ProtocolError,
    SubprocessEndpoint,
    TcpEndpoint,
    TokenFractionStub,
    TransportError,
    task_rule_model,
)
from ordershap.bridge import decode_handshake, decode_response, encode_request, resolve_endpoint

HERE = os.path.dirname(__file__)
SERVER = os.path.join(HERE, "fixture_server.py")


def server_cmd(*extra):
    return [sys.executable, SERVER, *extra]


def stdio_endpoint(*extra, timeout=10.0):
    return SubprocessEndpoint(server_cmd(*extra), timeout=timeout)


class TestWireCodec:
    def test_request_shape(self):
        line = encode_request(3, [[1, "b"], []])
        assert json.loads(line) == {"id": 3, "batch": [["1", "b"], []]}

    def test_handshake_validation(self):
        classes, max_batch = decode_handshake('{"classes": ["a", "b"], "max_batch": 8}')
        assert classes == ("a", "b") and max_batch == 8
        with pytest.raises(HandshakeError):
            decode_handshake("not json")
        with pytest.raises(HandshakeError):
            decode_handshake('{"classes": ["only"], "max_batch": 4}')
        with pytest.raises(HandshakeError):
            decode_handshake('{"classes": ["a", "b"]}')

    def test_response_validation(self):
        good = decode_response('{"id": 1, "scores": [[0.5, 0.5]]}', 1, 1, 2)
        assert np.allclose(good, [[0.5, 0.5]])
        with pytest.raises(ProtocolError):
            decode_response('{"id": 2, "scores": [[0.5, 0.5]]}', 1, 1, 2)
        with pytest.raises(ProtocolError):
            decode_response('{"id": 1, "scores": []}', 1, 1, 2)
        with pytest.raises(ProtocolError):
            decode_response('{"id": 1, "scores": [[0.5]]}', 1, 1, 2)
        with pytest.raises(ProtocolError):
            decode_response('{"id": 1, "error": "boom"}', 1, 1, 2)


class TestInProcess:
    def test_handshake_contract(self):
        ep = InProcessEndpoint(TokenFractionStub(), max_batch=64)
        assert ep.handshake() == (("neg", "pos"), 64)

    def test_single_class_rejected(self):
        class OneClass:
            class_labels = ("only",)
            def scores(self, batch):
                return np.zeros((len(batch), 1))
        with pytest.raises(ConfigurationError):
            InProcessEndpoint(OneClass())

    def test_matches_reference_model(self):
        ep = InProcessEndpoint(task_rule_model("task1"))
        got = ep.score_batch([[1, 1, 2, 3]])
        assert np.array_equal(got[0], task_rule_model("task1").predict((1, 1, 2, 3)))

    def test_empty_batch(self):
        ep = InProcessEndpoint(TokenFractionStub())
        assert ep.score_batch([]).shape == (0, 2)

    def test_max_batch_enforced(self):
        ep = InProcessEndpoint(TokenFractionStub(), max_batch=2)
        with pytest.raises(ContractViolation):
            ep.score_batch([["a"], ["b"], ["c"]])


class TestSubprocessEndpoint:
    def test_handshake_stub(self):
        with stdio_endpoint("--model", "stub", "--max-batch", "64") as ep:
            assert ep.handshake() == (("neg", "pos"), 64)

    def test_stub_scores(self):
        with stdio_endpoint("--model", "stub") as ep:
            got = ep.score_batch([["good", "movie"]])
            assert np.allclose(got, [[0.5, 0.5]])

    def test_empty_batch_no_roundtrip(self):
        with stdio_endpoint("--model", "stub") as ep:
            assert ep.score_batch([]).shape == (0, 2)

    def test_order_preservation_under_batch_permutation(self):
        rng = np.random.default_rng(0)
        batch = [[str(t) for t in rng.integers(0, 4, size=5)] for _ in range(20)]
        with stdio_endpoint("--model", "rule:task2") as ep:
            base = ep.score_batch(batch)
            perm = rng.permutation(len(batch))
            shuffled = ep.score_batch([batch[i] for i in perm])
            assert np.array_equal(shuffled, base[perm])

    def test_idempotent_scoring(self):
        with stdio_endpoint("--model", "stub") as ep:
            batch = [["good", "bad", "good"]]
            assert np.array_equal(ep.score_batch(batch), ep.score_batch(batch))

    def test_bridged_equals_in_process_bitwise(self):
        rng = np.random.default_rng(42)
        models = ["rule:task1", "rule:task2", "rule:task3"]
        for name in models:
            local = InProcessEndpoint(task_rule_model(name.split(":")[1]))
            with stdio_endpoint("--model", name, "--max-batch", "1024") as ep:
                seqs = [[str(t) for t in rng.integers(0, 6, size=8)] for _ in range(1000)]
                for start in range(0, 1000, 250):
                    block = seqs[start:start + 250]
                    assert np.array_equal(ep.score_batch(block), local.score_batch(block))

    def test_one_class_handshake_rejected(self):
        ep = stdio_endpoint("--fault", "one-class")
        with pytest.raises(HandshakeError):
            ep.handshake()

    def test_malformed_handshake(self):
        ep = stdio_endpoint("--fault", "bad-handshake")
        with pytest.raises(HandshakeError):
            ep.handshake()

    def test_handshake_timeout_names_phase(self):
        ep = stdio_endpoint("--fault", "mute", timeout=0.5)
        with pytest.raises(HandshakeError, match="handshake"):
            ep.handshake()
        ep.close()

    @pytest.mark.parametrize("fault,exc", [
        ("wrong-id", ProtocolError),
        ("short-scores", ProtocolError),
        ("nonfinite", ProtocolError),
        ("error-response", ProtocolError),
    ])
    def test_protocol_violations_never_retried(self, fault, exc):
        with stdio_endpoint("--model", "stub", "--fault", fault) as ep:
            with pytest.raises(exc):
                ep.score_batch([["good"]])

    def test_transport_failure_retries_then_recovers(self):
        # server exits after its first answer; the client respawns it
        with stdio_endpoint("--model", "stub", "--fault", "die-after-1") as ep:
            first = ep.score_batch([["good", "movie"]])
            second = ep.score_batch([["good", "movie"]])
            assert np.array_equal(first, second)

    def test_batch_over_max_rejected_client_side(self):
        with stdio_endpoint("--model", "stub", "--max-batch", "2") as ep:
            ep.handshake()
            with pytest.raises(ContractViolation):
                ep.score_batch([["a"], ["b"], ["c"]])

    def test_spawn_failure_is_transport_error(self):
        ep = SubprocessEndpoint(["definitely-not-a-real-binary-xyz"])
        with pytest.raises(TransportError):
            ep.handshake()


class _ThreadedTcpServer:
    """Minimal protocol server over a socket, for TcpEndpoint tests.

    ``drop_after`` closes each connection after that many responses, which
    exercises the client's reconnect path.
    """

    def __init__(self, model, drop_after=None):
        self.model = model
        self.drop_after = drop_after
        self.sock = socket.socket()
        self.sock.bind(("127.0.0.1", 0))
        self.sock.listen(4)
        self.port = self.sock.getsockname()[1]
        self.thread = threading.Thread(target=self._serve, daemon=True)
        self.thread.start()

    def _serve(self):
        while True:
            try:
                conn, _ = self.sock.accept()
            except OSError:
                return
            with conn, conn.makefile("rw", encoding="utf-8", newline="\n") as stream:
                stream.write(json.dumps(
                    {"classes": list(self.model.class_labels), "max_batch": 32},
                    separators=(",", ":")) + "\n")
                stream.flush()
                answered = 0
                for line in stream:
                    msg = json.loads(line)
                    scores = self.model.scores(msg["batch"])
                    stream.write(json.dumps(
                        {"id": msg["id"], "scores": [[float(x) for x in row] for row in scores]},
                        separators=(",", ":")) + "\n")
                    stream.flush()
                    answered += 1
                    if self.drop_after is not None and answered >= self.drop_after:
                        break

    def close(self):
        self.sock.close()


class TestTcpEndpoint:
    def test_roundtrip(self):
        server = _ThreadedTcpServer(TokenFractionStub())
        try:
            ep = TcpEndpoint("127.0.0.1", server.port, timeout=5.0)
            assert ep.handshake() == (("neg", "pos"), 32)
            got = ep.score_batch([["good", "x", "good", "x"]])
            assert np.allclose(got, [[0.5, 0.5]])
            ep.close()
        finally:
            server.close()

    def test_connection_refused_is_transport_error(self):
        probe = socket.socket()
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
        probe.close()
        ep = TcpEndpoint("127.0.0.1", port, timeout=0.5)
        with pytest.raises(TransportError):
            ep.handshake()

    def test_reconnect_after_server_drops_connection(self):
        server = _ThreadedTcpServer(TokenFractionStub(), drop_after=1)
        try:
            ep = TcpEndpoint("127.0.0.1", server.port, timeout=5.0)
            first = ep.score_batch([["good", "x"]])
            second = ep.score_batch([["good", "x"]])
            assert np.array_equal(first, second)
            ep.close()
        finally:
            server.close()


class TestResolveEndpoint:
    def test_in_process_names(self):
        assert isinstance(resolve_endpoint("stub"), InProcessEndpoint)
        assert isinstance(resolve_endpoint("rule:task1"), InProcessEndpoint)

    def test_subprocess_prefix(self):
        ep = resolve_endpoint("subprocess:echo hi")
        assert isinstance(ep, SubprocessEndpoint)

    def test_tcp_prefix(self):
        ep = resolve_endpoint("tcp:localhost:9999")
        assert isinstance(ep, TcpEndpoint) and ep.port == 9999


class TestGoldenTranscripts:
    @pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(HERE, "golden", "*.json"))))
    def test_fixture_server_replays_byte_exact(self, path):
        problems = replay(server_cmd(), load_transcript(path))
        assert not problems, "\n".join(problems)
