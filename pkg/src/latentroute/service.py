"""Line-protocol routing service.

Speaks newline-delimited JSON over a local TCP port.  Request:

    {"id": ..., "queries": [{"id": ..., "text": ...}, ...],
     "weights": {"p": ..., "c": ..., "t": ...},
     "constraints": {"max_total_cost": ..., "max_total_latency": ...,
                     "min_mean_accuracy": ...}}

Response: {"id", "choices": [{"query_id", "model_id", "p", "cost",
"latency"}], "solver", "registry_version", "ts"}; errors come back as
{"id", "error": {"code", "message"}} with 4xx-class codes.

The server holds one immutable registry snapshot behind a lock-free swap:
handlers read whatever snapshot was current when their request arrived, so
concurrent requests never observe a half-applied update.
"""

from __future__ import annotations

import json
import socketserver
import threading
import time

from .predictor import predict_item_params
from .registry import Registry, register_model
from .routing import GlobalConstraints, PolicyWeights, route_constrained, score_matrix


def _error(req_id, code: int, message: str) -> dict:
    return {"id": req_id, "error": {"code": code, "message": message}}


def handle_route_request(registry: Registry, request: dict) -> dict:
    """Pure request handler: features -> predictor -> estimates -> solver."""
    req_id = request.get("id")
    queries = request.get("queries")
    if not isinstance(queries, list) or not queries:
        return _error(req_id, 400, "request needs a non-empty 'queries' list")
    if registry.predictor is None:
        return _error(req_id, 422, "registry has no trained predictor")
    if not registry.profiles:
        return _error(req_id, 422, "registry has no model profiles")
    try:
        w = request.get("weights") or {}
        weights = PolicyWeights(float(w.get("p", 1.0)), float(w.get("c", 0.0)),
                                float(w.get("t", 0.0)))
        c = request.get("constraints") or {}
        constraints = GlobalConstraints(
            max_total_cost=c.get("max_total_cost"),
            max_total_latency=c.get("max_total_latency"),
            min_mean_accuracy=c.get("min_mean_accuracy"),
        )
        triples = []
        for q in queries:
            qid, text = str(q["id"]), str(q["text"])
            item = predict_item_params(registry.predictor, qid, text)
            triples.append((qid, item, text))
        profiles = [registry.profiles[m] for m in sorted(registry.profiles)]
        estimates = score_matrix(triples, profiles)
        assignment = route_constrained(estimates, weights, constraints)
    except (KeyError, TypeError) as exc:
        return _error(req_id, 400, f"malformed request: {exc}")
    except ValueError as exc:
        return _error(req_id, 422, str(exc))

    by_pair = {(e.query_id, e.model_id): e for row in estimates for e in row}
    choices = []
    for qid, _item, _text in triples:
        mid = assignment.choices.get(qid)
        if mid is None:
            continue
        est = by_pair[(qid, mid)]
        choices.append({
            "query_id": qid, "model_id": mid,
            "p": est.p, "cost": est.cost, "latency": est.latency,
        })
    return {
        "id": req_id,
        "choices": choices,
        "feasible": assignment.feasible,
        "solver": assignment.solver,
        "registry_version": registry.version,
        "ts": time.time(),
    }


class RoutingServer:
    """Threaded NDJSON-over-TCP server around a swappable registry snapshot."""

    def __init__(self, registry: Registry, host: str = "127.0.0.1", port: int = 0):
        self._snapshot = registry
        self._swap_lock = threading.Lock()
        outer = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self):
                for raw in self.rfile:
                    line = raw.decode("utf-8", errors="replace").strip()
                    if not line:
                        continue
                    try:
                        request = json.loads(line)
                    except json.JSONDecodeError as exc:
                        resp = _error(None, 400, f"invalid JSON: {exc}")
                    else:
                        resp = handle_route_request(outer._snapshot, request)
                    self.wfile.write((json.dumps(resp) + "\n").encode())
                    self.wfile.flush()

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server((host, port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address

    @property
    def registry(self) -> Registry:
        return self._snapshot

    def swap_registry(self, registry: Registry) -> None:
        """Single-writer snapshot swap; in-flight readers keep the old view."""
        with self._swap_lock:
            self._snapshot = registry

    def register(self, profile, overwrite: bool = False) -> None:
        with self._swap_lock:
            self._snapshot = register_model(self._snapshot, profile, overwrite=overwrite)

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def __enter__(self) -> "RoutingServer":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def request_over_socket(host: str, port: int, request: dict, timeout: float = 30.0) -> dict:
    """One-shot client helper used by the CLI and tests."""
    import socket

    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.sendall((json.dumps(request) + "\n").encode())
        buf = b""
        while not buf.endswith(b"\n"):
            chunk = sock.recv(65536)
            if not chunk:
                break
            buf += chunk
    return json.loads(buf.decode())
