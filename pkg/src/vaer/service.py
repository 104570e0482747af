"""Local HTTP service driving one labeling session.

JSON over localhost, consumed by the browser labeling console:

    GET  /session        status, iteration, per-iteration metrics history
    GET  /session/batch  the pending pairs (ids, values side by side,
                         category, model probability)
    POST /session/labels [{"pair_id": ..., "label": 0|1}] for the full batch;
                         moves pairs, retrains, refits the density
    POST /session/finish end the session (writes the matcher if configured)

One mutable session; writes serialize through a lock while reads serve an
atomically swapped snapshot, so status stays readable during retraining.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any

from .active import ALSession, SelectedPair
from .matcher import save_matcher
from .metrics import PrfResult


def _metrics_payload(metrics: PrfResult | None) -> dict | None:
    if metrics is None:
        return None
    return {
        "precision": metrics.precision,
        "recall": metrics.recall,
        "f1": metrics.f1,
        "tp": metrics.counts.tp,
        "fp": metrics.counts.fp,
        "fn": metrics.counts.fn,
        "tn": metrics.counts.tn,
    }


class SessionService:
    """Thread-safe facade over one ALSession."""

    def __init__(self, session: ALSession, max_iterations: int = 25, matcher_out: str | None = None):
        self.session = session
        self.max_iterations = max_iterations
        self.matcher_out = matcher_out
        self._mutate = threading.Lock()
        self._status: dict[str, Any] = {}
        self._batch: dict[str, Any] = {}
        self._pair_index: dict[str, tuple[str, str]] = {}
        self._advance_batch()

    # -- snapshots -----------------------------------------------------------

    def _history_payload(self) -> list[dict]:
        return [
            {
                "iteration": rec.iteration,
                "labeled_positive": rec.labeled_positive,
                "labeled_negative": rec.labeled_negative,
                "unlabeled": rec.unlabeled,
                "oracle_labels": rec.oracle_labels,
                "metrics": _metrics_payload(rec.metrics),
            }
            for rec in self.session.history
        ]

    def _publish(self, lifecycle: str) -> None:
        latest = self.session.history[-1] if self.session.history else None
        self._status = {
            "session_id": self.session.session_id,
            "lifecycle": lifecycle,
            "iteration": self.session.iteration,
            "pools": {
                "positive": len(self.session.pools.positive),
                "negative": len(self.session.pools.negative),
                "unlabeled": len(self.session.pools.unlabeled),
            },
            "metrics": _metrics_payload(latest.metrics) if latest else None,
            "history": self._history_payload(),
            "bootstrap_positives": [
                {"left_id": l, "right_id": r} for (l, r) in self.session.pools.positive
                if self.session.pools.positive[(l, r)].source == "bootstrap"
            ],
        }

    def _batch_payload(self, batch: list[SelectedPair]) -> dict:
        pairs = []
        self._pair_index = {}
        for i, sp in enumerate(batch):
            pair_id = str(i)
            self._pair_index[pair_id] = sp.pair.key
            left = self.session.left.table.record(sp.pair.left_id)
            right = self.session.right.table.record(sp.pair.right_id)
            pairs.append(
                {
                    "pair_id": pair_id,
                    "left_id": sp.pair.left_id,
                    "right_id": sp.pair.right_id,
                    "left_values": list(left.values),
                    "right_values": list(right.values),
                    "category": sp.category,
                    "probability": sp.probability,
                }
            )
        return {"iteration": self.session.iteration, "columns": list(self.session.left.table.columns), "pairs": pairs}

    def _advance_batch(self) -> None:
        """Select the next pending batch (or finish) and publish snapshots."""
        if self.session.iteration >= self.max_iterations:
            self._finish_locked()
            return
        batch = self.session.select_batch()
        if not batch:
            self._finish_locked()
            return
        self._batch = self._batch_payload(batch)
        self._publish("awaiting_labels")

    def _finish_locked(self) -> None:
        self._batch = {"iteration": self.session.iteration, "columns": [], "pairs": []}
        if self.matcher_out:
            save_matcher(self.session.matcher, self.matcher_out)
        self._publish("done")

    # -- request surface -----------------------------------------------------

    def status(self) -> dict:
        return self._status

    def batch(self) -> dict:
        return self._batch

    def apply_labels(self, items: list[dict]) -> dict:
        with self._mutate:
            if self._status.get("lifecycle") != "awaiting_labels":
                raise ValueError(f"no batch outstanding (lifecycle {self._status.get('lifecycle')})")
            expected = set(self._pair_index)
            got = {str(item.get("pair_id")) for item in items}
            if got != expected:
                raise ValueError(
                    f"labels must cover the full batch: expected pair_ids {sorted(expected)}, "
                    f"got {sorted(got)}"
                )
            labels = {}
            for item in items:
                label = int(item["label"])
                if label not in (0, 1):
                    raise ValueError(f"label must be 0 or 1, got {item['label']!r}")
                labels[self._pair_index[str(item["pair_id"])]] = label
            self._publish("retraining")
            self.session.apply_labels(labels)  # retrains and refits the density
            self._advance_batch()
            return {"status": "ok", "iteration": self.session.iteration}

    def finish(self) -> dict:
        with self._mutate:
            self._finish_locked()
            return {"status": "done", "iteration": self.session.iteration}


class _Handler(BaseHTTPRequestHandler):
    service: SessionService  # set by serve()

    def _send(self, code: int, payload: dict | list) -> None:
        body = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def do_OPTIONS(self):
        self._send(200, {})

    def do_GET(self):
        if self.path == "/session":
            self._send(200, self.service.status())
        elif self.path == "/session/batch":
            self._send(200, self.service.batch())
        else:
            self._send(404, {"error": f"unknown path {self.path}"})

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b""
        try:
            if self.path == "/session/labels":
                items = json.loads(raw.decode() or "[]")
                if not isinstance(items, list):
                    raise ValueError("body must be a JSON array of {pair_id, label}")
                self._send(200, self.service.apply_labels(items))
            elif self.path == "/session/finish":
                self._send(200, self.service.finish())
            else:
                self._send(404, {"error": f"unknown path {self.path}"})
        except (ValueError, KeyError) as exc:
            self._send(400, {"error": str(exc)})


def make_server(service: SessionService, host: str = "127.0.0.1", port: int = 8571) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)


def serve(service: SessionService, host: str = "127.0.0.1", port: int = 8571) -> None:
    """Serve until interrupted; binding errors propagate to the caller."""
    server = make_server(service, host, port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
