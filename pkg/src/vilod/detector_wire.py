"""NDJSON-over-TCP transport for the detector backend protocol.

One request object per connection; the server answers with one JSON object per
line. Inference responses carry one line per image; training responses stream
epoch lines and finish with a single `{"done": true, "version": t+1}` line.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .dataset_io import GroundTruthBox
from .detector import (
    BackendUnavailable,
    Detection,
    DetectorError,
    EpochMetrics,
    ModelVersion,
    SyntheticDetector,
    TrainConfig,
    TrainingRun,
    decode_epoch_line,
    decode_infer_response_line,
    encode_done_line,
    encode_epoch_line,
    encode_infer_request,
    encode_infer_response_line,
    encode_train_request,
)


def write_manifest(path: Path | str, manifest: Mapping[str, Sequence[GroundTruthBox]]) -> None:
    payload = {
        image_id: [[b.class_id, b.cx, b.cy, b.w, b.h] for b in boxes]
        for image_id, boxes in manifest.items()
    }
    Path(path).write_text(json.dumps(payload))


def read_manifest(path: Path | str) -> dict[str, list[GroundTruthBox]]:
    payload = json.loads(Path(path).read_text())
    return {
        image_id: [GroundTruthBox(int(c), cx, cy, w, h) for c, cx, cy, w, h in rows]
        for image_id, rows in payload.items()
    }


class DetectorServer:
    """Serves a SyntheticDetector (or compatible backend) over TCP."""

    def __init__(self, backend: SyntheticDetector, host: str = "127.0.0.1", port: int = 0):
        self.backend = backend
        outer = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self) -> None:
                raw = self.rfile.readline()
                if not raw:
                    return
                request = json.loads(raw)
                try:
                    for line in outer._dispatch(request):
                        self.wfile.write((json.dumps(line) + "\n").encode())
                        self.wfile.flush()
                except DetectorError as exc:
                    self.wfile.write(
                        (json.dumps({"error": type(exc).__name__, "detail": str(exc)}) + "\n").encode()
                    )

        self._server = socketserver.ThreadingTCPServer((host, port), Handler)
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    def _dispatch(self, request: dict) -> Iterable[dict]:
        op = request.get("op")
        if op == "infer":
            version = request["model"]
            image_ids = request["images"]
            detections = self.backend.infer(version, image_ids)
            by_image: dict[str, list[Detection]] = {i: [] for i in image_ids}
            for d in detections:
                by_image[d.image_id].append(d)
            for image_id in image_ids:
                yield encode_infer_response_line(image_id, by_image[image_id])
        elif op == "train":
            cfg = request.get("config", {})
            config = TrainConfig(
                epochs=cfg.get("epochs", 50),
                image_size=cfg.get("imgsz", 640),
                seed=cfg.get("seed", 42),
            )
            manifest = read_manifest(request["manifest_path"])
            run = self.backend.train(request["parent"], manifest, config)
            for metrics in run:
                yield encode_epoch_line(metrics)
            assert run.result is not None
            yield encode_done_line(run.result.version)
        else:
            yield {"error": "UnknownOp", "detail": str(op)}

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> None:
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()


class RemoteDetector:
    """Client-side backend talking to a DetectorServer address."""

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self.host = host
        self.port = port
        self.timeout = timeout

    def _connect(self) -> socket.socket:
        try:
            return socket.create_connection((self.host, self.port), timeout=self.timeout)
        except OSError as exc:
            raise BackendUnavailable(str(exc)) from None

    def _request_lines(self, request: dict):
        sock = self._connect()
        try:
            sock.sendall((json.dumps(request) + "\n").encode())
            with sock.makefile("r") as stream:
                for raw in stream:
                    line = json.loads(raw)
                    if "error" in line:
                        raise DetectorError(f"{line['error']}: {line.get('detail', '')}")
                    yield line
        finally:
            sock.close()

    def infer(self, model_version: int, image_ids: Sequence[str]) -> list[Detection]:
        detections: list[Detection] = []
        request = encode_infer_request(model_version, image_ids)
        for line in self._request_lines(request):
            detections.extend(decode_infer_response_line(line, model_version))
        return detections

    def train(
        self, parent: int, manifest_path: str, config: TrainConfig = TrainConfig()
    ) -> tuple[list[EpochMetrics], int]:
        epochs: list[EpochMetrics] = []
        new_version: int | None = None
        for line in self._request_lines(encode_train_request(parent, manifest_path, config)):
            if line.get("done"):
                new_version = line["version"]
            else:
                epochs.append(decode_epoch_line(line))
        if new_version is None:
            raise DetectorError("train stream ended without a terminal line")
        return epochs, new_version
