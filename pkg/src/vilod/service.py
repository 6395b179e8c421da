"""HTTP API plus a live training-event channel over WebSocket.

All mutations go through one lock per session (single-writer rule); reads take
a consistent snapshot under the same lock. Auth is a single bearer token,
taken from VILOD_TOKEN unless passed explicitly.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass, field
from typing import Optional

from fastapi import Depends, FastAPI, Header, HTTPException, WebSocket
from fastapi.responses import PlainTextResponse, Response

from . import evaluation, uncertainty
from .dataset_io import GroundTruthBox
from .detector import EpochMetrics
from .evaluation import PredictedBox, trajectory_csv_rows
from .projection import export_projection_csv
from .workflow import BudgetExceeded, NotPending, NotSelectable, PhaseViolation, Session

ENV_TOKEN = "VILOD_TOKEN"
ENV_DATA_ROOT = "VILOD_DATA_ROOT"
ENV_DETECTOR_ADDR = "VILOD_DETECTOR_ADDR"


@dataclass
class TrainingJob:
    job_id: int
    events: list[dict] = field(default_factory=list)
    done: bool = False
    condition: threading.Condition = field(default_factory=threading.Condition)

    def publish(self, event: dict, terminal: bool = False) -> None:
        with self.condition:
            self.events.append(event)
            if terminal:
                self.done = True
            self.condition.notify_all()

    def stream_from(self, start: int = 0):
        index = start
        while True:
            with self.condition:
                while index >= len(self.events) and not self.done:
                    self.condition.wait(timeout=30)
                if index < len(self.events):
                    event = self.events[index]
                else:
                    return
            index += 1
            yield event


class ServiceState:
    def __init__(self, session: Session, baseline_trajectory=None):
        self.session = session
        self.lock = threading.RLock()
        self.baseline_trajectory = baseline_trajectory or []
        self.jobs: dict[int, TrainingJob] = {}
        self.next_job_id = 1


def _box_payload(boxes: list[GroundTruthBox]) -> list[list[float]]:
    return [[b.class_id, b.cx, b.cy, b.w, b.h] for b in boxes]


def _parse_boxes(payload) -> list[GroundTruthBox]:
    if not isinstance(payload, list):
        raise HTTPException(400, "boxes must be a list")
    boxes = []
    for item in payload:
        try:
            class_id = int(item["class"])
            cx, cy, w, h = (float(v) for v in item["box"])
        except (KeyError, TypeError, ValueError, IndexError):
            raise HTTPException(400, "each box needs 'class' and 'box': [cx, cy, w, h]")
        if not (0 <= cx <= 1 and 0 <= cy <= 1 and 0 < w <= 1 and 0 < h <= 1):
            raise HTTPException(400, f"box out of range: {item['box']}")
        boxes.append(GroundTruthBox(class_id, cx, cy, w, h))
    return boxes


def _majority_class(boxes: list[GroundTruthBox]) -> int:
    counts: dict[int, int] = {}
    for b in boxes:
        counts[b.class_id] = counts.get(b.class_id, 0) + 1
    # ties break toward the lowest class id
    return min(counts, key=lambda c: (-counts[c], c))


def create_app(
    session: Session,
    token: Optional[str] = None,
    baseline_trajectory=None,
) -> FastAPI:
    app = FastAPI(title="vilod")
    token = token if token is not None else os.environ.get(ENV_TOKEN, "")
    svc = ServiceState(session, baseline_trajectory)
    app.state.svc = svc

    def authed(authorization: str = Header(default="")) -> None:
        if token and authorization != f"Bearer {token}":
            raise HTTPException(401, "bad or missing token")

    def state_or_404():
        if svc.session.state is None:
            raise HTTPException(404, "no active session")
        return svc.session.state

    @app.get("/state")
    def get_state(_=Depends(authed)):
        with svc.lock:
            state = state_or_404()
            session = svc.session
            statuses = {}
            for point in session.projection_points or []:
                image_id = point.image_id
                if image_id in state.labeled_ids:
                    _, boxes = state.annotations[image_id]
                    statuses[image_id] = {
                        "status": "labeled",
                        "majority_class": _majority_class(boxes) if boxes else None,
                    }
                elif image_id in state.suggestions:
                    statuses[image_id] = {"status": "suggested"}
                else:
                    statuses[image_id] = {"status": "unlabeled"}
            points = [
                {"image_id": p.image_id, "x": p.x, "y": p.y, **statuses.get(p.image_id, {})}
                for p in (session.projection_points or [])
            ]
            class_ids = list(range(len(session.registry.classes))) or sorted(
                {d.class_id for d in session.detections}
            )
            pool_dets = [
                PredictedBox(d.class_id, d.box(), d.confidence)
                for d in session.detections
                if d.image_id not in state.labeled_ids
            ]
            conf_dist = evaluation.confidence_distribution(pool_dets, class_ids)
            balance = evaluation.class_balance(
                [
                    (b.class_id, it)
                    for _, (it, boxes) in state.annotations.items()
                    for b in boxes
                ],
                state.iteration,
            )
            return {
                "iteration": state.iteration,
                "phase": state.phase,
                "budget": session.config.budget_per_iteration,
                "budget_progress": len(state.pending),
                "labeled_count": len(state.labeled_ids),
                "suggestions": list(state.suggestions),
                "points": points,
                "heatmap_ref": "/heatmap",
                "model_version": state.current_model.version,
                "confidence_distribution": {
                    str(c): {
                        "empty": s.empty,
                        "min": s.min,
                        "q1": s.q1,
                        "median": s.median,
                        "q3": s.q3,
                        "max": s.max,
                        "outliers": s.outliers,
                    }
                    for c, s in conf_dist.items()
                },
                "class_balance": {
                    "prior": {str(c): n for c, n in balance.prior_count.items()},
                    "new": {str(c): n for c, n in balance.new_count.items()},
                },
                "faults": list(state.faults),
            }

    @app.get("/projection", response_class=PlainTextResponse)
    def get_projection(_=Depends(authed)):
        with svc.lock:
            state_or_404()
            points = svc.session.projection_points or []
            return export_projection_csv(points)

    @app.get("/heatmap")
    def get_heatmap(_=Depends(authed)):
        with svc.lock:
            state_or_404()
            grid = svc.session.heatmap
            if grid is None:
                raise HTTPException(404, "no heatmap (projection not loaded)")
            return {
                "x_min": grid.x_min,
                "x_max": grid.x_max,
                "y_min": grid.y_min,
                "y_max": grid.y_max,
                "nx": grid.nx,
                "ny": grid.ny,
                "bandwidth": [list(row) for row in grid.bandwidth.tolist()],
                "colormap": grid.colormap_name,
                "degenerate": grid.degenerate,
                "values": grid.values.tolist(),
            }

    @app.get("/suggestions")
    def get_suggestions(_=Depends(authed)):
        with svc.lock:
            state = state_or_404()
            detections_map = svc.session.detections_map()
            return [
                {
                    "image_id": i,
                    "avg_conf": uncertainty.average_confidence(detections_map.get(i, [])),
                }
                for i in state.suggestions
            ]

    @app.get("/images/{image_id}")
    def get_image(image_id: str, _=Depends(authed)):
        record = svc.session.registry.images.get(image_id)
        if record is None or record.image_path is None or not record.image_path.exists():
            raise HTTPException(404, f"no image file for {image_id}")
        media = "image/png" if record.image_path.suffix == ".png" else "image/jpeg"
        return Response(record.image_path.read_bytes(), media_type=media)

    @app.get("/images/{image_id}/predictions")
    def get_predictions(image_id: str, _=Depends(authed)):
        with svc.lock:
            state = state_or_404()
            if image_id not in svc.session.registry.images:
                raise HTTPException(404, f"unknown image {image_id}")
            return [
                {"class": d.class_id, "box": [d.cx, d.cy, d.w, d.h], "conf": d.confidence}
                for d in svc.session.detections
                if d.image_id == image_id
            ]

    @app.post("/annotations/{image_id}")
    def post_annotation(image_id: str, boxes: list[dict], _=Depends(authed)):
        parsed = _parse_boxes(boxes)
        with svc.lock:
            state = state_or_404()
            try:
                svc.session.record_annotation(image_id, parsed)
            except BudgetExceeded as exc:
                raise HTTPException(409, str(exc))
            except PhaseViolation as exc:
                raise HTTPException(409, str(exc))
            except NotSelectable as exc:
                raise HTTPException(422, str(exc))
            return {
                "budget_progress": len(state.pending),
                "budget": svc.session.config.budget_per_iteration,
                "phase": state.phase,
            }

    @app.delete("/annotations/{image_id}")
    def delete_annotation(image_id: str, _=Depends(authed)):
        with svc.lock:
            state = state_or_404()
            try:
                svc.session.undo_annotation(image_id)
            except PhaseViolation as exc:
                raise HTTPException(409, str(exc))
            except NotPending as exc:
                raise HTTPException(422, str(exc))
            return {
                "budget_progress": len(state.pending),
                "budget": svc.session.config.budget_per_iteration,
                "phase": state.phase,
            }

    @app.post("/retrain")
    def post_retrain(_=Depends(authed)):
        with svc.lock:
            state = state_or_404()
            if state.phase != "ready_to_train":
                raise HTTPException(409, "retrain requires a full pending batch")
            job = TrainingJob(job_id=svc.next_job_id)
            svc.next_job_id += 1
            svc.jobs[job.job_id] = job

        def run() -> None:
            def on_epoch(metrics: EpochMetrics) -> None:
                job.publish(
                    {
                        "type": "epoch",
                        "epoch": metrics.epoch,
                        "map50": metrics.map50,
                        "map50_95": metrics.map50_95,
                        "box_loss": metrics.box_loss,
                        "cls_loss": metrics.class_loss,
                    }
                )

            try:
                with svc.lock:
                    faults_before = len(svc.session.state.faults)
                    svc.session.trigger_retrain(on_epoch=on_epoch)
                    new_state = svc.session.state
                if len(new_state.faults) > faults_before:
                    job.publish(
                        {"type": "failed", "detail": new_state.faults[-1]}, terminal=True
                    )
                else:
                    job.publish(
                        {"type": "done", "version": new_state.current_model.version},
                        terminal=True,
                    )
            except Exception as exc:  # defensive: a crash must still close the stream
                job.publish({"type": "failed", "detail": str(exc)}, terminal=True)

        threading.Thread(target=run, daemon=True).start()
        return {"job_id": job.job_id}

    @app.get("/trajectories")
    def get_trajectories(_=Depends(authed)):
        with svc.lock:
            state = state_or_404()
            return {
                "session": [r.to_dict() for r in state.trajectory],
                "baseline": [r.to_dict() for r in svc.baseline_trajectory],
            }

    @app.websocket("/training")
    async def training_channel(websocket: WebSocket):
        await websocket.accept()
        job_id = websocket.query_params.get("job_id")
        with svc.lock:
            if job_id is not None:
                job = svc.jobs.get(int(job_id))
            else:
                job = svc.jobs.get(max(svc.jobs)) if svc.jobs else None
        if job is None:
            await websocket.send_json({"type": "failed", "detail": "no training job"})
            await websocket.close()
            return
        import anyio

        # stream with a cursor so subscribers joining mid-train see the rest
        index = 0
        while True:
            def next_event(i=index):
                with job.condition:
                    while i >= len(job.events) and not job.done:
                        job.condition.wait(timeout=30)
                    return job.events[i] if i < len(job.events) else None

            event = await anyio.to_thread.run_sync(next_event)
            if event is None:
                break
            await websocket.send_json(event)
            index += 1
            if event.get("type") in ("done", "failed"):
                break
        await websocket.close()

    return app
