"""The annotate/retrain/re-infer loop: session state machine and simulations.

A session starts from a diversity-sampled seed set, trains an initial model,
and then cycles: annotate exactly `budget` pool images, retrain by fine-tuning
the previous version, re-infer the pool, refresh suggestions and the heatmap,
and append a test-set evaluation to the trajectory.

Automated runs replace the human with a selection policy (the uncertainty
baseline, scripted stand-ins for the expert strategies, or a replayed id list)
that labels straight from ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

from . import evaluation, projection, uncertainty
from .dataset_io import TRAIN_POOL, DatasetRegistry, GroundTruthBox
from .detector import Detection, ModelVersion, SyntheticDetector, TrainConfig
from .evaluation import EvalReport, PredictedBox
from .projection import ProjectionPoint

PHASES = ("annotating", "ready_to_train", "training", "completed")


class WorkflowError(Exception):
    pass


class BudgetExceeded(WorkflowError):
    pass


class NotSelectable(WorkflowError):
    pass


class PhaseViolation(WorkflowError):
    pass


class NotPending(WorkflowError):
    pass


class ReplayExhausted(WorkflowError):
    pass


@dataclass(frozen=True)
class SessionConfig:
    budget_per_iteration: int = 30
    total_iterations: int = 5
    suggestion_count: Optional[int] = None  # None -> budget_per_iteration
    seed: int = 0
    train_config: TrainConfig = TrainConfig()
    seed_pool_k: int = 20
    seed_pool_per_centroid: int = 2

    def __post_init__(self):
        if self.budget_per_iteration < 0:
            raise WorkflowError("budget must be >= 0")
        if self.total_iterations < 1:
            raise WorkflowError("need at least one iteration")

    @property
    def suggestions_shown(self) -> int:
        if self.suggestion_count is not None:
            return self.suggestion_count
        return self.budget_per_iteration


@dataclass
class IterationState:
    iteration: int
    phase: str
    labeled_ids: set[str]
    pending: dict[str, list[GroundTruthBox]]
    current_model: ModelVersion
    suggestions: list[str]
    trajectory: list[EvalReport]
    annotations: dict[str, tuple[int, list[GroundTruthBox]]]
    faults: list[str] = field(default_factory=list)

    @property
    def pending_ids(self) -> set[str]:
        return set(self.pending)


@dataclass(frozen=True)
class SelectionPolicy:
    kind: str  # uncertainty_baseline | exploration | uncertainty_filtered | balanced | replay
    quality_filter: Optional[Callable[[str], bool]] = None
    replay_ids: Optional[Sequence[str]] = None
    balance_weight: float = 0.05
    cluster_k: int = 8


class Session:
    """Single-writer HITL session over one registry and one detector backend."""

    def __init__(
        self,
        config: SessionConfig,
        registry: DatasetRegistry,
        embeddings: Mapping[str, Sequence[float]],
        detector: SyntheticDetector,
        ground_truth: Optional[Callable[[str], list[GroundTruthBox]]] = None,
        projection_points: Optional[Sequence[ProjectionPoint]] = None,
    ):
        self.config = config
        self.registry = registry
        self.embeddings = embeddings
        self.detector = detector
        self.ground_truth = ground_truth or registry.load_ground_truth
        self.projection_points = list(projection_points) if projection_points else None
        self.state: Optional[IterationState] = None
        self.detections: list[Detection] = []  # current model on the pool
        self.heatmap: Optional[uncertainty.HeatmapGrid] = None
        self._ranked_candidates: list[str] = []
        self._pool = set(registry.pool_ids())
        self._test_ids = sorted(registry.split_ids("test"))

    # -- lifecycle -------------------------------------------------------

    def start(self) -> IterationState:
        seed_ids = projection.select_seed_pool(
            self.embeddings,
            k=self.config.seed_pool_k,
            per_centroid=self.config.seed_pool_per_centroid,
            seed=self.config.seed,
        )
        manifest = {i: self.ground_truth(i) for i in seed_ids}
        run = self.detector.train(0, manifest, self.config.train_config)
        for _ in run:
            pass
        assert run.result is not None
        model = run.result

        annotations = {i: (0, manifest[i]) for i in seed_ids}
        self.state = IterationState(
            iteration=1,
            phase="annotating",
            labeled_ids=set(seed_ids),
            pending={},
            current_model=model,
            suggestions=[],
            trajectory=[],
            annotations=annotations,
        )
        self._refresh_model_outputs()
        self.state.trajectory.append(self._evaluate_on_test())
        if self.config.budget_per_iteration == 0:
            self.state.phase = "ready_to_train"
        return self.state

    def _require_state(self) -> IterationState:
        if self.state is None:
            raise WorkflowError("session not started")
        return self.state

    def _refresh_model_outputs(self) -> None:
        """Re-infer the pool, rebuild the candidate ranking and the heatmap."""
        state = self._require_state()
        pool_ids = sorted(self._pool)
        self.detections = self.detector.infer(state.current_model, pool_ids)
        detections_map = self.detections_map()
        ranked = uncertainty.select_al_samples(
            detections_map, exclude=state.labeled_ids, budget=len(pool_ids)
        )
        self._ranked_candidates = [s.image_id for s in ranked]
        self._refresh_suggestions()
        if self.projection_points is not None:
            by_id = {p.image_id: p for p in self.projection_points}
            points = [by_id[i] for i in pool_ids if i in by_id]
            weights = [
                uncertainty.uncertainty_weight(
                    uncertainty.average_confidence(detections_map.get(p.image_id, []))
                )
                for p in points
            ]
            if len(points) >= 2:
                self.heatmap = uncertainty.compute_heatmap(points, weights)

    def _refresh_suggestions(self) -> None:
        state = self._require_state()
        blocked = state.labeled_ids | state.pending_ids
        state.suggestions = [
            i for i in self._ranked_candidates if i not in blocked
        ][: self.config.suggestions_shown]

    def detections_map(self) -> dict[str, list[float]]:
        out: dict[str, list[float]] = {i: [] for i in self._pool}
        for d in self.detections:
            out[d.image_id].append(d.confidence)
        return out

    def _evaluate_on_test(self) -> EvalReport:
        state = self._require_state()
        test_dets = self.detector.infer(state.current_model, self._test_ids)
        dets_by_image: dict[str, list[PredictedBox]] = {i: [] for i in self._test_ids}
        for d in test_dets:
            dets_by_image[d.image_id].append(
                PredictedBox(d.class_id, d.box(), d.confidence)
            )
        gts_by_image = {
            i: [(b.class_id, b.as_tuple()) for b in self.ground_truth(i)]
            for i in self._test_ids
        }
        return evaluation.map_metrics(dets_by_image, gts_by_image)

    # -- annotation phase --------------------------------------------------

    def record_annotation(self, image_id: str, boxes: list[GroundTruthBox]) -> IterationState:
        state = self._require_state()
        if state.phase not in ("annotating", "ready_to_train"):
            raise PhaseViolation(f"cannot annotate in phase {state.phase}")
        record = self.registry.images.get(image_id)
        if record is None or record.split != TRAIN_POOL or image_id in state.labeled_ids:
            raise NotSelectable(image_id)
        # a full batch still accepts overwrites of pending images, but a new
        # distinct image exceeds the budget
        if state.phase == "ready_to_train" and image_id not in state.pending:
            raise BudgetExceeded(
                f"budget {self.config.budget_per_iteration} already met"
            )
        if image_id not in state.pending and len(state.pending) >= self.config.budget_per_iteration:
            raise BudgetExceeded(
                f"budget {self.config.budget_per_iteration} already met"
            )
        state.pending[image_id] = list(boxes)
        if len(state.pending) == self.config.budget_per_iteration:
            state.phase = "ready_to_train"
        self._refresh_suggestions()
        return state

    def undo_annotation(self, image_id: str) -> IterationState:
        state = self._require_state()
        if state.phase not in ("annotating", "ready_to_train"):
            raise PhaseViolation(f"cannot undo in phase {state.phase}")
        if image_id not in state.pending:
            raise NotPending(image_id)
        del state.pending[image_id]
        state.phase = "annotating"
        self._refresh_suggestions()
        return state

    # -- retraining ----------------------------------------------------------

    def trigger_retrain(
        self, on_epoch: Optional[Callable] = None
    ) -> IterationState:
        """Merge pending into labeled and train the next model version.

        On training failure the labels stay merged (human work is kept), the
        model rolls back to its previous version and a fault is recorded.
        """
        state = self._require_state()
        if state.phase != "ready_to_train":
            raise PhaseViolation(
                f"retrain requires exactly {self.config.budget_per_iteration} pending items"
            )
        state.phase = "training"
        batch = dict(state.pending)
        for image_id, boxes in batch.items():
            state.annotations[image_id] = (state.iteration, boxes)
            state.labeled_ids.add(image_id)
        state.pending = {}

        manifest = {i: boxes for i, (_, boxes) in state.annotations.items()}
        try:
            run = self.detector.train(
                state.current_model, manifest, self.config.train_config
            )
            for metrics in run:
                if on_epoch is not None:
                    on_epoch(metrics)
            assert run.result is not None
            state.current_model = run.result
        except Exception as exc:
            state.faults.append(f"iteration {state.iteration}: {exc}")
            state.phase = "annotating"
            self._refresh_suggestions()
            return state

        self._refresh_model_outputs()
        state.trajectory.append(self._evaluate_on_test())
        if state.iteration >= self.config.total_iterations:
            state.phase = "completed"
        else:
            state.iteration += 1
            state.phase = "annotating"
        return state


def start_session(
    config: SessionConfig,
    registry: DatasetRegistry,
    embeddings: Mapping[str, Sequence[float]],
    detector: SyntheticDetector,
    **kwargs,
) -> Session:
    session = Session(config, registry, embeddings, detector, **kwargs)
    session.start()
    return session


# -- scripted selection policies ----------------------------------------------


def _uncertainty_order(session: Session, bonus: Optional[Callable[[str], float]] = None) -> list[str]:
    state = session.state
    assert state is not None
    detections_map = session.detections_map()
    scored = []
    for image_id, confs in detections_map.items():
        if image_id in state.labeled_ids:
            continue
        score = uncertainty.average_confidence(confs)
        if bonus is not None:
            score -= bonus(image_id)
        scored.append((score, image_id))
    scored.sort()
    return [i for _, i in scored]


def _exploration_order(
    session: Session, cluster_model: projection.ClusterModel, budget: int
) -> list[str]:
    """Round-robin the least-labeled clusters, nearest-to-centroid first."""
    state = session.state
    assert state is not None
    import numpy as np

    members: dict[int, list[str]] = {j: [] for j in range(cluster_model.k)}
    for image_id, j in cluster_model.assignment.items():
        if image_id not in state.labeled_ids:
            members[j].append(image_id)
    for j, ids in members.items():
        centroid = cluster_model.centroids[j]
        ids.sort(
            key=lambda i: (
                float(np.sum((np.asarray(session.embeddings[i]) - centroid) ** 2)),
                i,
            )
        )
    labeled_per_cluster = {j: 0 for j in range(cluster_model.k)}
    for image_id in state.labeled_ids:
        j = cluster_model.assignment.get(image_id)
        if j is not None:
            labeled_per_cluster[j] += 1

    picks: list[str] = []
    cursors = {j: 0 for j in members}
    while len(picks) < budget:
        open_clusters = [j for j in members if cursors[j] < len(members[j])]
        if not open_clusters:
            break
        j = min(open_clusters, key=lambda j: (labeled_per_cluster[j], j))
        picks.append(members[j][cursors[j]])
        cursors[j] += 1
        labeled_per_cluster[j] += 1
    return picks


def _minority_bonus(session: Session, weight: float) -> Callable[[str], float]:
    state = session.state
    assert state is not None
    counts: dict[int, int] = {}
    for _, (_, boxes) in state.annotations.items():
        for b in boxes:
            counts[b.class_id] = counts.get(b.class_id, 0) + 1
    max_count = max(counts.values()) if counts else 1
    by_image: dict[str, dict[int, int]] = {}
    for d in session.detections:
        by_image.setdefault(d.image_id, {})
        by_image[d.image_id][d.class_id] = by_image[d.image_id].get(d.class_id, 0) + 1

    def bonus(image_id: str) -> float:
        classes = by_image.get(image_id)
        if not classes:
            return 0.0
        best = min(sorted(classes), key=lambda c: (-classes[c], c))
        minority = 1.0 - counts.get(best, 0) / max_count
        return weight * minority

    return bonus


def select_batch(session: Session, policy: SelectionPolicy, budget: int, replay_cursor: list[int]) -> list[str]:
    state = session.state
    assert state is not None
    if policy.kind == "uncertainty_baseline":
        return _uncertainty_order(session)[:budget]
    if policy.kind == "uncertainty_filtered":
        predicate = policy.quality_filter or (lambda _: True)
        return [i for i in _uncertainty_order(session) if predicate(i)][:budget]
    if policy.kind == "exploration":
        k = min(policy.cluster_k, len(session.embeddings))
        cluster_model = projection.kmeans_cluster(
            session.embeddings, k=k, seed=session.config.seed
        )
        return _exploration_order(session, cluster_model, budget)
    if policy.kind == "balanced":
        k = min(policy.cluster_k, len(session.embeddings))
        cluster_model = projection.kmeans_cluster(
            session.embeddings, k=k, seed=session.config.seed
        )
        unc = _uncertainty_order(session, bonus=_minority_bonus(session, policy.balance_weight))
        explore = _exploration_order(session, cluster_model, len(session.embeddings))
        picks: list[str] = []
        sources = [iter(unc), iter(explore)]
        turn = 0
        while len(picks) < budget:
            advanced = False
            for offset in range(2):
                src = sources[(turn + offset) % 2]
                for candidate in src:
                    if candidate not in picks:
                        picks.append(candidate)
                        advanced = True
                        break
                if advanced:
                    break
            if not advanced:
                break
            turn += 1
        return picks[:budget]
    if policy.kind == "replay":
        assert policy.replay_ids is not None
        picks = []
        cursor = replay_cursor[0]
        while len(picks) < budget and cursor < len(policy.replay_ids):
            candidate = policy.replay_ids[cursor]
            cursor += 1
            if candidate in session._pool and candidate not in state.labeled_ids:
                picks.append(candidate)
        replay_cursor[0] = cursor
        if len(picks) < budget:
            raise ReplayExhausted(
                f"replay list ran out: wanted {budget}, got {len(picks)}"
            )
        return picks
    raise WorkflowError(f"unknown policy kind {policy.kind!r}")


def run_scripted_strategy(
    policy: SelectionPolicy,
    config: SessionConfig,
    registry: DatasetRegistry,
    embeddings: Mapping[str, Sequence[float]],
    detector: SyntheticDetector,
    ground_truth: Optional[Callable[[str], list[GroundTruthBox]]] = None,
) -> tuple[list[EvalReport], Session]:
    """Fully automated loop: select, label from ground truth, retrain, evaluate."""
    if policy.kind == "replay":
        if policy.replay_ids is None:
            raise WorkflowError("replay policy needs an id list")
        pool = set(registry.pool_ids())
        usable = [i for i in dict.fromkeys(policy.replay_ids) if i in pool]
        if len(usable) < config.budget_per_iteration * config.total_iterations:
            raise ReplayExhausted(
                f"replay list has {len(usable)} usable ids, need "
                f"{config.budget_per_iteration * config.total_iterations}"
            )
    session = Session(config, registry, embeddings, detector, ground_truth=ground_truth)
    session.start()
    gt = session.ground_truth
    replay_cursor = [0]
    for _ in range(config.total_iterations):
        state = session.state
        assert state is not None
        if config.budget_per_iteration == 0:
            # degenerate budget: no training, trajectory repeats the last point
            state.trajectory.append(state.trajectory[-1])
            state.iteration += 1
            continue
        batch = select_batch(session, policy, config.budget_per_iteration, replay_cursor)
        if len(batch) < config.budget_per_iteration:
            raise WorkflowError(
                f"pool exhausted: iteration {state.iteration} found only "
                f"{len(batch)} of {config.budget_per_iteration} selectable images"
            )
        for image_id in batch:
            session.record_annotation(image_id, gt(image_id))
        session.trigger_retrain()
    return session.state.trajectory, session


def run_baseline(
    config: SessionConfig,
    registry: DatasetRegistry,
    embeddings: Mapping[str, Sequence[float]],
    detector: SyntheticDetector,
    ground_truth: Optional[Callable[[str], list[GroundTruthBox]]] = None,
) -> tuple[list[EvalReport], Session]:
    """Automated lowest-average-confidence baseline over the configured cycles."""
    return run_scripted_strategy(
        SelectionPolicy(kind="uncertainty_baseline"),
        config,
        registry,
        embeddings,
        detector,
        ground_truth=ground_truth,
    )
