import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vilod.dataset_io import (
    TEST,
    TRAIN_POOL,
    VALIDATION,
    GroundTruthBox,
    parse_yolo_label,
)
from vilod.detector import Detection, ModelVersion, TrainConfig
from vilod.evaluation import EvalReport
from vilod.persistence import (
    EntityStore,
    NoSnapshot,
    UnknownImage,
    UnknownModel,
    state_from_dict,
    state_to_dict,
)
from vilod.workflow import IterationState, NotSelectable


@pytest.fixture
def store(tmp_path):
    s = EntityStore(tmp_path)
    s.add_user("u1", "Analyst", token="secret")
    s.add_image("img_a", TRAIN_POOL, 640, 480)
    s.add_image("img_b", TRAIN_POOL, 640, 480)
    s.add_image("val_a", VALIDATION, 640, 480)
    s.add_image("test_a", TEST, 640, 480)
    s.add_model(base_model(0), user_id="u1")
    yield s
    s.close()


def base_model(version, parent=None):
    return ModelVersion(
        version=version,
        parent=parent,
        weights_ref=f"weights-{version}",
        train_config=TrainConfig(),
        created_at=1000.0 + version,
    )


BOXES = [
    GroundTruthBox(0, 0.5, 0.5, 0.25, 0.25),
    GroundTruthBox(2, 0.125, 0.75, 0.1, 0.2),
]


class TestUsers:
    def test_token_check(self, store):
        assert store.check_token("u1", "secret")
        assert not store.check_token("u1", "wrong")
        assert not store.check_token("nobody", "secret")


class TestDetections:
    def dets(self, version, n=3):
        return [
            Detection("img_a", i % 2, 0.5, 0.5, 0.2, 0.2, 0.5 + 0.1 * i, version)
            for i in range(n)
        ]

    def test_replace_semantics(self, store):
        store.record_detections(0, self.dets(0, 3))
        assert len(store.detections_for_model(0)) == 3
        store.record_detections(0, self.dets(0, 1))
        assert store.detections_for_model(0) == self.dets(0, 1)

    def test_roundtrip(self, store):
        dets = self.dets(0, 4)
        store.record_detections(0, dets)
        assert store.detections_for_model(0) == dets

    def test_unknown_model(self, store):
        with pytest.raises(UnknownModel):
            store.record_detections(7, self.dets(7))

    def test_unknown_image_aborts_whole_batch(self, store):
        store.record_detections(0, self.dets(0, 2))
        bad = self.dets(0, 1) + [Detection("ghost", 0, 0.5, 0.5, 0.2, 0.2, 0.9, 0)]
        with pytest.raises(UnknownImage):
            store.record_detections(0, bad)
        # prior rows untouched: the failed write replaced nothing
        assert len(store.detections_for_model(0)) == 2

    def test_multiple_versions_isolated(self, store):
        store.add_model(base_model(1, parent=0), user_id="u1")
        store.record_detections(0, self.dets(0, 2))
        store.record_detections(1, self.dets(1, 3))
        assert len(store.detections_for_model(0)) == 2
        assert len(store.detections_for_model(1)) == 3


class TestAnnotations:
    def test_write_through_roundtrip(self, store, tmp_path):
        store.record_annotation("u1", "img_a", iteration=1, boxes=BOXES)
        label_file = tmp_path / "runs" / "u1" / "labels" / "img_a.txt"
        assert label_file.exists()
        parsed = parse_yolo_label(label_file.read_text())
        for got, want in zip(parsed, BOXES):
            assert got.class_id == want.class_id
            assert got.cx == pytest.approx(want.cx, abs=1e-6)
        assert store.annotations_for_user("u1") == {"img_a": BOXES}

    def test_overwrite_replaces(self, store):
        store.record_annotation("u1", "img_a", 1, BOXES)
        store.record_annotation("u1", "img_a", 1, BOXES[:1])
        assert store.annotations_for_user("u1") == {"img_a": BOXES[:1]}

    def test_empty_annotation_is_valid(self, store, tmp_path):
        store.record_annotation("u1", "img_a", 1, [])
        label_file = tmp_path / "runs" / "u1" / "labels" / "img_a.txt"
        assert label_file.read_text() == ""
        assert store.annotations_for_user("u1") == {"img_a": []}

    def test_delete_removes_row_and_file(self, store, tmp_path):
        store.record_annotation("u1", "img_a", 1, BOXES)
        deleted = store.delete_annotation("u1", "img_a")
        assert deleted == 2
        assert store.annotations_for_user("u1") == {}
        assert not (tmp_path / "runs" / "u1" / "labels" / "img_a.txt").exists()

    def test_non_pool_rejected(self, store):
        with pytest.raises(NotSelectable):
            store.record_annotation("u1", "val_a", 1, BOXES)
        with pytest.raises(NotSelectable):
            store.record_annotation("u1", "test_a", 1, BOXES)

    def test_unknown_image(self, store):
        with pytest.raises(UnknownImage):
            store.record_annotation("u1", "ghost", 1, BOXES)

    @settings(max_examples=50, deadline=None)
    @given(
        boxes=st.lists(
            st.builds(
                GroundTruthBox,
                st.integers(0, 9),
                st.floats(0.05, 0.95),
                st.floats(0.05, 0.95),
                st.floats(0.01, 0.1),
                st.floats(0.01, 0.1),
            ),
            max_size=5,
        )
    )
    def test_roundtrip_property(self, tmp_path_factory, boxes):
        store = EntityStore(tmp_path_factory.mktemp("store"))
        store.add_user("u", "u", "t")
        store.add_image("img", TRAIN_POOL)
        store.record_annotation("u", "img", 0, boxes)
        got = store.annotations_for_user("u")["img"]
        assert got == boxes
        store.close()


def sample_state():
    return IterationState(
        iteration=3,
        phase="ready_to_train",
        labeled_ids={"img_a", "img_b"},
        pending={"img_b": BOXES},
        current_model=base_model(2, parent=1),
        suggestions=["img_b", "img_a"],
        trajectory=[
            EvalReport(0.5, 0.3, 0.25, 0.8, 0.6, per_class_ap50={0: 0.5, 1: 0.4}),
            EvalReport(0.7, 0.5, 0.45, 0.85, 0.7),
        ],
        annotations={"img_a": (0, BOXES[:1]), "img_b": (3, BOXES)},
        faults=["training crashed at iteration 2"],
    )


class TestSnapshots:
    def test_dict_roundtrip_lossless(self):
        state = sample_state()
        assert state_from_dict(state_to_dict(state)) == state

    def test_snapshot_restore(self, store):
        state = sample_state()
        store.snapshot_session("u1", state)
        assert store.restore_session("u1") == state

    def test_restore_after_reopen(self, tmp_path):
        state = sample_state()
        store = EntityStore(tmp_path)
        store.add_user("u1", "Analyst", "secret")
        store.snapshot_session("u1", state)
        store.close()
        # fresh process simulation: new store object over the same directory
        reopened = EntityStore(tmp_path)
        assert reopened.restore_session("u1") == state
        assert reopened.check_token("u1", "secret")
        reopened.close()

    def test_missing_snapshot(self, store):
        with pytest.raises(NoSnapshot):
            store.restore_session("u1")


class TestTrajectoryExport:
    def test_csv_layout(self, store, tmp_path):
        path = store.write_trajectory("u1", "baseline", sample_state().trajectory)
        lines = path.read_text().splitlines()
        assert lines[0] == "strategy,iteration,map50_95,map50,map75,precision,recall"
        assert len(lines) == 3
        assert lines[1].startswith("baseline,0,")


class TestDurabilityAcrossReopen:
    def test_all_tables_survive(self, tmp_path):
        store = EntityStore(tmp_path)
        store.add_user("u1", "Analyst", "secret")
        store.add_image("img_a", TRAIN_POOL, 640, 480)
        store.add_model(base_model(0), user_id="u1")
        store.record_detections(
            0, [Detection("img_a", 0, 0.5, 0.5, 0.2, 0.2, 0.9, 0)]
        )
        store.record_annotation("u1", "img_a", 1, BOXES)
        store.close()

        reopened = EntityStore(tmp_path)
        assert reopened.image_split("img_a") == TRAIN_POOL
        assert reopened.has_model(0)
        assert len(reopened.detections_for_model(0)) == 1
        assert reopened.annotations_for_user("u1") == {"img_a": BOXES}
        reopened.close()
