import threading

import pytest

from vilod.dataset_io import GroundTruthBox
from vilod.detector import (
    ConcurrentTraining,
    SyntheticDetector,
    SyntheticSkill,
    SyntheticSkillConfig,
    TrainConfig,
    TrainingFailed,
    UnknownClass,
    UnknownModel,
    decode_epoch_line,
    decode_infer_response_line,
    encode_epoch_line,
    encode_infer_response_line,
    synthetic_update_skill,
)
from vilod.detector_wire import DetectorServer, RemoteDetector, read_manifest, write_manifest

GT = {
    "a": [GroundTruthBox(0, 0.5, 0.5, 0.2, 0.2)],
    "b": [GroundTruthBox(1, 0.3, 0.3, 0.1, 0.1), GroundTruthBox(0, 0.7, 0.7, 0.2, 0.2)],
    "c": [],
}


def make_detector(**kwargs):
    config = SyntheticSkillConfig(seed=7, **kwargs)
    return SyntheticDetector(lambda i: GT.get(i, []), num_classes=2, skill_config=config)


class TestTraining:
    def test_fifty_epochs_then_child_version(self):
        detector = make_detector()
        manifest = {i: GT[i] for i in ["a", "b"]}
        run = detector.train(0, manifest, TrainConfig(epochs=50))
        metrics = list(run)
        assert len(metrics) == 50
        assert [m.epoch for m in metrics] == list(range(1, 51))
        assert run.result.version == 1
        assert run.result.parent == 0

    def test_empty_manifest_rejected(self):
        detector = make_detector()
        with pytest.raises(TrainingFailed):
            detector.train(0, {})

    def test_concurrent_training_rejected(self):
        detector = make_detector()
        run = detector.train(0, {"a": GT["a"]})
        it = iter(run.__iter__())
        next(it)  # job active
        with pytest.raises(ConcurrentTraining):
            detector.train(0, {"b": GT["b"]})
        for _ in it:
            pass

    def test_version_lineage_chain(self):
        detector = make_detector()
        parent = 0
        for _ in range(3):
            run = detector.train(parent, {"a": GT["a"]})
            for _ in run:
                pass
            assert run.result.parent == parent
            parent = run.result.version
        versions = detector.versions
        assert sorted(versions) == [0, 1, 2, 3]
        for v in range(1, 4):
            assert versions[v].parent == v - 1

    def test_unknown_parent(self):
        detector = make_detector()
        with pytest.raises(UnknownModel):
            detector.train(5, {"a": GT["a"]})


class TestInference:
    def test_zero_detect_prob(self):
        detector = make_detector(detect_prob_override=0.0)
        assert detector.infer(0, ["a", "b", "c"]) == []

    def test_perfect_noise_free_reproduces_truth(self):
        detector = make_detector(
            detect_prob_override=1.0, noise_base=0.0, conf_spread=0.0
        )
        detections = detector.infer(0, ["a", "b"])
        by_image = {}
        for d in detections:
            by_image.setdefault(d.image_id, []).append(d)
        assert len(by_image["a"]) == 1
        assert len(by_image["b"]) == 2
        det = by_image["a"][0]
        gt = GT["a"][0]
        assert (det.cx, det.cy, det.w, det.h) == (gt.cx, gt.cy, gt.w, gt.h)
        skill = detector.skill(0)
        assert det.confidence == pytest.approx(skill.confidence_mean(0))

    def test_determinism(self):
        detector = make_detector()
        a = detector.infer(0, ["a", "b", "c"])
        b = detector.infer(0, ["a", "b", "c"])
        assert a == b

    def test_only_requested_images(self):
        detector = make_detector(detect_prob_override=1.0)
        detections = detector.infer(0, ["a"])
        assert {d.image_id for d in detections} <= {"a"}


class TestSkill:
    def make_skill(self):
        return SyntheticSkill(config=SyntheticSkillConfig(), labeled_count={})

    def test_no_annotations_unchanged(self):
        skill = self.make_skill()
        assert synthetic_update_skill(skill, [], 2) == skill

    def test_detect_prob_grows(self):
        skill = self.make_skill()
        before = skill.detect_prob(1)
        grown = synthetic_update_skill(
            skill, [GroundTruthBox(1, 0.5, 0.5, 0.1, 0.1)] * 10, 2
        )
        assert grown.detect_prob(1) > before
        assert grown.labeled_count[1] == 10

    def test_unknown_class(self):
        with pytest.raises(UnknownClass):
            synthetic_update_skill(self.make_skill(), [GroundTruthBox(9, 0.5, 0.5, 0.1, 0.1)], 2)

    def test_five_iteration_trajectory_monotone(self):
        import math

        skill = self.make_skill()
        cfg = skill.config
        probs, confs, sigmas = [], [], []
        for step in range(5):
            skill = synthetic_update_skill(
                skill, [GroundTruthBox(0, 0.5, 0.5, 0.1, 0.1)] * 30, 2
            )
            probs.append(skill.detect_prob(0))
            confs.append(skill.confidence_mean(0))
            sigmas.append(skill.localization_sigma(0))
            # oracle: logistic recomputed straight from the count
            count = 30 * (step + 1)
            expected = 1 / (1 + math.exp(-(cfg.detect_a * count + cfg.detect_b)))
            assert probs[-1] == pytest.approx(expected)
        assert probs == sorted(probs)
        assert confs == sorted(confs)
        assert sigmas == sorted(sigmas, reverse=True)


class TestWireProtocol:
    def test_infer_line_roundtrip(self):
        detector = make_detector(detect_prob_override=1.0)
        detections = [d for d in detector.infer(0, ["b"])]
        line = encode_infer_response_line("b", detections)
        assert decode_infer_response_line(line, 0) == detections

    def test_epoch_line_roundtrip(self):
        detector = make_detector()
        run = detector.train(0, {"a": GT["a"]}, TrainConfig(epochs=3))
        for m in run:
            assert decode_epoch_line(encode_epoch_line(m)) == m

    def test_manifest_roundtrip(self, tmp_path):
        manifest = {i: GT[i] for i in ["a", "b", "c"]}
        path = tmp_path / "manifest.json"
        write_manifest(path, manifest)
        assert read_manifest(path) == manifest

    def test_server_infer_and_train(self, tmp_path):
        detector = make_detector()
        server = DetectorServer(detector, port=0)
        server.start()
        try:
            host, port = server.address
            client = RemoteDetector(host, port)
            remote = client.infer(0, ["a", "b", "c"])
            local = detector.infer(0, ["a", "b", "c"])
            assert remote == local

            manifest_path = tmp_path / "manifest.json"
            write_manifest(manifest_path, {"a": GT["a"]})
            epochs, version = client.train(0, str(manifest_path), TrainConfig(epochs=5))
            assert len(epochs) == 5
            assert version == 1
        finally:
            server.stop()

    def test_unreachable_backend(self):
        from vilod.detector import BackendUnavailable

        client = RemoteDetector("127.0.0.1", 1, timeout=0.2)
        with pytest.raises(BackendUnavailable):
            client.infer(0, ["a"])
