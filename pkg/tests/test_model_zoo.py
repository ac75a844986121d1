import threading

import numpy as np
import pytest

from explainbench.domain import ImageTensor, TargetSpec, TaskKind
from explainbench.errors import (
    AdapterFailure,
    DuplicateModelId,
    GradientsUnsupported,
    UnknownModel,
)
from explainbench.model_zoo import (
    ModelDescriptor,
    ModelRegistry,
    ToyBoxDetector,
    ToyIdentityConv,
    ToyRegionScorer,
    ToyThresholdSegmenter,
    default_registry,
)


def gray(rows) -> ImageTensor:
    arr = np.asarray(rows, dtype=np.float64)[:, :, None]
    return ImageTensor(arr.shape[0], arr.shape[1], 1, arr)


def finite_difference(scalar_fn, image: ImageTensor, step=1e-4) -> np.ndarray:
    """Central differences of a scalar adapter target w.r.t. each pixel."""
    grads = np.zeros((image.height, image.width))
    for r in range(image.height):
        for c in range(image.width):
            up = np.array(image.data)
            dn = np.array(image.data)
            up[r, c, :] += step
            dn[r, c, :] -= step
            f_up = scalar_fn(ImageTensor(image.height, image.width,
                                         image.channels, up))
            f_dn = scalar_fn(ImageTensor(image.height, image.width,
                                         image.channels, dn))
            grads[r, c] = (f_up - f_dn) / (2 * step)
    return grads


class TestRegistry:
    def test_register_and_list(self):
        reg = ModelRegistry()
        toy = ToyRegionScorer()
        reg.register_model(toy.descriptor, toy)
        listed = reg.list_models(TaskKind.CLASSIFICATION)
        assert [d.model_id for d in listed] == ["toy_region_scorer"]

    def test_duplicate_rejected(self):
        reg = ModelRegistry()
        toy = ToyRegionScorer()
        reg.register_model(toy.descriptor, toy)
        with pytest.raises(DuplicateModelId):
            reg.register_model(toy.descriptor, toy)

    def test_task_partition(self):
        reg = ModelRegistry()
        det = ToyBoxDetector()
        reg.register_model(det.descriptor, det)
        assert reg.list_models(TaskKind.DETECTION)[0].model_id == "toy_box_detector"
        assert reg.list_models(TaskKind.CLASSIFICATION) == []
        assert reg.list_models(TaskKind.SEGMENTATION) == []

    def test_registration_order_preserved(self):
        reg = ModelRegistry()
        a = ToyRegionScorer()
        b = ToyIdentityConv()
        reg.register_model(a.descriptor, a)
        reg.register_model(b.descriptor, b)
        ids = [d.model_id for d in reg.list_models(TaskKind.CLASSIFICATION)]
        assert ids == ["toy_region_scorer", "toy_identity_conv"]
        # reads are idempotent
        assert ids == [d.model_id for d in reg.list_models(TaskKind.CLASSIFICATION)]

    def test_unknown_model(self):
        reg = ModelRegistry()
        with pytest.raises(UnknownModel):
            reg.predict("nope", gray([[0.0]]))

    def test_adapter_failure_wrapped(self):
        class Broken:
            descriptor = ModelDescriptor("broken", TaskKind.CLASSIFICATION,
                                         ("a",), False, (1, 1))

            def predict(self, image):
                raise RuntimeError("boom")

        reg = ModelRegistry()
        b = Broken()
        reg.register_model(b.descriptor, b)
        with pytest.raises(AdapterFailure, match="boom"):
            reg.predict("broken", gray([[0.0]]))

    def test_empty_label_set_rejected(self):
        from explainbench.errors import TargetInvalid
        with pytest.raises(TargetInvalid):
            ModelDescriptor("m", TaskKind.CLASSIFICATION, (), False, (1, 1))


class TestToyRegionScorer:
    def test_hand_softmax(self):
        reg = default_registry()
        pred = reg.predict("toy_region_scorer", gray([[1.0, 0.0], [0.0, 0.0]]))
        np.testing.assert_allclose(pred.class_probs, [0.7311, 0.2689],
                                   atol=5e-5)

    def test_uniform_on_black(self):
        reg = default_registry()
        pred = reg.predict("toy_region_scorer", gray([[0.0, 0.0], [0.0, 0.0]]))
        np.testing.assert_allclose(pred.class_probs, [0.5, 0.5], atol=1e-12)

    def test_probs_sum_to_one(self):
        reg = default_registry()
        rng = np.random.default_rng(5)
        for _ in range(20):
            img = gray(rng.random((4, 6)))
            pred = reg.predict("toy_region_scorer", img)
            assert abs(pred.class_probs.sum() - 1.0) <= 1e-6

    def test_gradients_unsupported(self):
        reg = default_registry()
        with pytest.raises(GradientsUnsupported):
            reg.activations_and_gradients("toy_region_scorer",
                                          gray([[0.5]]), TargetSpec(class_id=0))


class TestToyIdentityConv:
    def test_analytic_bundle(self):
        reg = default_registry()
        img = gray([[1.0, 0.0], [0.0, 0.0]])
        b = reg.activations_and_gradients("toy_identity_conv", img,
                                          TargetSpec(class_id=0))
        np.testing.assert_array_equal(b.feature_maps[0], [[1, 0], [0, 0]])
        np.testing.assert_array_equal(b.gradients[0], np.ones((2, 2)))

    def test_dead_path_gradients_are_zero(self):
        reg = default_registry()
        b = reg.activations_and_gradients("toy_identity_conv",
                                          gray([[0.5, 0.5], [0.5, 0.5]]),
                                          TargetSpec(class_id=2))
        np.testing.assert_array_equal(b.gradients[0], np.zeros((2, 2)))

    @pytest.mark.parametrize("class_id", [0, 1, 2])
    def test_finite_difference_check(self, class_id):
        toy = ToyIdentityConv()
        rng = np.random.default_rng(13)
        img = gray(0.2 + 0.6 * rng.random((3, 3)))
        target = TargetSpec(class_id=class_id)
        bundle = toy.activations_and_gradients(img, target)
        fd = finite_difference(lambda im: toy.scalar_target(im, target), img)
        assert np.abs(bundle.gradients[0] - fd).max() <= 1e-3


class TestToyBoxDetector:
    def test_box_on_brightest_pixel(self):
        reg = default_registry()
        img = gray([[0.1, 0.2], [0.9, 0.1]])
        pred = reg.predict("toy_box_detector", img)
        det = pred.detections[0]
        assert (det.box.x_min, det.box.y_min, det.box.x_max, det.box.y_max) \
            == (0.0, 1.0, 1.0, 2.0)
        assert det.objectness == pytest.approx(0.9)

    def test_black_image_yields_no_detections(self):
        reg = default_registry()
        pred = reg.predict("toy_box_detector", gray(np.zeros((2, 2))))
        assert pred.detections == ()

    def test_class_probs_follow_halves(self):
        reg = default_registry()
        img = gray([[0.9, 0.3], [0.9, 0.3]])
        det = reg.predict("toy_box_detector", img).detections[0]
        np.testing.assert_allclose(det.class_probs, [1.8 / 2.4, 0.6 / 2.4],
                                   atol=1e-12)


class TestToyThresholdSegmenter:
    def test_label_map(self):
        reg = default_registry()
        pred = reg.predict("toy_threshold_segmenter",
                           gray([[0.9, 0.2], [0.6, 0.4]]))
        np.testing.assert_array_equal(pred.label_map, [[1, 0], [1, 0]])

    def test_prob_map_matches_brightness(self):
        toy = ToyThresholdSegmenter()
        img = gray([[0.9, 0.2]])
        probs = toy.class_prob_map(img)
        np.testing.assert_allclose(probs[..., 1], [[0.9, 0.2]], atol=1e-12)
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-12)

    @pytest.mark.parametrize("class_id", [0, 1])
    def test_finite_difference_check(self, class_id):
        toy = ToyThresholdSegmenter()
        # keep every pixel clear of the 0.5 decision boundary
        img = gray([[0.9, 0.2], [0.7, 0.3]])
        target = TargetSpec(class_id=class_id)
        bundle = toy.activations_and_gradients(img, target)
        fd = finite_difference(lambda im: toy.scalar_target(im, target), img)
        assert np.abs(bundle.gradients[0] - fd).max() <= 1e-3


class ManifestToy:
    """Constructor-takes-config adapter used by the manifest plugin test."""

    def __init__(self, config):
        self.config = config
        self.descriptor = ModelDescriptor(
            model_id=config.get("model_id", "manifest_toy"),
            task=TaskKind.CLASSIFICATION,
            label_set=("a", "b"),
            supports_gradients=False,
            input_size=(4, 4),
        )

    def predict(self, image):
        from explainbench.domain import Prediction
        return Prediction(task=TaskKind.CLASSIFICATION,
                          model_id=self.descriptor.model_id,
                          class_probs=np.array([0.5, 0.5]))


class TestManifestRegistration:
    def test_adapter_loaded_from_manifest(self, tmp_path):
        import json
        from explainbench.model_zoo import register_from_manifest
        manifest = tmp_path / "adapters.json"
        manifest.write_text(json.dumps({"adapters": [{
            "model_id": "manifest_toy",
            "task": "classification",
            "entry_point": f"{__name__}:ManifestToy",
            "config": {"model_id": "manifest_toy", "device": "cpu"},
        }]}))
        reg = ModelRegistry()
        ids = register_from_manifest(reg, manifest)
        assert ids == ["manifest_toy"]
        pred = reg.predict("manifest_toy", gray([[0.5]]))
        assert pred.model_id == "manifest_toy"

    def test_descriptor_mismatch_rejected(self, tmp_path):
        import json
        from explainbench.errors import TargetInvalid
        from explainbench.model_zoo import register_from_manifest
        manifest = tmp_path / "adapters.json"
        manifest.write_text(json.dumps({"adapters": [{
            "model_id": "other_name",
            "task": "classification",
            "entry_point": f"{__name__}:ManifestToy",
            "config": {"model_id": "manifest_toy"},
        }]}))
        with pytest.raises(TargetInvalid):
            register_from_manifest(ModelRegistry(), manifest)


class TestSerializedAccess:
    def test_unsafe_adapter_runs_serialized(self):
        active = []
        overlaps = []

        class Slow:
            descriptor = ModelDescriptor(
                "slow", TaskKind.CLASSIFICATION, ("a", "b"), False, (1, 1),
                concurrency_safe=False)

            def predict(self, image):
                from explainbench.domain import Prediction
                active.append(1)
                overlaps.append(len(active))
                import time
                time.sleep(0.005)
                active.pop()
                return Prediction(task=TaskKind.CLASSIFICATION, model_id="slow",
                                  class_probs=np.array([0.5, 0.5]))

        reg = ModelRegistry()
        s = Slow()
        reg.register_model(s.descriptor, s)
        img = gray([[0.5]])
        threads = [threading.Thread(target=reg.predict, args=("slow", img))
                   for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert max(overlaps) == 1
