"""Reprojection tests: pixel support and EPC labeling of per-frame masks."""

import numpy as np
import pytest

from rflabel.errors import InputError
from rflabel.geometry import InstanceMaskFrame, PointCloud
from rflabel.registration import RegisteredInstance, SceneMap
from rflabel.reprojection import LabeledMaskFrame, reproject


def blob(center, n=40, scale=0.004, seed=0):
    rng = np.random.default_rng(seed)
    return PointCloud(np.asarray(center) + rng.normal(0, scale, (n, 3)), frame="world")


def scene_with(clouds):
    s = SceneMap()
    for i, c in enumerate(clouds, start=1):
        s.instances.append(RegisteredInstance(instance_id=i, cloud=c, frames_seen=10))
    return s


class TestLabeledMaskFrame:
    def test_coverage_invariant(self):
        with pytest.raises(InputError):
            LabeledMaskFrame(0.0, np.array([[0, 3]]), {1: "A"})

    def test_background_needs_no_entry(self):
        LabeledMaskFrame(0.0, np.zeros((2, 2), dtype=np.uint8), {})


class TestReproject:
    def test_labels_pixels_of_matching_observation(self):
        scene = scene_with([blob([0, 0, 0]), blob([1, 0, 0])])
        epcs = {1: "EA", 2: "EB"}
        mask = InstanceMaskFrame(0.0, np.array([[5, 5, 0], [0, 9, 9]], dtype=np.uint8))
        obs = [{5: blob([0, 0, 0], seed=1), 9: blob([1, 0, 0], seed=2)}]
        out = reproject(obs, [mask], scene, epcs, chamfer_threshold=0.02)
        lf = out[0]
        assert lf.label_table == {1: "EA", 2: "EB"}
        assert np.array_equal(lf.pixels, np.array([[1, 1, 0], [0, 2, 2]]))

    def test_distant_observation_stays_background(self):
        scene = scene_with([blob([0, 0, 0])])
        mask = InstanceMaskFrame(0.0, np.array([[7]], dtype=np.uint8))
        obs = [{7: blob([5, 0, 0], seed=3)}]
        out = reproject(obs, [mask], scene, {1: "EA"}, chamfer_threshold=0.02)
        assert out[0].pixels[0, 0] == 0
        assert out[0].label_table == {}

    def test_unlabeled_instances_never_used(self):
        # instance 2 got no tag: observations near it stay background
        scene = scene_with([blob([0, 0, 0]), blob([1, 0, 0])])
        mask = InstanceMaskFrame(0.0, np.array([[4]], dtype=np.uint8))
        obs = [{4: blob([1, 0, 0], seed=4)}]
        out = reproject(obs, [mask], scene, {1: "EA"}, chamfer_threshold=0.02)
        assert out[0].pixels[0, 0] == 0

    def test_empty_observation_skipped(self):
        scene = scene_with([blob([0, 0, 0])])
        mask = InstanceMaskFrame(0.0, np.array([[3]], dtype=np.uint8))
        obs = [{3: PointCloud(np.zeros((0, 3)), frame="world")}]
        out = reproject(obs, [mask], scene, {1: "EA"}, chamfer_threshold=0.02)
        assert out[0].pixels[0, 0] == 0

    def test_no_labeled_instances_rejected(self):
        scene = scene_with([blob([0, 0, 0])])
        with pytest.raises(InputError):
            reproject([], [], scene, {}, chamfer_threshold=0.02)
