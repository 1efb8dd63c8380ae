import json
import logging
import struct

import numpy as np
import pytest

from clothdet import (
    Detection,
    FormatError,
    GroundTruthItem,
    Scene,
    SynthParams,
    new_head_tensors,
    read_detections,
    read_scenes,
    read_tensors,
    synth_scenes,
    write_detections,
    write_scenes,
    write_tensors,
)
from clothdet.heads import TENSOR_NAMES


def random_tensor_set(seed=0, height=12, width=20, stride=4):
    rng = np.random.default_rng(seed)
    tensors = new_head_tensors(height, width, stride)
    for grid in tensors.named().values():
        grid[:] = rng.standard_normal(grid.shape, dtype=np.float32)
    return tensors


def craft_container(entries, payload, version=1, stride=4, magic=b"DMRK"):
    blob = bytearray(magic)
    blob += struct.pack("<III", version, stride, len(entries))
    for name, (c, h, w), offset in entries:
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded)) + encoded
        blob += struct.pack("<IIIQ", c, h, w, offset)
    blob += struct.pack("<Q", len(payload))
    blob += payload
    return bytes(blob)


def grid_shape(name, height, width):
    tensors = new_head_tensors(height, width, 4)
    return tensors.named()[name].shape


class TestContainer:
    def test_roundtrip_bit_exact(self, tmp_path):
        tensors = random_tensor_set(seed=3, stride=8)
        path = tmp_path / "t.dmrk"
        write_tensors(path, tensors)
        loaded = read_tensors(path)
        assert loaded.stride == 8
        for name, grid in tensors.named().items():
            got = loaded.named()[name]
            assert got.dtype == np.float32
            np.testing.assert_array_equal(got, grid, err_msg=name)

    def test_double_roundtrip_identical_bytes(self, tmp_path):
        tensors = random_tensor_set(seed=4)
        a, b = tmp_path / "a.dmrk", tmp_path / "b.dmrk"
        write_tensors(a, tensors)
        write_tensors(b, read_tensors(a))
        assert a.read_bytes() == b.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "t.dmrk"
        path.write_bytes(b"JUNKxxxxxxxxxxxxxxxx")
        with pytest.raises(FormatError, match="bad magic"):
            read_tensors(path)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "t.dmrk"
        path.write_bytes(craft_container([], b"", version=2))
        with pytest.raises(FormatError, match="unsupported container version 2"):
            read_tensors(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "t.dmrk"
        path.write_bytes(b"DMRK\x01\x00")
        with pytest.raises(FormatError, match="truncated header at byte 4"):
            read_tensors(path)

    def test_truncated_payload_names_sizes(self, tmp_path):
        tensors = random_tensor_set(seed=5, height=8, width=8)
        path = tmp_path / "t.dmrk"
        write_tensors(path, tensors)
        expected = sum(grid.nbytes for grid in tensors.named().values())
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(FormatError, match=f"truncated payload: expected {expected} bytes, got {expected - 10}"):
            read_tensors(path)

    def test_duplicate_directory_entry(self, tmp_path):
        entries = [("center", (1, 2, 2), 0), ("center", (1, 2, 2), 16)]
        path = tmp_path / "t.dmrk"
        path.write_bytes(craft_container(entries, bytes(32)))
        with pytest.raises(FormatError, match="duplicate directory entry 'center'"):
            read_tensors(path)

    def test_overlapping_entries(self, tmp_path):
        entries = [("center", (1, 2, 2), 0), ("wh", (1, 2, 2), 8)]
        path = tmp_path / "t.dmrk"
        path.write_bytes(craft_container(entries, bytes(24)))
        with pytest.raises(FormatError, match="'center' and 'wh' overlap"):
            read_tensors(path)

    def test_entry_past_payload(self, tmp_path):
        entries = [("center", (1, 2, 2), 0)]
        path = tmp_path / "t.dmrk"
        path.write_bytes(craft_container(entries, bytes(8)))
        with pytest.raises(FormatError, match="'center' ends at byte 16, past payload size 8"):
            read_tensors(path)

    def test_missing_tensors(self, tmp_path):
        height = width = 4
        entries = []
        offset = 0
        for name in TENSOR_NAMES:
            if name == "kp_refine_offset":
                continue
            shape = grid_shape(name, height, width)
            entries.append((name, shape, offset))
            offset += 4 * int(np.prod(shape))
        path = tmp_path / "t.dmrk"
        path.write_bytes(craft_container(entries, bytes(offset)))
        with pytest.raises(FormatError, match=r"missing tensors \['kp_refine_offset'\]"):
            read_tensors(path)


class TestScenesJson:
    def test_roundtrip(self, tmp_path, table):
        scenes = synth_scenes(SynthParams(seed=7, num_images=5, occlusion_prob=0.3, unlabeled_prob=0.1), table)
        path = tmp_path / "scenes.json"
        write_scenes(path, scenes)
        loaded = read_scenes(path, table)
        assert [s.image_id for s in loaded] == [s.image_id for s in sorted(scenes, key=lambda s: s.image_id)]
        by_id = {s.image_id: s for s in scenes}
        for scene in loaded:
            orig = by_id[scene.image_id]
            assert (scene.width, scene.height) == (orig.width, orig.height)
            assert len(scene.items) == len(orig.items)
            for a, b in zip(scene.items, orig.items):
                assert a.category_id == b.category_id
                np.testing.assert_array_equal(a.box, b.box)
                np.testing.assert_array_equal(a.landmarks, b.landmarks)

    def test_clamps_and_warns(self, tmp_path, table, caplog):
        item = GroundTruthItem(
            1,
            np.array([10.0, 10.0, 200.0, 50.0]),
            np.column_stack((np.linspace(11, 199, 25), np.full(25, 20.0), np.full(25, 2.0))),
        )
        scene = Scene("img-0", 128, 128, (item,))
        path = tmp_path / "scenes.json"
        write_scenes(path, [scene])
        with caplog.at_level(logging.WARNING, logger="clothdet.fileio"):
            loaded = read_scenes(path, table)
        assert "clamped out-of-bounds coordinates on 1 items" in caplog.text
        assert loaded[0].items[0].box[2] == 128.0
        assert loaded[0].items[0].landmarks[:, 0].max() == 128.0

    def test_invalid_json(self, tmp_path, table):
        path = tmp_path / "scenes.json"
        path.write_text("{nope")
        with pytest.raises(FormatError, match="not valid JSON"):
            read_scenes(path, table)

    def test_missing_key_names_path(self, tmp_path, table):
        path = tmp_path / "scenes.json"
        path.write_text(json.dumps({"images": [{"image_id": "a", "height": 64, "items": []}]}))
        with pytest.raises(FormatError, match=r"images\[0\]\.width is missing"):
            read_scenes(path, table)

    def test_bad_landmark_arity(self, tmp_path, table):
        doc = {"images": [{"image_id": "a", "width": 64, "height": 64, "items": [
            {"category_id": 1, "bbox": [0, 0, 10, 10], "landmarks": [1.0, 2.0]},
        ]}]}
        path = tmp_path / "scenes.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match=r"images\[0\]\.items\[0\]\.landmarks .* multiple of 3"):
            read_scenes(path, table)

    def test_validation_propagates(self, tmp_path, table):
        doc = {"images": [{"image_id": "a", "width": 64, "height": 64, "items": [
            {"category_id": 1, "bbox": [0, 0, 10, 10], "landmarks": [1.0, 2.0, 2.0] * 24},
        ]}]}
        path = tmp_path / "scenes.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="25 landmarks"):
            read_scenes(path, table)

    def test_non_numeric_bbox(self, tmp_path, table):
        doc = {"images": [{"image_id": "a", "width": 64, "height": 64, "items": [
            {"category_id": 1, "bbox": [0, 0, "ten", 10], "landmarks": []},
        ]}]}
        path = tmp_path / "scenes.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match=r"bbox\[2\] is not a number"):
            read_scenes(path, table)


class TestDetectionsJson:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        dets = {
            "img-b": [
                Detection(3, 0.75, np.array([1.5, 2.5, 30.0, 40.0]),
                          rng.random((31, 3))),
            ],
            "img-a": [
                Detection(1, 0.5, np.array([0.0, 0.0, 10.0, 10.0]), np.empty((0, 3))),
                Detection(2, 0.25, np.array([5.0, 5.0, 25.0, 35.0]), rng.random((33, 3))),
            ],
        }
        path = tmp_path / "dets.json"
        write_detections(path, dets)
        loaded = read_detections(path)
        assert set(loaded) == set(dets)
        for image_id, rows in dets.items():
            assert len(loaded[image_id]) == len(rows)
            for a, b in zip(loaded[image_id], rows):
                assert (a.category_id, a.score) == (b.category_id, b.score)
                np.testing.assert_array_equal(a.box, b.box)
                np.testing.assert_array_equal(a.landmarks, b.landmarks)

    def test_missing_score_names_path(self, tmp_path):
        doc = {"detections": [{"image_id": "a", "category_id": 1, "bbox": [0, 0, 1, 1], "landmarks": []}]}
        path = tmp_path / "dets.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match=r"detections\[0\]\.score is missing"):
            read_detections(path)

    @pytest.mark.parametrize("score", [-0.1, 1.5, True, "high"])
    def test_bad_scores_rejected(self, tmp_path, score):
        doc = {"detections": [{"image_id": "a", "category_id": 1, "score": score,
                               "bbox": [0, 0, 1, 1], "landmarks": []}]}
        path = tmp_path / "dets.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match=r"score must be a number in \[0, 1\]"):
            read_detections(path)

    def test_bad_bbox_arity(self, tmp_path):
        doc = {"detections": [{"image_id": "a", "category_id": 1, "score": 0.5,
                               "bbox": [0, 0, 1], "landmarks": []}]}
        path = tmp_path / "dets.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match="multiple of 4"):
            read_detections(path)

    def test_landmarks_optional(self, tmp_path):
        doc = {"detections": [{"image_id": "a", "category_id": 1, "score": 0.5, "bbox": [0, 0, 1, 1]}]}
        path = tmp_path / "dets.json"
        path.write_text(json.dumps(doc))
        loaded = read_detections(path)
        assert loaded["a"][0].landmarks.shape == (0, 3)

    def test_not_a_list(self, tmp_path):
        path = tmp_path / "dets.json"
        path.write_text(json.dumps({"detections": 7}))
        with pytest.raises(FormatError, match="'detections' list"):
            read_detections(path)
