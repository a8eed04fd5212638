import json

import numpy as np
import pytest

from scenelift.errors import (
    DanglingTrackRef,
    MissingFile,
    NonPositiveScale,
    NoValidPixels,
    ShapeMismatch,
)
from scenelift.ingest import (
    Frame,
    FrameSet,
    estimate_scene_scale,
    load_frameset,
    rescale_frameset,
)
from scenelift.vipt import write_tensor

from _oracles import median_sorted


def make_frame(fid, mono, recon, valid=None):
    mono = np.asarray(mono, dtype=np.float64)
    recon = np.asarray(recon, dtype=np.float64)
    if valid is None:
        valid = np.full(mono.shape, 255, dtype=np.uint8)
    h, w = mono.shape
    pm = np.zeros((h, w, 3))
    pm[..., 2] = recon
    return Frame(fid, pm, valid, mono, recon)


class TestEstimateScale:
    def test_matches_median_oracle(self, rng):
        frames = []
        all_ratios = []
        for i in range(3):
            recon = rng.uniform(0.5, 4.0, size=(6, 7))
            ratios = rng.uniform(0.8, 3.5, size=(6, 7))
            frames.append(make_frame(f"f{i}", recon * ratios, recon))
            all_ratios.extend(ratios.ravel().tolist())
        got = estimate_scene_scale(FrameSet(frames=frames, tracks={}))
        assert got == pytest.approx(median_sorted(all_ratios), abs=1e-12)

    def test_invalid_pixels_excluded(self):
        recon = np.ones((4, 4))
        mono = np.full((4, 4), 2.0)
        mono[0, 0] = 1e9  # would wreck the median if counted
        valid = np.full((4, 4), 255, dtype=np.uint8)
        valid[0, 0] = 0
        fs = FrameSet(frames=[make_frame("f0", mono, recon, valid)], tracks={})
        assert estimate_scene_scale(fs) == pytest.approx(2.0, abs=1e-12)

    def test_tiny_recon_depth_excluded(self):
        recon = np.full((4, 4), 2.0)
        mono = np.full((4, 4), 3.0)
        recon[1, 1] = 1e-5  # at or below the depth gate
        recon[2, 2] = 0.0
        fs = FrameSet(frames=[make_frame("f0", mono, recon)], tracks={})
        assert estimate_scene_scale(fs) == pytest.approx(1.5, abs=1e-12)

    def test_pools_across_frames(self):
        # Medians per frame are 1 and 3; the pooled median is 2.
        f0 = make_frame("f0", np.full((1, 3), 1.0), np.ones((1, 3)))
        f1 = make_frame("f1", np.full((1, 3), 3.0), np.ones((1, 3)))
        f2 = make_frame("f2", np.full((1, 2), 2.0), np.ones((1, 2)))
        fs = FrameSet(frames=[f0, f1, f2], tracks={})
        assert estimate_scene_scale(fs) == pytest.approx(2.0, abs=1e-12)

    def test_exact_with_outlier_minority(self, rng):
        for planted in (0.5, 2.5, 7.0):
            recon = rng.uniform(0.5, 4.0, size=(20, 20))
            mono = recon * planted
            flat = mono.reshape(-1)
            idx = rng.choice(flat.size, size=flat.size // 100, replace=False)
            flat[idx] *= rng.uniform(3.0, 10.0, size=idx.size)
            fs = FrameSet(frames=[make_frame("f0", mono, recon)], tracks={})
            assert estimate_scene_scale(fs) == pytest.approx(planted, abs=1e-9)

    def test_no_valid_pixels(self):
        valid = np.zeros((3, 3), dtype=np.uint8)
        fs = FrameSet(
            frames=[make_frame("f0", np.ones((3, 3)), np.ones((3, 3)), valid)],
            tracks={},
        )
        with pytest.raises(NoValidPixels):
            estimate_scene_scale(fs)


class TestRescale:
    def test_scales_points_and_recon_only(self, rng):
        recon = rng.uniform(1.0, 2.0, size=(4, 4))
        fs = FrameSet(frames=[make_frame("f0", recon * 2.0, recon)], tracks={})
        out = rescale_frameset(fs, 2.0)
        assert np.allclose(out.frames[0].point_map, fs.frames[0].point_map * 2.0)
        assert np.allclose(out.frames[0].recon_depth, recon * 2.0)
        assert np.array_equal(out.frames[0].mono_depth, fs.frames[0].mono_depth)
        # Rescaling by the estimated factor drives the ratio to 1.
        assert estimate_scene_scale(out) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("bad", [0.0, -1.0])
    def test_rejects_non_positive(self, bad):
        fs = FrameSet(frames=[make_frame("f0", np.ones((2, 2)), np.ones((2, 2)))], tracks={})
        with pytest.raises(NonPositiveScale):
            rescale_frameset(fs, bad)


def write_tiny_set(root, *, schema_version=1, frames=2, track_frame="f0", break_mask=False):
    """Minimal on-disk frameset: 8x8 frames, one track on one frame."""
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(frames):
        fid = f"f{i}"
        pm = np.zeros((8, 8, 3), dtype=np.float32)
        pm[..., 2] = i + 1.0
        write_tensor(root / f"{fid}_pm.vipt", pm)
        write_tensor(root / f"{fid}_valid.vipt", np.full((8, 8), 255, dtype=np.uint8))
        write_tensor(root / f"{fid}_mono.vipt", np.full((8, 8), 2.0, dtype=np.float32))
        write_tensor(root / f"{fid}_recon.vipt", np.ones((8, 8), dtype=np.float32))
        entries.append(
            {
                "frame_id": fid,
                "point_map": f"{fid}_pm.vipt",
                "valid_mask": f"{fid}_valid.vipt",
                "mono_depth": f"{fid}_mono.vipt",
                "recon_depth": f"{fid}_recon.vipt",
            }
        )
    mask = np.zeros((8, 8), dtype=np.uint8)
    mask[2:6, 2:6] = 255
    write_tensor(root / "m.vipt", mask)
    manifest = {
        "schema_version": schema_version,
        "fps": 2.0,
        "description": "tiny",
        "room_polygon": [[0.0, 0.0], [4.0, 0.0], [4.0, 3.0], [0.0, 3.0]],
        "frames": entries,
        "tracks": {
            "obj_a": {
                "category": "table",
                "masks": {track_frame: "missing.vipt" if break_mask else "m.vipt"},
            }
        },
    }
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest), encoding="utf-8")
    return path


class TestLoadFrameset:
    def test_loads_tiny_set(self, tmp_path):
        fs = load_frameset(write_tiny_set(tmp_path / "s"))
        assert fs.frame_ids == ["f0", "f1"]
        assert fs.fps == 2.0
        assert fs.description == "tiny"
        assert fs.room_polygon.shape == (4, 2)
        assert set(fs.tracks) == {"obj_a"}
        assert fs.tracks["obj_a"].category == "table"
        assert fs.frame("f1").point_map[0, 0, 2] == pytest.approx(2.0)
        with pytest.raises(KeyError):
            fs.frame("f9")

    def test_loads_room_fixture(self, room_dir):
        fs = load_frameset(room_dir / "manifest.json")
        assert len(fs.frames) >= 2
        assert "obj_floor" in fs.tracks
        assert estimate_scene_scale(fs) == pytest.approx(2.5, abs=1e-9)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(MissingFile):
            load_frameset(tmp_path / "nope.json")

    def test_bad_schema_version(self, tmp_path):
        path = write_tiny_set(tmp_path / "s", schema_version=2)
        with pytest.raises(ShapeMismatch):
            load_frameset(path)

    def test_missing_tensor(self, tmp_path):
        path = write_tiny_set(tmp_path / "s")
        (tmp_path / "s" / "f0_pm.vipt").unlink()
        with pytest.raises(MissingFile):
            load_frameset(path)

    def test_bad_point_map_shape(self, tmp_path):
        path = write_tiny_set(tmp_path / "s")
        write_tensor(tmp_path / "s" / "f0_pm.vipt", np.zeros((8, 8), dtype=np.float32))
        with pytest.raises(ShapeMismatch):
            load_frameset(path)

    def test_mismatched_depth_shape(self, tmp_path):
        path = write_tiny_set(tmp_path / "s")
        write_tensor(tmp_path / "s" / "f0_mono.vipt", np.ones((4, 4), dtype=np.float32))
        with pytest.raises(ShapeMismatch):
            load_frameset(path)

    def test_frames_must_share_shape(self, tmp_path):
        path = write_tiny_set(tmp_path / "s")
        pm = np.zeros((6, 6, 3), dtype=np.float32)
        root = tmp_path / "s"
        write_tensor(root / "f1_pm.vipt", pm)
        write_tensor(root / "f1_valid.vipt", np.full((6, 6), 255, dtype=np.uint8))
        write_tensor(root / "f1_mono.vipt", np.ones((6, 6), dtype=np.float32))
        write_tensor(root / "f1_recon.vipt", np.ones((6, 6), dtype=np.float32))
        with pytest.raises(ShapeMismatch):
            load_frameset(path)

    def test_no_frames(self, tmp_path):
        root = tmp_path / "s"
        root.mkdir()
        path = root / "manifest.json"
        path.write_text(json.dumps({"schema_version": 1, "frames": [], "tracks": {}}))
        with pytest.raises(ShapeMismatch):
            load_frameset(path)

    def test_dangling_frame_ref(self, tmp_path):
        path = write_tiny_set(tmp_path / "s", track_frame="f7")
        with pytest.raises(DanglingTrackRef):
            load_frameset(path)

    def test_missing_mask_file(self, tmp_path):
        path = write_tiny_set(tmp_path / "s", break_mask=True)
        with pytest.raises(DanglingTrackRef):
            load_frameset(path)

    def test_bad_mask_shape(self, tmp_path):
        path = write_tiny_set(tmp_path / "s")
        write_tensor(tmp_path / "s" / "m.vipt", np.zeros((3, 3), dtype=np.uint8))
        with pytest.raises(ShapeMismatch):
            load_frameset(path)
