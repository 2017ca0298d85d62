import json

import numpy as np
import pytest

from ugseg.core import (
    BinaryMask,
    FormatError,
    ProbabilityGroup,
    RefineConfig,
    ScribbleSet,
    Stack,
    Stroke,
    normalize_slice,
    rasterize_scribbles,
    read_stack,
    read_ugstack,
    write_stack,
    write_ugstack,
)


def test_stack_size_arithmetic(tmp_path):
    stack = Stack(np.arange(3 * 4 * 5, dtype=np.float32).reshape(3, 4, 5))
    write_stack(stack, tmp_path / "s")
    header = json.loads((tmp_path / "s.json").read_text())
    assert header["dims"] == [3, 4, 5]
    assert (tmp_path / "s.raw").stat().st_size == 3 * 4 * 5 * 4


def test_probgroup_payload_size(tmp_path):
    pg = ProbabilityGroup(np.random.default_rng(0).random((4, 3, 4, 5)).astype(np.float32))
    write_stack(pg, tmp_path / "p")
    assert (tmp_path / "p.raw").stat().st_size == 4 * 3 * 4 * 5 * 4


def test_mask_payload_size(tmp_path):
    mask = BinaryMask(np.zeros((3, 4, 5), dtype=np.uint8))
    write_stack(mask, tmp_path / "m")
    assert (tmp_path / "m.raw").stat().st_size == 60


def test_truncated_payload_rejected(tmp_path):
    stack = Stack(np.zeros((3, 4, 5), dtype=np.float32))
    write_stack(stack, tmp_path / "s")
    raw = (tmp_path / "s.raw").read_bytes()
    (tmp_path / "s.raw").write_bytes(raw[:-1])
    with pytest.raises(FormatError, match="payload size mismatch"):
        read_stack(tmp_path / "s")


def test_missing_file_rejected(tmp_path):
    with pytest.raises(FormatError, match="missing"):
        read_stack(tmp_path / "nope")


def test_nonfinite_rejected(tmp_path):
    arr = np.zeros((2, 2, 2), dtype="<f4")
    arr[0, 0, 0] = np.nan
    (tmp_path / "s.json").write_text(json.dumps(
        {"magic": "UGSTACK1", "kind": "stack", "dims": [2, 2, 2], "dtype": "f32"}))
    (tmp_path / "s.raw").write_bytes(arr.tobytes())
    with pytest.raises(FormatError, match="non-finite"):
        read_stack(tmp_path / "s")


def test_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    for trial in range(10):
        data = rng.normal(size=(3, 8, 9)).astype(np.float32)
        write_stack(Stack(data), tmp_path / f"s{trial}")
        back = read_stack(tmp_path / f"s{trial}")
        assert back.data.tobytes() == data.tobytes()


def test_roundtrip_spacing(tmp_path):
    stack = Stack(np.zeros((2, 3, 3), dtype=np.float32),
                  pixel_spacing=(0.74, 0.74), slice_spacing=3.5)
    write_stack(stack, tmp_path / "s")
    back = read_stack(tmp_path / "s")
    assert back.pixel_spacing == (0.74, 0.74)
    assert back.slice_spacing == 3.5


def test_uncertainty_kind_roundtrip(tmp_path):
    var = np.random.default_rng(1).random((2, 4, 4)).astype(np.float32) * 0.25
    write_ugstack(var, tmp_path / "u", "uncertainty", "f32")
    arr, header = read_ugstack(tmp_path / "u")
    assert header["kind"] == "uncertainty"
    assert arr.tobytes() == var.tobytes()


def test_probgroup_rejects_out_of_range():
    with pytest.raises(ValueError):
        ProbabilityGroup(np.full((2, 1, 2, 2), 1.5))


def test_mask_rejects_other_values():
    with pytest.raises(ValueError):
        BinaryMask(np.full((1, 2, 2), 2))


# --- scribble rasterization


def test_single_point_fg():
    s = ScribbleSet(0, (Stroke("fg", ((3, 4),), 0),))
    fg, bg = rasterize_scribbles(s, 8, 8)
    assert fg.sum() == 1 and fg[3, 4]
    assert not bg.any()


def test_horizontal_line():
    s = ScribbleSet(0, (Stroke("fg", ((2, 2), (2, 6)), 0),))
    fg, _ = rasterize_scribbles(s, 8, 8)
    assert fg.sum() == 5
    assert fg[2, 2:7].all()


def test_later_stroke_wins():
    s = ScribbleSet(0, (
        Stroke("fg", ((2, 2),), 0),
        Stroke("bg", ((2, 2),), 0),
    ))
    fg, bg = rasterize_scribbles(s, 8, 8)
    assert not fg[2, 2] and bg[2, 2]


def test_out_of_bounds_rejects_whole_set():
    s = ScribbleSet(0, (Stroke("fg", ((2, 2), (2, 9)), 0),))
    with pytest.raises(ValueError, match="outside"):
        rasterize_scribbles(s, 8, 8)


def test_rasterization_disjoint_random():
    rng = np.random.default_rng(11)
    for _ in range(20):
        strokes = []
        for _ in range(rng.integers(1, 6)):
            pts = tuple((int(r), int(c)) for r, c in rng.integers(0, 16, size=(rng.integers(1, 5), 2)))
            strokes.append(Stroke(rng.choice(["fg", "bg"]), pts, int(rng.integers(0, 3))))
        fg, bg = rasterize_scribbles(ScribbleSet(0, tuple(strokes)), 16, 16)
        assert not (fg & bg).any()


def test_disk_dilation_within_radius():
    radius = 3
    s = ScribbleSet(0, (Stroke("fg", ((8, 3), (8, 12)), radius),))
    fg, _ = rasterize_scribbles(s, 16, 16)
    line = [(8, c) for c in range(3, 13)]
    for r, c in np.argwhere(fg):
        d = min(np.hypot(r - lr, c - lc) for lr, lc in line)
        assert d <= radius + 0.5


def test_scribble_json_roundtrip():
    s = ScribbleSet(2, (Stroke("bg", ((1, 2), (3, 4)), 1),))
    assert ScribbleSet.from_json(s.to_json()) == s


def test_normalize_slice():
    img = np.array([[1.0, 3.0], [2.0, 5.0]])
    norm = normalize_slice(img)
    assert norm.min() == 0.0 and norm.max() == 1.0
    assert np.allclose(normalize_slice(np.full((3, 3), 4.2)), 0.0)


def test_refine_config_validation():
    with pytest.raises(ValueError):
        RefineConfig(mu=0.5, dt=1.0)
    with pytest.raises(ValueError):
        RefineConfig(threshold=1.0)
    cfg = RefineConfig.from_json({"lambda": 0.7, "dt": 2.0})
    assert cfg.lam == 0.7
    assert cfg.to_json()["lambda"] == 0.7
