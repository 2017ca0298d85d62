import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from ugseg import pipeline
from ugseg.core import RefineConfig
from ugseg.metrics import dice
from ugseg.service import create_app, decode_bundle, encode_bundle
from ugseg.uncertainty import fuse_predictions


@pytest.fixture(scope="module")
def synth():
    return pipeline.generate_synthetic_stack(pipeline.SynthSpec(), seed=3)


@pytest.fixture()
def client():
    return TestClient(create_app())


def _upload_files(stack, probgroup):
    def header(kind, dims, dtype, spacing=None):
        h = {"magic": "UGSTACK1", "kind": kind, "dims": dims, "dtype": dtype}
        if spacing:
            h["spacing"] = spacing
        return json.dumps(h).encode()

    return {
        "stack_header": ("stack.json", header("stack", list(stack.data.shape), "f32",
                                              [stack.slice_spacing, *stack.pixel_spacing])),
        "stack_raw": ("stack.raw", stack.data.astype("<f4").tobytes()),
        "probs_header": ("probs.json", header("probgroup", list(probgroup.data.shape), "f32")),
        "probs_raw": ("probs.raw", probgroup.data.astype("<f4").tobytes()),
    }


def _create(client, synth, config=None):
    resp = client.post("/sessions", files=_upload_files(synth.stack, synth.probgroup),
                       data={"config": json.dumps(config or {})})
    assert resp.status_code == 200, resp.text
    return resp.json()


def test_bundle_roundtrip():
    arrays = {"a": np.arange(12, dtype=np.float32).reshape(3, 4),
              "b": np.ones((2, 2), dtype=np.uint8)}
    data = encode_bundle(arrays, {"k": 1})
    back, meta = decode_bundle(data)
    assert meta == {"k": 1}
    assert np.array_equal(back["a"], arrays["a"])
    assert np.array_equal(back["b"], arrays["b"])


def test_create_session_summary(client, synth):
    out = _create(client, synth)
    assert out["num_slices"] == 10
    assert out["cutoff"] == 6
    assert len(out["queue"]) == 10


def test_distinct_session_ids(client, synth):
    a = _create(client, synth)
    b = _create(client, synth)
    assert a["id"] != b["id"]


def test_dims_mismatch_rejected(client, synth):
    files = _upload_files(synth.stack, synth.probgroup)
    # truncate probgroup payload dims to force a spatial mismatch
    bad_header = json.loads(files["probs_header"][1])
    bad_header["dims"][2] = 32
    files["probs_header"] = ("probs.json", json.dumps(bad_header).encode())
    resp = client.post("/sessions", files=files, data={"config": "{}"})
    assert resp.status_code == 400


def test_unknown_session(client):
    assert client.get("/sessions/deadbeef").status_code == 404
    assert client.post("/sessions/deadbeef/advance").status_code == 404


def test_slice_bundle(client, synth):
    sid = _create(client, synth)["id"]
    head = client.post(f"/sessions/{sid}/advance").json()
    k = head["next"]
    resp = client.get(f"/sessions/{sid}/slices/{k}")
    assert resp.status_code == 200
    arrays, meta = decode_bundle(resp.content)
    assert meta["slice"] == k
    assert meta["score"] == pytest.approx(head["score"])
    assert arrays["image_u8"].dtype == np.uint8
    # quantization error within 1/255 of the intensity range
    lo, hi = meta["intensity_range"]
    recon = arrays["image_u8"] / 255.0 * (hi - lo) + lo
    assert np.abs(recon - synth.stack.data[k]).max() <= (hi - lo) / 255.0 + 1e-6
    assert client.get(f"/sessions/{sid}/slices/999").status_code == 404


def test_scribble_flow_and_projection(client, synth):
    sid = _create(client, synth)["id"]
    k = client.post(f"/sessions/{sid}/advance").json()["next"]
    scribbles = pipeline.simulate_scribbles(
        fuse_predictions(synth.probgroup).mask.data[k], synth.gt.data[k], k)
    assert scribbles.strokes  # queue head is a corrupted slice
    resp = client.post(f"/sessions/{sid}/slices/{k}/scribbles", json=scribbles.to_json())
    assert resp.status_code == 200
    arrays, meta = decode_bundle(resp.content)
    assert meta["edited"] is True
    # returned mask contains all foreground scribble pixels
    from ugseg.core import rasterize_scribbles
    fg, bg = rasterize_scribbles(scribbles, 64, 64)
    assert arrays["mask"][fg].all()
    assert not arrays["mask"][bg].any()


def test_empty_scribbles_leaves_mask(client, synth):
    sid = _create(client, synth)["id"]
    k = client.post(f"/sessions/{sid}/advance").json()["next"]
    initial = fuse_predictions(synth.probgroup).mask.data[k]
    resp = client.post(f"/sessions/{sid}/slices/{k}/scribbles",
                       json={"slice": k, "strokes": []})
    arrays, meta = decode_bundle(resp.content)
    assert meta["edited"] is False
    assert np.array_equal(arrays["mask"], initial)


def test_submission_requires_current_slice(client, synth):
    sid = _create(client, synth)["id"]
    client.post(f"/sessions/{sid}/advance")
    resp = client.post(f"/sessions/{sid}/slices/9/scribbles",
                       json={"slice": 9, "strokes": []})
    assert resp.status_code == 409


def test_full_session_early_stop_and_export(client, synth):
    sid = _create(client, synth)["id"]
    fetched = []
    while True:
        step = client.post(f"/sessions/{sid}/advance").json()
        if step["done"]:
            break
        k = step["next"]
        fetched.append(k)
        scribbles = pipeline.simulate_scribbles(
            decode_bundle(client.get(f"/sessions/{sid}/slices/{k}").content)[0]["mask"],
            synth.gt.data[k], k)
        client.post(f"/sessions/{sid}/slices/{k}/scribbles", json=scribbles.to_json())
    assert len(fetched) <= 6
    assert len(set(fetched)) == len(fetched)
    state = client.get(f"/sessions/{sid}").json()
    assert state["state"] == "finished"
    # finished sessions refuse slice bundles
    assert client.get(f"/sessions/{sid}/slices/0").status_code == 409

    export = client.get(f"/sessions/{sid}/export")
    arrays, meta = decode_bundle(export.content)
    final_mask = arrays["mask"]
    # log replay reproduces the exported mask bit-exactly
    log = pipeline.SessionLog.from_json(meta["log"])
    replayed = pipeline.replay_session(synth.stack, synth.probgroup, log)
    assert np.array_equal(replayed.data, final_mask)
    assert dice(final_mask, synth.gt.data) > dice(
        fuse_predictions(synth.probgroup).mask.data, synth.gt.data)


def test_untouched_export_equals_initial(client, synth):
    sid = _create(client, synth)["id"]
    arrays, _ = decode_bundle(client.get(f"/sessions/{sid}/export").content)
    assert np.array_equal(arrays["mask"], fuse_predictions(synth.probgroup).mask.data)


def test_persistence_write_through(tmp_path, synth):
    client = TestClient(create_app(data_dir=tmp_path))
    sid = _create(client, synth)["id"]
    k = client.post(f"/sessions/{sid}/advance").json()["next"]
    scribbles = pipeline.simulate_scribbles(
        fuse_predictions(synth.probgroup).mask.data[k], synth.gt.data[k], k)
    client.post(f"/sessions/{sid}/slices/{k}/scribbles", json=scribbles.to_json())
    d = tmp_path / sid
    assert (d / "stack.json").exists() and (d / "probs.raw").exists()
    assert (d / "mask.raw").exists() and (d / "log.json").exists()
