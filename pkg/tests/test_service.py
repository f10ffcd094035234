import json

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image as PILImage

from stereocount.asa import AsaParams
from stereocount.manifest import MouseSpec
from stereocount.raster import Rect
from stereocount.synth import SynthParams, bootstrap_asa_verdicts, degrade_params, gen_dataset

CORPUS_PARAMS = SynthParams(width=72, height=72, frame=Rect(20, 20, 52, 52),
                            cell_count=(2, 4), radius=(4.0, 5.5), slices=1,
                            noise_sigma=0.01)
CONFIG = dict(test_mouse_id="t", iterations=2, epochs=1, lr=1e-3, batch_size=8,
              depth=1, base_channels=2, margin=20, min_cell_size=20,
              max_cell_size=400)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc_corpus")
    mice = [MouseSpec("a", 2, 6), MouseSpec("t", 2, 4)]
    manifest = gen_dataset(mice, CORPUS_PARAMS, root, seed=2)
    asa = AsaParams(min_cell_size=20, max_cell_size=400)
    bootstrap_asa_verdicts(manifest, "t", asa, degrade_params(asa, 1.0),
                           degrade_fraction=0.5, seed=3, min_cell_size=20)
    non_test = sorted(i.image_id for i in manifest.items if i.mouse_id != "t")
    verdicts = {image_id: ("accept" if k % 2 == 0 else "reject")
                for k, image_id in enumerate(non_test)}
    verdicts_path = root / "asa_verdicts.json"
    verdicts_path.write_text(json.dumps(verdicts))
    return root, verdicts


@pytest.fixture()
def client(corpus, tmp_path):
    from stereocount.service import create_app

    app = create_app(tmp_path / "runs", lease_seconds=60.0, sync_jobs=True)
    return TestClient(app), corpus[0]


def make_run(client, root, run_id="r1"):
    resp = client.post("/runs", json={
        "manifest_path": str(root / "manifest.json"),
        "asa_verdicts_path": str(root / "asa_verdicts.json"),
        "config": CONFIG,
        "run_id": run_id,
    })
    return resp


def test_create_run_and_errors(client):
    cl, root = client
    resp = make_run(cl, root)
    assert resp.status_code == 201
    body = resp.json()
    assert body["run_id"] == "r1"
    assert body["schema_version"] == 1

    assert make_run(cl, root, "r1").status_code == 409

    bad = cl.post("/runs", json={
        "manifest_path": str(root / "nope.json"),
        "asa_verdicts_path": str(root / "asa_verdicts.json"),
        "config": CONFIG,
        "run_id": "r2",
    })
    assert bad.status_code == 400
    assert "manifest" in bad.json()["error"]

    assert cl.get("/runs/unknown").status_code == 404


def test_queue_phase_guard(client):
    cl, root = client
    make_run(cl, root)
    resp = cl.get("/runs/r1/queue/next")
    assert resp.status_code == 409  # idle, no review in flight


def advance(cl, run_id="r1", **kwargs):
    return cl.post(f"/runs/{run_id}/iterate", json=kwargs or {})


def test_full_review_cycle(client):
    cl, root = client
    make_run(cl, root)

    resp = advance(cl)
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "awaiting-review"
    assert body["queue_remaining"] == 3

    # deterministic queue order: lowest pending image id first
    first = cl.get("/runs/r1/queue/next")
    assert first.status_code == 200
    item = first.json()
    ids = sorted([item["image_id"]])
    assert item["iteration"] == 1
    assert item["edf_url"].endswith(f"{item['image_id']}/edf")

    # a leased item is not handed out twice while the lease holds
    second = cl.get("/runs/r1/queue/next")
    assert second.status_code == 200
    assert second.json()["image_id"] != item["image_id"]

    # decide everything: accept the first, reject the rest as they arrive
    ack = cl.post("/runs/r1/review", json={"image_id": item["image_id"],
                                           "verdict": "accept"})
    assert ack.status_code == 200
    ack = cl.post("/runs/r1/review", json={"image_id": second.json()["image_id"],
                                           "verdict": "reject"})
    assert ack.status_code == 200
    decided = {item["image_id"], second.json()["image_id"]}
    while True:
        nxt = cl.get("/runs/r1/queue/next")
        if nxt.status_code == 204:
            break
        image_id = nxt.json()["image_id"]
        assert image_id not in decided
        decided.add(image_id)
        ack = cl.post("/runs/r1/review", json={"image_id": image_id,
                                               "verdict": "reject"})
        assert ack.status_code == 200

    # idempotent duplicate, conflicting verdict, unknown item
    dup = cl.post("/runs/r1/review", json={"image_id": item["image_id"],
                                           "verdict": "accept"})
    assert dup.status_code == 200 and dup.json().get("idempotent")
    conflict = cl.post("/runs/r1/review", json={"image_id": item["image_id"],
                                                "verdict": "reject"})
    assert conflict.status_code == 409
    missing = cl.post("/runs/r1/review", json={"image_id": "ghost",
                                               "verdict": "accept"})
    assert missing.status_code == 404

    # barrier: completes iteration 1, starts iteration 2
    resp = advance(cl)
    assert resp.status_code == 200
    body = resp.json()
    assert body["iteration"] == 1
    assert len(body["records"]) == 1
    assert body["records"][0]["n_accepted"] == 1

    metrics = cl.get("/runs/r1/metrics").json()
    assert len(metrics["records"]) == 1
    assert metrics["records"][0]["n_accepted"] == 1
    assert metrics["sections"], "per-section counts should be exposed"


def test_advance_pending_guard_and_force(corpus, tmp_path):
    from stereocount.service import create_app

    root, _ = corpus
    runs_dir = tmp_path / "runs"
    cl = TestClient(create_app(runs_dir, sync_jobs=True))
    make_run(cl, root)
    advance(cl)
    nxt = cl.get("/runs/r1/queue/next").json()
    cl.post("/runs/r1/review", json={"image_id": nxt["image_id"],
                                     "verdict": "reject"})

    blocked = advance(cl)
    assert blocked.status_code == 409
    assert "pending" in blocked.json()["error"]

    forced = advance(cl, force=True, start_next=False)
    assert forced.status_code == 200
    body = forced.json()
    assert body["iteration"] == 1
    assert body["records"][0]["n_accepted"] == 0

    # undecided items stayed active with no synthetic verdicts in the log
    lines = [json.loads(l) for l in
             (runs_dir / "r1" / "decisions.jsonl").read_text().splitlines()]
    verdict_lines = [l for l in lines if l["type"] == "verdict"]
    assert len(verdict_lines) == 1
    assert verdict_lines[0]["image_id"] == nxt["image_id"]
    summary = cl.get("/runs/r1").json()
    assert summary["iteration"] == 1


def test_serve_artifacts(client):
    cl, root = client
    make_run(cl, root)
    advance(cl)
    item = cl.get("/runs/r1/queue/next").json()
    image_id = item["image_id"]

    edf = cl.get(f"/runs/r1/images/{image_id}/edf")
    assert edf.status_code == 200
    assert edf.content == (root / "edf" / f"{image_id}.png").read_bytes()

    mask = cl.get(f"/runs/r1/images/{image_id}/mask")
    assert mask.status_code == 200
    import io

    arr = np.asarray(PILImage.open(io.BytesIO(mask.content)))
    assert set(np.unique(arr)) <= {0, 255}

    overlay = cl.get(f"/runs/r1/images/{image_id}/overlay")
    assert overlay.status_code == 200
    rgb = np.asarray(PILImage.open(io.BytesIO(overlay.content)))
    pure_green = ((rgb[..., 0] == 0) & (rgb[..., 1] == 255) & (rgb[..., 2] == 0))
    pure_red = ((rgb[..., 0] == 255) & (rgb[..., 1] == 0) & (rgb[..., 2] == 0))
    assert pure_green.any() and pure_red.any()

    ann = cl.get(f"/runs/r1/images/{image_id}/annotation")
    assert ann.status_code == 200

    assert cl.get(f"/runs/r1/images/{image_id}/bogus").status_code == 404
    assert cl.get("/runs/r1/images/ghost/edf").status_code == 404


def test_crash_recovery_rebuilds_queue(corpus, tmp_path):
    from stereocount.service import create_app

    root, _ = corpus
    runs_dir = tmp_path / "runs"
    app1 = create_app(runs_dir, sync_jobs=True)
    cl1 = TestClient(app1)
    make_run(cl1, root)
    advance(cl1)
    first = cl1.get("/runs/r1/queue/next").json()
    cl1.post("/runs/r1/review", json={"image_id": first["image_id"],
                                      "verdict": "accept"})
    before = cl1.get("/runs/r1").json()

    # simulate a crash: brand new process state over the same directory
    app2 = create_app(runs_dir, sync_jobs=True)
    cl2 = TestClient(app2)
    after = cl2.get("/runs/r1").json()
    assert after["status"] == "awaiting-review"
    assert after["queue_remaining"] == before["queue_remaining"]

    # the decided item is still decided: conflicting verdict is rejected
    conflict = cl2.post("/runs/r1/review", json={"image_id": first["image_id"],
                                                 "verdict": "reject"})
    assert conflict.status_code == 409
    # and the run can be completed on the recovered instance
    while True:
        nxt = cl2.get("/runs/r1/queue/next")
        if nxt.status_code == 204:
            break
        cl2.post("/runs/r1/review", json={"image_id": nxt.json()["image_id"],
                                          "verdict": "reject"})
    resp = cl2.post("/runs/r1/iterate", json={"start_next": False})
    assert resp.status_code == 200
    assert resp.json()["records"][0]["n_accepted"] == 1


def test_lease_expiry_requeues(corpus, tmp_path):
    from stereocount.service import create_app

    root, _ = corpus
    app = create_app(tmp_path / "runs", lease_seconds=0.0, sync_jobs=True)
    cl = TestClient(app)
    make_run(cl, root)
    advance(cl)
    a = cl.get("/runs/r1/queue/next").json()["image_id"]
    b = cl.get("/runs/r1/queue/next").json()["image_id"]
    assert a == b  # zero lease expires immediately, same item offered again
