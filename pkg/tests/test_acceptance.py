"""Acceptance suite: one test per release criterion, one PASS line each.

Run with `pytest tests/test_acceptance.py -v -s`.  The end-to-end loop
criterion builds a ~120-image synthetic corpus and drives three full
review iterations; expect a few minutes of wall time.
"""

import bisect
import hashlib
import json
import time
from pathlib import Path

import numpy as np
import pytest

from stereocount.asa import AsaParams
from stereocount.augment import augment_pair
from stereocount.contour import savgol_coeffs
from stereocount.disector import (
    DisectorFrame,
    Verdict,
    aggregate_error_rate,
    classify_blob,
    error_rate,
)
from stereocount.gmm import fit_gmm
from stereocount.labels import Blob
from stereocount.loop import (
    AUGMENT_FACTOR,
    LoopConfig,
    OracleReviewer,
    RunDir,
    init_run,
    replay_decisions,
    resume_loop,
    run_iteration,
    run_loop,
    write_records_csv,
)
from stereocount.manifest import REFERENCE_TEST_MOUSE, MouseSpec, Partition
from stereocount.raster import Rect
from stereocount.refdata import (
    REFERENCE_ACCEPTS,
    REFERENCE_ERRORS,
    TABLE3_ASA,
    TABLE3_MANUAL,
    TABLE3_UNET,
    bundled_decisions_path,
    bundled_records_path,
    reference_manifest,
)
from stereocount.segnet import backward, bce_loss, build_net, forward
from stereocount.synth import (
    SynthParams,
    bootstrap_asa_verdicts,
    degrade_params,
    gen_dataset,
)
from stereocount.watershed import OFFSETS8, watershed


def report(name: str) -> None:
    print(f"\nACCEPTANCE {name}: PASS")


# ----------------------------------------------------------- 1. paper arithmetic

def test_paper_arithmetic_reproduction():
    t0 = time.perf_counter()
    unet = aggregate_error_rate(list(zip(TABLE3_MANUAL, TABLE3_UNET)))
    asa = aggregate_error_rate(list(zip(TABLE3_MANUAL, TABLE3_ASA)))
    assert abs(unet - 0.55) <= 0.01
    assert abs(asa - 11.0) <= 0.1
    assert error_rate(727, 723) == pytest.approx(unet)
    assert error_rate(727, 647) == pytest.approx(asa)
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0, f"took {elapsed:.3f}s"
    report("paper-arithmetic")


# ----------------------------------------------------------- 2. reference replay

def test_reference_trace_replay(tmp_path):
    manifest = reference_manifest()
    assert manifest.total_stacks == 966
    records, state = replay_decisions(manifest, bundled_decisions_path(),
                                      REFERENCE_TEST_MOUSE)
    quintuple = [(r.n_accepted, round(r.error_pct, 2)) for r in records]
    assert quintuple == [(379, 3.16), (81, 0.82), (51, 1.92), (18, 0.41), (15, 0.55)]

    # starting partition re-derived from the same log
    asa_verdicts = {}
    for line in Path(bundled_decisions_path()).read_text().splitlines():
        d = json.loads(line)
        if d["type"] == "asa_verdict":
            asa_verdicts[d["image_id"]] = d["verdict"]
    initial = init_run(manifest, asa_verdicts, REFERENCE_TEST_MOUSE)
    sizes = (len(initial.partition.train), len(initial.partition.active),
             len(initial.partition.test))
    assert sizes == (147, 728, 91)
    assert sum(sizes) == 966

    out = tmp_path / "records.csv"
    write_records_csv(out, records)
    assert out.read_bytes() == bundled_records_path().read_bytes()
    report("reference-trace-replay")


# ----------------------------------------------------------- 3. augmentation

def test_augmentation_count_and_speed():
    rng = np.random.default_rng(0)
    img = rng.random((128, 128))
    mask = np.zeros((128, 128), dtype=np.uint8)
    mask[40:80, 50:90] = 1
    t0 = time.perf_counter()
    pairs = augment_pair(img, mask, seed=9)
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0, f"augmentation took {elapsed:.2f}s"

    assert len(pairs) == 72
    angles = sorted({p.angle for p in pairs})
    assert angles == list(range(0, 360, 15)) and len(angles) == 24
    bases = {p.base for p in pairs}
    assert bases == {"base", "elastic1", "elastic2"}

    original = next(p for p in pairs if p.base == "base" and p.angle == 0)
    assert np.array_equal(original.image, img)
    assert np.array_equal(original.mask, mask)
    e1 = next(p for p in pairs if p.base == "elastic1" and p.angle == 0)
    e2 = next(p for p in pairs if p.base == "elastic2" and p.angle == 0)
    assert not np.array_equal(e1.image, e2.image)
    report("augmentation-count")


# ----------------------------------------------------------- 4. property suite

def test_property_em_monotone():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    for _ in range(100):
        k = int(rng.integers(1, 4))
        centers = rng.uniform(0.1, 0.9, k)
        x = np.clip(np.concatenate([
            rng.normal(c, rng.uniform(0.02, 0.08), int(rng.integers(80, 300)))
            for c in centers
        ]), 0.0, 1.0)
        model = fit_gmm(x, n_components=k, seed=int(rng.integers(1 << 30)))
        path = np.asarray(model.log_likelihood_path_)
        assert (np.diff(path) >= -1e-9).all()

    recovery = np.random.default_rng(7)
    x = np.concatenate([
        np.clip(recovery.normal(0.2, 0.01, 5000), 0, 1),
        np.clip(recovery.normal(0.8, 0.01, 5000), 0, 1),
    ])
    model = fit_gmm(x, n_components=2, seed=3)
    means = np.sort(model.means_)
    assert abs(means[0] - 0.2) < 0.01 and abs(means[1] - 0.8) < 0.01
    assert np.allclose(model.weights_, [0.5, 0.5], atol=0.05)
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    report(f"property-em-monotone ({elapsed:.1f}s)")


def flood_oracle(priority, markers):
    h, w = priority.shape
    out = markers.astype(np.int64).copy()
    queue, counter = [], 0

    def push(y, x, lab):
        nonlocal counter
        for dy, dx in OFFSETS8:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and out[ny, nx] == 0:
                bisect.insort(queue, (priority[ny, nx], counter, ny, nx, lab))
                counter += 1

    for y in range(h):
        for x in range(w):
            if out[y, x] > 0:
                push(y, x, int(out[y, x]))
    while queue:
        _, _, y, x, lab = queue.pop(0)
        if out[y, x] == 0:
            out[y, x] = lab
            push(y, x, lab)
    return out


def test_property_watershed_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(555)
    for trial in range(200):
        priority = rng.integers(0, 7, size=(32, 32)).astype(np.float64)
        markers = np.zeros((32, 32), dtype=np.int32)
        n_markers = int(rng.integers(1, 6))
        spots = rng.choice(32 * 32, size=n_markers, replace=False)
        for i, s in enumerate(spots):
            markers[s // 32, s % 32] = i + 1
        got = watershed(priority, markers)
        np.testing.assert_array_equal(got, flood_oracle(priority, markers),
                                      err_msg=f"trial {trial}")
        assert len(np.unique(got)) == n_markers
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    report(f"property-watershed-oracle ({elapsed:.1f}s)")


def test_property_savgol():
    t0 = time.perf_counter()
    got = savgol_coeffs(5, 2)
    # least-squares oracle via explicit normal equations
    half_t = np.arange(-2, 3, dtype=np.float64)
    A = np.stack([half_t**k for k in range(3)], axis=1)
    oracle = (np.linalg.inv(A.T @ A) @ A.T)[0]
    assert np.abs(got - oracle).max() < 1e-12
    assert np.abs(got - np.array([-3, 12, 17, 12, -3]) / 35.0).max() < 1e-12

    for window, order in [(5, 2), (7, 2), (7, 3), (9, 4)]:
        coeffs = savgol_coeffs(window, order)
        half = window // 2
        t = np.arange(-half, half + 1, dtype=np.float64)
        rng = np.random.default_rng(window * 10 + order)
        for _ in range(20):
            poly = np.polynomial.polynomial.polyval(
                t, rng.normal(0, 1, order + 1))
            center = np.polynomial.polynomial.polyval(
                0.0, np.polynomial.polynomial.polyfit(t, poly, order))
            assert abs(float(coeffs @ poly) - float(center)) < 1e-9
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    report(f"property-savgol ({elapsed:.1f}s)")


def brute_force_classify(pixels, fr):
    r = fr.rect
    left = {(r.x0, y) for y in range(r.y0, r.y1)}
    bottom = {(x, r.y1 - 1) for x in range(r.x0 + 1, r.x1)}
    right = {(r.x1 - 1, y) for y in range(r.y0, r.y1 - 1)}
    top = {(x, r.y0) for x in range(r.x0 + 1, r.x1 - 1)}

    def near(point, lines):
        return any((point[0] + dx, point[1] + dy) in lines
                   for dx in (-1, 0, 1) for dy in (-1, 0, 1))

    interior = {(x, y) for x in range(r.x0 + 1, r.x1 - 1)
                for y in range(r.y0 + 1, r.y1 - 1)}
    if any(near(p, left | bottom) for p in pixels):
        return Verdict.EXCLUDED
    if any(p in interior or near(p, top | right) for p in pixels):
        return Verdict.COUNTED
    return Verdict.OUTSIDE


def test_property_disector_brute_force():
    t0 = time.perf_counter()
    rng = np.random.default_rng(31337)
    for trial in range(500):
        x0, y0 = rng.integers(0, 10, 2)
        fr = DisectorFrame(Rect(int(x0), int(y0),
                                int(x0 + rng.integers(5, 18)),
                                int(y0 + rng.integers(5, 18))))
        x = int(rng.integers(1, 29))
        y = int(rng.integers(1, 29))
        pixels = {(x, y)}
        for _ in range(int(rng.integers(1, 12))):
            dx, dy = rng.integers(-1, 2, 2)
            x = int(np.clip(x + dx, 0, 29))
            y = int(np.clip(y + dy, 0, 29))
            pixels.add((x, y))
        xs = np.array([p[0] for p in pixels])
        ys = np.array([p[1] for p in pixels])
        blob = Blob(1, ys, xs)
        assert classify_blob(blob, fr) is brute_force_classify(pixels, fr), trial

        # exact translation invariance
        moved = Blob(1, ys + 11, xs + 7)
        fr_moved = DisectorFrame(fr.rect.offset(7, 11))
        assert classify_blob(blob, fr) is classify_blob(moved, fr_moved)
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    report(f"property-disector-brute-force ({elapsed:.1f}s)")


def test_property_gradient_check():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    params = build_net(1, 2, seed=3)  # double precision by default
    for key, arr in params.arrays.items():
        if key.endswith("_b"):
            arr += rng.normal(0.0, 0.1, arr.shape)  # move ReLU kinks off zero
    x = rng.random((1, 1, 16, 16))
    target = (rng.random((1, 1, 16, 16)) < 0.5).astype(np.float64)
    _, grads = backward(params, x, target)
    h = 1e-4
    worst = 0.0
    for key, arr in params.arrays.items():
        flat = arr.ravel()
        gflat = grads[key].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = bce_loss(forward(params, x), target)
            flat[i] = orig - h
            lo = bce_loss(forward(params, x), target)
            flat[i] = orig
            numeric = (hi - lo) / (2 * h)
            denom = max(abs(numeric), abs(gflat[i]), 1e-6)
            worst = max(worst, abs(numeric - gflat[i]) / denom)
    assert worst < 1e-3, f"worst relative error {worst:.2e}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    report(f"property-gradient-check (worst {worst:.1e}, {elapsed:.1f}s)")


# ----------------------------------------------------------- 5. end-to-end loop

LOOP_MICE = [
    MouseSpec("02", 8, 14), MouseSpec("03", 6, 15), MouseSpec("14", 8, 11),
    MouseSpec("17", 7, 11), MouseSpec("29", 8, 17), MouseSpec("21", 7, 13),
    MouseSpec("24", 8, 13), MouseSpec("67", 8, 13), MouseSpec("09", 6, 13),
]
LOOP_PARAMS = SynthParams(
    width=88, height=88, frame=Rect(24, 24, 64, 64),
    cell_count=(4, 7), radius=(3.5, 5.5), overlap_prob=0.25,
    noise_sigma=0.02, stain_jitter=0.1, slices=3,
    center_region=Rect(16, 16, 72, 72),
)
LOOP_CFG = dict(iterations=3, epochs=1, lr=1e-3, batch_size=16, depth=2,
                base_channels=4, margin=20, min_cell_size=25,
                max_cell_size=400, dtype="float32")


def test_end_to_end_synthetic_loop(tmp_path):
    t0 = time.perf_counter()
    manifest = gen_dataset(LOOP_MICE, LOOP_PARAMS, tmp_path / "corpus", seed=0)
    assert manifest.total_stacks == sum(m.stacks for m in LOOP_MICE) == 120

    asa = AsaParams(min_cell_size=25, max_cell_size=400)
    verdicts = bootstrap_asa_verdicts(
        manifest, "17", asa, degrade_params(asa, 1.0),
        degrade_fraction=0.8, seed=1, min_cell_size=25)
    state = init_run(manifest, verdicts, "17")
    assert len(state.partition.test) == 11
    n_initial_train = len(state.partition.train)
    assert n_initial_train >= 5, "need a usable initial training set"
    assert len(state.partition.active) >= 30, "need a populated active set"

    cfg = LoopConfig(test_mouse_id="17", seed=0, **LOOP_CFG)
    run = RunDir(tmp_path / "run")
    run.create(state, cfg, verdicts)
    reviewer = OracleReviewer(manifest, 25)
    records = run_loop(state, run, cfg, reviewer, 3)

    for r in records:
        print(f"  iteration {r.iteration}: accepted {r.n_accepted}, "
              f"test error {r.error_pct:.2f}%")
    # partition invariants after every iteration (revalidated on the final state)
    state.check_invariants()
    expected_train = AUGMENT_FACTOR * n_initial_train
    for r in records:
        expected_train += AUGMENT_FACTOR * r.n_accepted
        assert r.train_size == expected_train
    assert sum(r.n_accepted for r in records) > 0, "loop never accepted anything"
    assert records[-1].error_pct < records[0].error_pct, (
        f"no improvement: {records[0].error_pct:.2f} -> {records[-1].error_pct:.2f}")
    elapsed = time.perf_counter() - t0
    assert elapsed < 20 * 60, f"took {elapsed / 60:.1f} min"
    report(f"end-to-end-loop ({elapsed / 60:.1f} min, "
           f"errors {[round(r.error_pct, 2) for r in records]})")


# ----------------------------------------------------------- 6. determinism

SMALL_PARAMS = SynthParams(width=72, height=72, frame=Rect(20, 20, 52, 52),
                           cell_count=(2, 4), radius=(4.0, 5.5), slices=2,
                           noise_sigma=0.01)
SMALL_MICE = [MouseSpec("a", 2, 6), MouseSpec("t", 2, 4)]


def tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for path in sorted(Path(root).rglob("*")):
        if path.is_file():
            h.update(path.relative_to(root).as_posix().encode())
            h.update(path.read_bytes())
    return h.hexdigest()


def small_run(tmp_path, name, n_iterations=2):
    corpus = tmp_path / f"{name}_corpus"
    manifest = gen_dataset(SMALL_MICE, SMALL_PARAMS, corpus, seed=11)
    non_test = sorted(i.image_id for i in manifest.items if i.mouse_id != "t")
    asa = AsaParams(min_cell_size=20, max_cell_size=400)
    bootstrap_asa_verdicts(manifest, "t", asa, degrade_params(asa, 1.0),
                           degrade_fraction=0.5, seed=3, min_cell_size=20)
    verdicts = {image_id: ("accept" if k % 2 == 0 else "reject")
                for k, image_id in enumerate(non_test)}
    cfg = LoopConfig(test_mouse_id="t", iterations=n_iterations, epochs=1,
                     lr=1e-3, batch_size=8, depth=1, base_channels=2,
                     margin=20, min_cell_size=20, max_cell_size=400)
    state = init_run(manifest, verdicts, "t")
    run = RunDir(tmp_path / f"{name}_run")
    run.create(state, cfg, verdicts)
    return manifest, state, run, cfg


def test_determinism_and_durability(tmp_path):
    t0 = time.perf_counter()
    # identical seeds -> byte-identical synthetic corpora
    gen_dataset(SMALL_MICE, SMALL_PARAMS, tmp_path / "c1", seed=7)
    gen_dataset(SMALL_MICE, SMALL_PARAMS, tmp_path / "c2", seed=7)
    assert tree_digest(tmp_path / "c1") == tree_digest(tmp_path / "c2")

    # identical seeds -> byte-identical checkpoints and records
    _, state_a, run_a, cfg = small_run(tmp_path, "a")
    run_loop(state_a, run_a, cfg, OracleReviewer(state_a.manifest, 20), 2)
    _, state_b, run_b, _ = small_run(tmp_path, "b")
    run_loop(state_b, run_b, cfg, OracleReviewer(state_b.manifest, 20), 2)
    for k in (1, 2):
        assert run_a.checkpoint_path(k).read_bytes() == \
            run_b.checkpoint_path(k).read_bytes()
    assert (run_a.root / "records.csv").read_bytes() == \
        (run_b.root / "records.csv").read_bytes()

    # kill between iterations, resume from the journal: identical records
    _, state_c, run_c, _ = small_run(tmp_path, "c")
    run_loop(state_c, run_c, cfg, OracleReviewer(state_c.manifest, 20), 1)
    resumed = resume_loop(run_c.root, OracleReviewer(state_c.manifest, 20), 2)
    assert (run_c.root / "records.csv").read_bytes() == \
        (run_a.root / "records.csv").read_bytes()
    assert [r.iteration for r in resumed] == [1, 2]

    # and the decisions journal alone reproduces the records
    replayed, _ = replay_decisions(state_a.manifest, run_a.decisions_path, "t")
    assert [(r.iteration, r.n_accepted, r.train_size) for r in replayed] == \
        [(r.iteration, r.n_accepted, r.train_size) for r in state_a.records]
    elapsed = time.perf_counter() - t0
    report(f"determinism-durability ({elapsed:.0f}s)")
