import numpy as np
import pytest

from stereocount.labels import (
    blobs_from_labels,
    compact_labels,
    label_components,
    region_areas,
    size_filter,
)


def test_label_components_8_connected():
    mask = np.zeros((5, 5), dtype=np.uint8)
    mask[0, 0] = 1
    mask[1, 1] = 1  # diagonal touch joins them
    mask[4, 4] = 1
    labels = label_components(mask)
    assert labels.max() == 2
    assert labels[0, 0] == labels[1, 1]
    assert labels[4, 4] != labels[0, 0]


def test_blob_properties():
    labels = np.zeros((6, 8), dtype=np.int32)
    labels[2:4, 3:6] = 1
    (blob,) = blobs_from_labels(labels)
    assert blob.area == 6
    cx, cy = blob.centroid
    assert cx == pytest.approx(4.0) and cy == pytest.approx(2.5)
    r = blob.bbox
    assert (r.x0, r.y0, r.x1, r.y1) == (3, 2, 6, 4)
    assert r.x0 <= cx < r.x1 and r.y0 <= cy < r.y1


def test_size_filter_bounds_inclusive():
    labels = np.zeros((10, 30), dtype=np.int32)
    labels[0, 0:4] = 1   # area 4 = min - 1 -> removed
    labels[2, 0:5] = 2   # area 5 = min -> kept
    labels[4, 0:9] = 3   # area 9 = max -> kept
    labels[6, 0:10] = 4  # area 10 = max + 1 -> removed
    out = size_filter(labels, 5, 9)
    assert set(np.unique(out)) == {0, 1, 2}
    assert (out[2, 0:5] == 1).all()
    assert (out[4, 0:9] == 2).all()
    assert (out[0] == 0).all() and (out[6] == 0).all()


def test_size_filter_matches_brute_force_recount():
    rng = np.random.default_rng(10)
    mask = (rng.random((40, 40)) < 0.35).astype(np.uint8)
    labels = label_components(mask)
    lo, hi = 3, 20
    out = size_filter(labels, lo, hi)

    # oracle: independent per-label pixel recount on the input
    surviving = set()
    for lab in range(1, labels.max() + 1):
        area = int((labels == lab).sum())
        if lo <= area <= hi:
            surviving.add(lab)
    assert out.max() == len(surviving)
    for lab in range(1, labels.max() + 1):
        region = labels == lab
        if lab in surviving:
            vals = np.unique(out[region])
            assert vals.size == 1 and vals[0] > 0
        else:
            assert (out[region] == 0).all()
    areas = region_areas(out)[1:]
    assert ((areas >= lo) & (areas <= hi)).all()


def test_size_filter_validates_params():
    with pytest.raises(ValueError):
        size_filter(np.zeros((3, 3), dtype=np.int32), 10, 5)


def test_compact_labels_contiguous():
    labels = np.array([[0, 5, 5], [9, 0, 2]], dtype=np.int32)
    out = compact_labels(labels)
    assert set(np.unique(out)) == {0, 1, 2, 3}
    # ascending original order preserved
    assert out[1, 2] == 1 and out[0, 1] == 2 and out[1, 0] == 3
