import numpy as np
import pytest

from phenopipe import segment
from phenopipe.errors import SegmentationError
from phenopipe.locator import LeafCandidate

from synth import GRAY_BG, blank, ellipse_mask, paint


def make_candidate(mx, my):
    return LeafCandidate([], (int(mx) - 2, int(my) - 2, 5, 5), (float(mx), float(my)), 200.0, 25)


class StubPredictor:
    """Scripted predictor: fixed masks per prompt, for pipeline tests."""

    def __init__(self, responses):
        self.responses = responses  # list of (mask, score) served in call order
        self.calls = 0

    def predict(self, image, point):
        mask, score = self.responses[self.calls]
        self.calls += 1
        if isinstance(mask, Exception):
            raise mask
        return mask, score


def square_mask(h, w, cx, cy, side=5):
    mask = np.zeros((h, w), dtype=bool)
    half = side // 2
    mask[cy - half : cy + half + 1, cx - half : cx + half + 1] = True
    return mask


def test_zero_candidates_empty_composite():
    img = blank(30, 20)
    comp = segment.segment_image(img, [], StubPredictor([]))
    assert not comp.raster.any()
    assert comp.leaf_ids == {}


def test_single_stub_square():
    img = blank(30, 30)
    mask = square_mask(30, 30, 10, 10)
    comp = segment.segment_image(img, [make_candidate(10, 10)], StubPredictor([(mask, 1.0)]))
    values = set(np.unique(comp.raster)) - {0}
    assert len(values) == 1
    assert (comp.raster > 0).sum() == 25
    assert comp.leaf_ids == {values.pop(): 0}


def test_two_disjoint_masks_counts_preserved():
    img = blank(40, 40)
    m1 = square_mask(40, 40, 8, 8)
    m2 = square_mask(40, 40, 30, 30, side=7)
    comp = segment.segment_image(
        img,
        [make_candidate(8, 8), make_candidate(30, 30)],
        StubPredictor([(m1, 0.9), (m2, 0.8)]),
    )
    values = sorted(set(np.unique(comp.raster)) - {0})
    assert len(values) == 2
    counts = {v: (comp.raster == v).sum() for v in values}
    assert sorted(counts.values()) == [25, 49]
    assert set(comp.leaf_ids.values()) == {0, 1}


def test_low_score_and_non_containing_masks_dropped():
    img = blank(20, 20)
    good = square_mask(20, 20, 10, 10)
    elsewhere = square_mask(20, 20, 3, 3)
    comp = segment.segment_image(
        img,
        [make_candidate(10, 10), make_candidate(10, 10)],
        StubPredictor([(good, 0.4), (elsewhere, 1.0)]),
    )
    assert not comp.raster.any()


def test_overlap_higher_score_wins():
    img = blank(20, 20)
    a = square_mask(20, 20, 9, 9, side=7)
    b = square_mask(20, 20, 12, 12, side=7)
    comp = segment.segment_image(
        img,
        [make_candidate(9, 9), make_candidate(12, 12)],
        StubPredictor([(a, 0.6), (b, 0.9)]),
    )
    id_a = next(g for g, i in comp.leaf_ids.items() if i == 0)
    id_b = next(g for g, i in comp.leaf_ids.items() if i == 1)
    overlap = a & b
    assert (comp.raster[overlap] == id_b).all()
    assert (comp.raster[a & ~overlap] == id_a).all()


def test_partition_and_id_uniqueness():
    img = blank(40, 40)
    masks = [square_mask(40, 40, 6 + 9 * i, 20, side=5) for i in range(3)]
    comp = segment.segment_image(
        img,
        [make_candidate(6 + 9 * i, 20) for i in range(3)],
        StubPredictor([(m, 1.0) for m in masks]),
    )
    nonzero = set(np.unique(comp.raster)) - {0}
    assert nonzero == set(comp.leaf_ids)
    total = sum((comp.raster == v).sum() for v in nonzero)
    assert total == (comp.raster > 0).sum()


def test_predictor_failure_isolated():
    img = blank(30, 30)
    ok = square_mask(30, 30, 20, 20)
    comp = segment.segment_image(
        img,
        [make_candidate(10, 10), make_candidate(20, 20)],
        StubPredictor([(RuntimeError("boom"), 0.0), (ok, 1.0)]),
    )
    assert len(comp.errors) == 1
    assert comp.errors[0][0] == 0
    assert (comp.raster > 0).sum() == 25


def test_too_many_masks_rejected():
    img = blank(64, 80)
    candidates, responses = [], []
    for i in range(256):
        x, y = 2 + (i % 16) * 4, 2 + (i // 16) * 4
        mask = np.zeros((64, 80), dtype=bool)
        mask[y, x] = True
        candidates.append(make_candidate(x, y))
        responses.append((mask, 1.0))
    with pytest.raises(SegmentationError, match="too many leaves"):
        segment.segment_image(img, candidates, StubPredictor(responses))


def test_seeded_determinism_and_seed_sensitivity():
    img = blank(30, 30)
    mask = square_mask(30, 30, 15, 15)
    comp1 = segment.segment_image(img, [make_candidate(15, 15)], StubPredictor([(mask, 1.0)]), seed=5)
    comp2 = segment.segment_image(img, [make_candidate(15, 15)], StubPredictor([(mask, 1.0)]), seed=5)
    assert comp1.raster.tobytes() == comp2.raster.tobytes()
    comp3 = segment.segment_image(img, [make_candidate(15, 15)], StubPredictor([(mask, 1.0)]), seed=6)
    assert set(comp3.leaf_ids) != set(comp1.leaf_ids)


def test_region_grow_recovers_uniform_ellipse():
    img = blank(120, 100, GRAY_BG)
    leaf = ellipse_mask(120, 100, (60, 50), (30, 18))
    paint(img, leaf, (110, 180, 50))
    predictor = segment.RegionGrowPredictor(tolerance=0.1)
    mask, score = predictor.predict(img, (60.0, 50.0))
    assert score == 1.0
    assert np.array_equal(mask, leaf)


def test_region_grow_background_seed():
    img = blank(50, 50, (110, 180, 50))
    img[25, 25] = (0, 0, 0)
    predictor = segment.RegionGrowPredictor(tolerance=0.05)
    mask, score = predictor.predict(img, (25.0, 25.0))
    assert mask.sum() == 1  # only the lone black pixel matches the seed color
    assert score == 0.0


def test_region_grow_out_of_bounds():
    img = blank(20, 20)
    mask, score = segment.RegionGrowPredictor().predict(img, (-1.0, -1.0))
    assert not mask.any()
    assert score == 0.0


def test_region_grow_factory_validates():
    with pytest.raises(ValueError):
        segment.region_grow_predictor(0.0)


def _composite_with(mask, leaf_id=7):
    raster_arr = np.zeros(mask.shape, dtype=np.uint8)
    raster_arr[mask] = leaf_id
    return segment.CompositeMask(raster=raster_arr, leaf_ids={leaf_id: 0})


def test_isolate_axis_aligned_rect():
    img = blank(60, 40, (90, 90, 90))
    mask = np.zeros((40, 60), dtype=bool)
    mask[10:20, 15:45] = True  # 30 wide x 10 tall
    img[mask] = (110, 180, 50)
    leaf = segment.isolate_leaf(img, _composite_with(mask), 7, "x.png")
    assert leaf.angle == pytest.approx(0.0, abs=1e-9)
    assert leaf.crop.shape[:2] == (10, 30)
    assert leaf.mask_crop.sum() == mask.sum()
    assert leaf.source == ("x.png", 7)


def test_isolate_rotated_rect_roundtrip():
    from synth import rotated_rect_mask

    img = blank(160, 160, (90, 90, 90))
    mask = rotated_rect_mask(160, 160, (80, 80), 60, 20, 30.0)
    img[mask] = (110, 180, 50)
    leaf = segment.isolate_leaf(img, _composite_with(mask), 7)
    ch, cw = leaf.crop.shape[:2]
    assert abs(cw - 60) <= 2
    assert abs(ch - 20) <= 2


def test_isolate_conservation_and_mask_alignment():
    from synth import rotated_rect_mask

    img = blank(160, 160, (90, 90, 90))
    mask = rotated_rect_mask(160, 160, (80, 80), 50, 24, 17.0)
    img[mask] = (110, 180, 50)
    leaf = segment.isolate_leaf(img, _composite_with(mask), 7)
    assert leaf.mask_crop.sum() <= mask.sum()
    assert leaf.crop.shape[:2] == leaf.mask_crop.shape
    nonblack = leaf.crop.any(axis=2)
    assert (~leaf.mask_crop[nonblack]).sum() == 0


def test_isolate_mask_touching_border():
    img = blank(40, 40, (90, 90, 90))
    mask = np.zeros((40, 40), dtype=bool)
    mask[0:12, 0:30] = True
    img[mask] = (110, 180, 50)
    leaf = segment.isolate_leaf(img, _composite_with(mask), 7)
    assert leaf.crop.shape[:2] == (12, 30)


def test_isolate_unknown_id():
    comp = segment.CompositeMask(raster=np.zeros((10, 10), dtype=np.uint8))
    with pytest.raises(SegmentationError, match="not present"):
        segment.isolate_leaf(blank(10, 10), comp, 3)
