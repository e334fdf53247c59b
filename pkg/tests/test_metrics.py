import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orthoillum.correction import EnfaceImage, enface
from orthoillum.errors import (
    DimensionMismatchError,
    EmptyOverlapError,
    MissingTruthError,
)
from orthoillum.metrics import (
    applied_correction_curves,
    evaluate_pair,
    illumination_recovery_error,
    mad_between_enfaces,
    pair_enfaces,
    scanline_jumps,
)
from orthoillum.volume import ScanDirection, new_raster_volume


def make_volume(data, validity=None, direction=ScanDirection.X_FAST):
    return new_raster_volume(
        np.asarray(data, dtype=np.float32), direction, 1.0, 2.0, validity
    )


def const_pair(v1_value, v2_value, shape=(4, 4, 3)):
    v1 = make_volume(np.full(shape, v1_value))
    v2 = make_volume(
        np.full((shape[1], shape[0], shape[2]), v2_value), direction=ScanDirection.Y_FAST
    )
    return v1, v2


def test_identical_enfaces_have_zero_distance():
    v1, v2 = const_pair(1.0, 1.0)
    e1, e2 = pair_enfaces(v1, v2)
    assert mad_between_enfaces(e1, e2) == 0.0


def test_known_offsets_give_the_expected_distances():
    before = const_pair(1.0, 1.4)
    after = const_pair(1.0, 1.31)
    report = evaluate_pair(before, after)
    assert report.mad_before == pytest.approx(0.4, rel=1e-6)
    assert report.mad_after == pytest.approx(0.31, rel=1e-6)
    assert report.reduction_percent == pytest.approx(22.5, rel=1e-5)
    assert report.decreased


def test_no_change_means_no_reduction():
    pair = const_pair(1.0, 1.4)
    report = evaluate_pair(pair, pair)
    assert report.reduction_percent == 0.0
    assert not report.decreased
    assert report.illum_rmse_before is None


def test_disjoint_coverage_is_an_error():
    e1 = EnfaceImage(
        pixels=np.zeros((2, 2)), coverage=np.array([[1, 0], [0, 0]], dtype=np.uint8)
    )
    e2 = EnfaceImage(
        pixels=np.zeros((2, 2)), coverage=np.array([[0, 1], [0, 0]], dtype=np.uint8)
    )
    with pytest.raises(EmptyOverlapError):
        mad_between_enfaces(e1, e2)
    with pytest.raises(DimensionMismatchError):
        mad_between_enfaces(e1, EnfaceImage(np.zeros((3, 2)), np.ones((3, 2), np.uint8)))


def test_pair_enfaces_restrict_to_mutual_coverage():
    validity1 = np.ones((3, 3, 2), dtype=np.uint8)
    validity1[0, 1] = 0
    v1 = make_volume(np.full((3, 3, 2), 2.0), validity1)
    validity2 = np.ones((3, 3, 2), dtype=np.uint8)
    validity2[2, 0] = 0  # transposes to (0, 2) on v1's grid
    v2 = make_volume(np.full((3, 3, 2), 4.0), validity2, direction=ScanDirection.Y_FAST)
    e1, e2 = pair_enfaces(v1, v2)
    assert e1.coverage[0, 1] == 0 and e1.coverage[0, 2] == 0
    assert np.array_equal(e1.coverage, e2.coverage)
    assert e1.coverage.sum() == 7
    assert e1.pixels[0, 1] == 0.0 and e2.pixels[0, 2] == 0.0
    assert mad_between_enfaces(e1, e2) == pytest.approx(2.0)


@given(
    st.floats(0.1, 10.0),
    st.integers(0, 100),
)
@settings(max_examples=25, deadline=None)
def test_distance_properties(scale, seed):
    rng = np.random.default_rng(seed)
    p1 = rng.uniform(0, 2, (4, 5))
    p2 = rng.uniform(0, 2, (4, 5))
    cov = np.ones((4, 5), dtype=np.uint8)
    e1, e2 = EnfaceImage(p1, cov), EnfaceImage(p2, cov)
    d12 = mad_between_enfaces(e1, e2)
    assert d12 >= 0
    assert mad_between_enfaces(e2, e1) == d12
    assert mad_between_enfaces(e1, e1) == 0.0
    scaled = mad_between_enfaces(
        EnfaceImage(scale * p1, cov), EnfaceImage(scale * p2, cov)
    )
    assert scaled == pytest.approx(scale * d12, rel=1e-9)


def test_scanline_jumps_by_hand():
    pixels = np.array([[1.0, 1.0], [2.0, 4.0], [0.0, 0.0], [5.0, 7.0]])
    coverage = np.array([[1, 1], [1, 1], [0, 0], [1, 1]], dtype=np.uint8)
    jumps = scanline_jumps(EnfaceImage(pixels, coverage))
    assert jumps[0] == pytest.approx(2.0)  # 1.0 -> 3.0
    assert np.isnan(jumps[1]) and np.isnan(jumps[2])  # uncovered line


def test_applied_curves_recover_the_factor():
    rng = np.random.default_rng(71)
    data = rng.uniform(0.5, 2.0, (3, 4, 5)).astype(np.float32)
    before = make_volume(data)
    curve = rng.normal(0, 0.2, (3, 4))
    after = make_volume(data * np.exp(curve)[:, :, None].astype(np.float32))
    got, estimated = applied_correction_curves(before, after)
    assert (estimated == 1).all()
    np.testing.assert_allclose(got, curve, atol=1e-5)


def test_applied_curves_report_untouched_ascans():
    data = np.full((2, 3, 2), 2.0, dtype=np.float32)
    before = make_volume(data)
    changed = data.copy()
    changed[0, 0] *= 1.5
    after = make_volume(changed)
    curves, estimated = applied_correction_curves(before, after)
    assert estimated[0, 0] == 1 and curves[0, 0] == pytest.approx(np.log(1.5), rel=1e-5)
    assert (estimated.ravel()[1:] == 0).all()
    assert (curves.ravel()[1:] == 0).all()
    with pytest.raises(DimensionMismatchError):
        applied_correction_curves(before, make_volume(np.ones((2, 3, 3))))


def test_recovery_error_is_zero_at_the_negated_truth():
    rng = np.random.default_rng(72)
    truth = [rng.normal(0, 0.2, (4, 5)), rng.normal(0, 0.2, (5, 4))]
    include = [np.ones((4, 5), dtype=np.uint8), np.ones((5, 4), dtype=np.uint8)]
    applied = [-t for t in truth]
    assert illumination_recovery_error(applied, truth, include) < 1e-12
    # the shared constant is gauge, so shifting one answer is still exact
    shifted = [applied[0] + 0.3, applied[1] + 0.3]
    assert illumination_recovery_error(shifted, truth, include) < 1e-12


def test_recovery_error_at_zero_is_the_truth_spread():
    rng = np.random.default_rng(73)
    truth = [rng.normal(0, 0.2, (4, 5)), rng.normal(0, 0.2, (5, 4))]
    include = [np.ones((4, 5), dtype=np.uint8), np.ones((5, 4), dtype=np.uint8)]
    zero = [np.zeros_like(t) for t in truth]
    flat = np.concatenate([t.ravel() for t in truth])
    want = float(np.sqrt(np.mean((flat - flat.mean()) ** 2)))
    assert illumination_recovery_error(zero, truth, include) == pytest.approx(want, rel=1e-12)


def test_recovery_error_respects_the_include_mask():
    truth = [np.array([[1.0, -1.0]]), np.array([[0.0], [0.0]])]
    include = [np.array([[1, 0]], dtype=np.uint8), np.zeros((2, 1), dtype=np.uint8)]
    # only one A-scan included: after mean removal there is nothing left
    assert illumination_recovery_error(
        [np.zeros((1, 2)), np.zeros((2, 1))], truth, include
    ) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(MissingTruthError):
        illumination_recovery_error(
            [np.zeros((1, 2)), np.zeros((2, 1))],
            truth,
            [np.zeros((1, 2), np.uint8), np.zeros((2, 1), np.uint8)],
        )
    with pytest.raises(DimensionMismatchError):
        illumination_recovery_error([np.zeros((1, 2))], truth, include)
    with pytest.raises(DimensionMismatchError):
        illumination_recovery_error(
            [np.zeros((2, 2)), np.zeros((2, 1))], truth, include
        )


def test_evaluate_pair_reports_truth_errors():
    rng = np.random.default_rng(74)
    shape = (4, 4, 3)
    base = rng.uniform(0.5, 1.5, shape).astype(np.float32)
    truth = [rng.normal(0, 0.2, (4, 4)), rng.normal(0, 0.2, (4, 4))]
    before = [
        make_volume(base * np.exp(truth[0])[:, :, None].astype(np.float32)),
        make_volume(
            base.transpose(1, 0, 2) * np.exp(truth[1])[:, :, None].astype(np.float32),
            direction=ScanDirection.Y_FAST,
        ),
    ]
    after = [
        make_volume(before[0].data * np.exp(-truth[0])[:, :, None].astype(np.float32)),
        make_volume(
            before[1].data * np.exp(-truth[1])[:, :, None].astype(np.float32),
            direction=ScanDirection.Y_FAST,
        ),
    ]
    fg = [np.ones((4, 4), dtype=np.uint8)] * 2
    report = evaluate_pair(before, after, truth_curves=truth, truth_foreground=fg)
    assert report.illum_rmse_before > 0.05
    assert report.illum_rmse_after < 1e-4
    assert report.decreased
    with pytest.raises(MissingTruthError):
        evaluate_pair(before, after, truth_curves=truth)
    with pytest.raises(DimensionMismatchError):
        evaluate_pair(before[:1], after, truth_curves=truth, truth_foreground=fg)
