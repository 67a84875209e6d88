import json

import numpy as np
import pytest

from surftrap.geometry import (Electrode, FiveRodParams, LayoutError, TrapLayout,
                               build_five_rod, calibrate_rail_width, five_rod_profile)
from surftrap.pseudopotential import rf_null_height


def base_params(**overrides):
    return FiveRodParams.with_defaults(center_width=136e-6, gap=21e-6,
                                       rf_rail_width=245e-6, **overrides)


def test_five_rod_roles_and_ids():
    layout = build_five_rod(base_params())
    roles = sorted(e.role for e in layout.electrodes)
    assert roles == ["CENTER", "DC1", "DC2", "DC3", "DC4", "RF", "RF"]
    assert len(layout.by_role("RF")) == 2


def test_center_width_at_notch_is_center_width():
    # the quoted 136 um is the width of the central electrode AT the notch
    params = base_params()
    layout = build_five_rod(params)
    verts = np.asarray(layout.electrode("CENTER").polygon)
    notch_xs = verts[np.isclose(np.abs(verts[:, 1]), params.notch_width / 2.0)][:, 0]
    width_at_notch = notch_xs.max() - params.notch_depth - verts[:, 0].min()
    assert width_at_notch == pytest.approx(136e-6, abs=1e-12)


def test_degenerate_notch_matches_unnotched_layout():
    with_notch = build_five_rod(base_params(notch_depth=0.0))
    explicit = build_five_rod(base_params(notch_depth=0.0, notch_width=0.0))
    for a, b in zip(with_notch.electrodes, explicit.electrodes):
        assert set(a.polygon) == set(b.polygon)
    assert len(with_notch.electrode("CENTER").polygon) == 4


def test_mirror_symmetry_without_notch():
    # symmetric rails and splits, no notch: the layout maps onto itself
    # under x -> -x (DC1/DC2 exchange with DC3/DC4)
    params = base_params(notch_depth=0.0, notch_width=0.0,
                         far_side_rail_width=245e-6,
                         dc12_split_offset=10.5e-6,
                         dc34_split_offset=10.5e-6,
                         dc34_segment_length=408e-6)
    layout = build_five_rod(params)
    polygons = {frozenset((round(-x, 12), round(y, 12)) for x, y in e.polygon)
                for e in layout.electrodes}
    originals = {frozenset((round(x, 12), round(y, 12)) for x, y in e.polygon)
                 for e in layout.electrodes}
    assert polygons == originals


def test_overlapping_parameters_rejected():
    # split offsets below half a gap would let DC1/DC2 touch or overlap
    with pytest.raises(LayoutError):
        base_params(dc12_split_offset=2e-6)
    with pytest.raises(LayoutError):
        base_params(outer_dc_width=-1.0)
    # direct layout overlap check
    a = Electrode("a", ((0, 0), (2e-4, 0), (2e-4, 2e-4), (0, 2e-4)), "RF")
    b = Electrode("b", ((1e-4, 1e-4), (3e-4, 1e-4), (3e-4, 3e-4), (1e-4, 3e-4)), "DC1")
    with pytest.raises(LayoutError, match="overlap"):
        TrapLayout((a, b), characteristic_size_d=1e-4, gap_width=1e-5)


def test_electrode_validation():
    with pytest.raises(LayoutError):
        Electrode("bad", ((0, 0), (1, 0)), "RF")
    with pytest.raises(LayoutError):
        Electrode("bow", ((0, 0), (1, 1), (1, 0), (0, 1)), "RF")
    with pytest.raises(LayoutError):
        Electrode("role", ((0, 0), (1, 0), (1, 1)), "DC9")


def test_layout_requires_rf():
    el = Electrode("c", ((0, 0), (1e-4, 0), (1e-4, 1e-4), (0, 1e-4)), "CENTER")
    with pytest.raises(LayoutError):
        TrapLayout((el,), characteristic_size_d=1e-4, gap_width=1e-5)


def test_json_round_trip():
    layout = build_five_rod(base_params())
    doc = layout.to_json()
    back = TrapLayout.from_json(doc)
    assert back == layout
    assert json.loads(doc)["schema_version"] == 1


def test_scale_invariance_of_null_height():
    # Laplace scaling: all lengths x s => null height x s, exactly
    params = base_params()
    layout = build_five_rod(params, characteristic_size_d=150e-6)
    h1 = rf_null_height(layout)
    s = 0.5
    h2 = rf_null_height(layout.scaled(s))
    assert h2 == pytest.approx(s * h1, rel=1e-6)


@pytest.mark.slow
def test_calibration_round_trip_and_monotonicity(l150):
    params, layout = l150
    height = rf_null_height(layout)
    assert height == pytest.approx(150e-6, rel=5e-3)

    # at fixed center width the reachable heights are bounded below (~110 um
    # for the 136 um center: the far rail alone sets a floor), so the lower
    # monotonicity target sits inside the feasible band
    solved_130 = calibrate_rail_width(130e-6, base_params())
    height_130 = rf_null_height(
        build_five_rod(solved_130, characteristic_size_d=130e-6))
    assert height_130 == pytest.approx(130e-6, rel=5e-3)
    # wider rail pushes the null higher: the lower target needs less rail
    assert solved_130.rf_rail_width < params.rf_rail_width


def test_calibration_below_floor_fails_explicitly():
    with pytest.raises(LayoutError, match="no rail width"):
        calibrate_rail_width(100e-6, base_params())


def test_profiles_scale_together(l150):
    params150, layout150 = l150
    params75, layout75 = five_rod_profile("L75")
    assert params75.center_width == pytest.approx(0.5 * params150.center_width)
    assert layout75.characteristic_size_d == pytest.approx(75e-6)


def test_calibration_failure_reports():
    # target far beyond what any rail width in the bracket can reach
    with pytest.raises(LayoutError, match="no rail width"):
        calibrate_rail_width(5e-3, base_params())
