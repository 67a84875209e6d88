"""Planar electrode layouts for surface-electrode traps.

Electrodes are simple polygons in the z = 0 plane; everything outside them is
treated as grounded plane by the field solver.  The five-rod builder produces
the standard linear surface trap: a central strip with a one-sided rectangular
notch, two RF rails, and four outer DC electrodes split along the trap axis
(y).  The notch breaks the x -> -x mirror symmetry, which is what tilts the
principal axes and pins the RF null along y.

Conventions: x transverse (in the electrode plane, across the rails),
y axial (along the rails), z height above the surface.  All lengths in
meters.  ``center_width`` is the width of the central electrode measured at
the notch, its narrowest point; away from the notch the strip is wider by
``notch_depth``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from shapely.geometry import Polygon as ShapelyPolygon

ROLES = ("RF", "DC1", "DC2", "DC3", "DC4", "CENTER", "GROUND")

LAYOUT_SCHEMA_VERSION = 1


class LayoutError(ValueError):
    """Invalid electrode geometry or layout."""


@dataclass(frozen=True)
class Electrode:
    """One electrode: a simple polygon at z = 0 with an electrical role."""

    id: str
    polygon: tuple[tuple[float, float], ...]
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise LayoutError(f"unknown role {self.role!r}, expected one of {ROLES}")
        if len(self.polygon) < 3:
            raise LayoutError(f"electrode {self.id!r}: polygon needs >= 3 vertices")
        shape = ShapelyPolygon(self.polygon)
        if not shape.is_valid or not shape.is_simple:
            raise LayoutError(f"electrode {self.id!r}: polygon is self-intersecting")
        if shape.area <= 0.0:
            raise LayoutError(f"electrode {self.id!r}: polygon area must be > 0")

    @property
    def shape(self) -> ShapelyPolygon:
        return ShapelyPolygon(self.polygon)

    def vertices(self) -> np.ndarray:
        """Vertices as an (M, 2) array, counterclockwise."""
        verts = np.asarray(self.polygon, dtype=float)
        if _signed_area(verts) < 0.0:
            verts = verts[::-1]
        return verts


def _signed_area(verts: np.ndarray) -> float:
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True)
class TrapLayout:
    """A set of electrodes plus the nominal trap size label.

    ``characteristic_size_d`` is the design ion-surface distance the layout is
    labeled with (e.g. 75/100/150 um); it sets length scales for solvers but
    carries no geometry of its own.
    """

    electrodes: tuple[Electrode, ...]
    characteristic_size_d: float
    gap_width: float

    def __post_init__(self):
        if self.characteristic_size_d <= 0.0:
            raise LayoutError("characteristic_size_d must be > 0")
        if self.gap_width < 0.0:
            raise LayoutError("gap_width must be >= 0")
        ids = [e.id for e in self.electrodes]
        if len(set(ids)) != len(ids):
            raise LayoutError("electrode ids must be unique")
        if not self.by_role("RF"):
            raise LayoutError("layout needs at least one RF electrode (one RF net)")
        shapes = [e.shape for e in self.electrodes]
        for i in range(len(shapes)):
            for j in range(i + 1, len(shapes)):
                inter = shapes[i].intersection(shapes[j])
                if inter.area > 1e-18:
                    raise LayoutError(
                        f"electrodes {self.electrodes[i].id!r} and "
                        f"{self.electrodes[j].id!r} overlap"
                    )

    def by_role(self, role: str) -> list[Electrode]:
        return [e for e in self.electrodes if e.role == role]

    def electrode(self, eid: str) -> Electrode:
        for e in self.electrodes:
            if e.id == eid:
                return e
        raise KeyError(eid)

    def scaled(self, s: float) -> "TrapLayout":
        """Uniformly scale every length by s > 0."""
        if s <= 0.0:
            raise LayoutError("scale factor must be > 0")
        electrodes = tuple(
            Electrode(e.id, tuple((s * x, s * y) for x, y in e.polygon), e.role)
            for e in self.electrodes
        )
        return TrapLayout(electrodes, s * self.characteristic_size_d, s * self.gap_width)

    def to_json(self) -> str:
        doc = {
            "schema_version": LAYOUT_SCHEMA_VERSION,
            "characteristic_size_d_m": self.characteristic_size_d,
            "gap_width_m": self.gap_width,
            "electrodes": [
                {"id": e.id, "role": e.role, "polygon_m": [list(v) for v in e.polygon]}
                for e in self.electrodes
            ],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TrapLayout":
        doc = json.loads(text)
        if doc.get("schema_version") != LAYOUT_SCHEMA_VERSION:
            raise LayoutError(f"unsupported layout schema {doc.get('schema_version')!r}")
        electrodes = tuple(
            Electrode(el["id"], tuple((float(x), float(y)) for x, y in el["polygon_m"]), el["role"])
            for el in doc["electrodes"]
        )
        return cls(electrodes, float(doc["characteristic_size_d_m"]), float(doc["gap_width_m"]))


_FIVE_ROD_FIELDS = (
    "center_width", "gap", "rf_rail_width", "far_side_rail_width",
    "outer_dc_width", "electrode_length", "notch_width", "notch_depth",
    "dc_segment_length", "dc12_split_offset", "dc34_segment_length",
    "dc34_split_offset",
)


@dataclass(frozen=True)
class FiveRodParams:
    """Parameters of the five-rod surface layout.

    The notch sits on the +x side of the central strip.  ``rf_rail_width`` is
    the +x (notch-side) rail, the one ``calibrate_rail_width`` solves for;
    ``far_side_rail_width`` is the -x rail.  DC1/DC2 are the -x outer
    segments, split ``dc12_split_offset`` away from y = 0 on both sides (an
    axially confining placement for the positive pair of the usual +/- drive
    pattern); DC3/DC4 on the +x side hug the axis at ``dc34_split_offset``.

    ``notch_width``/``notch_depth`` may be zero (no notch); all other lengths
    must be positive.  ``notch_depth`` must stay below ``center_width`` so the
    central strip is never severed.
    """

    center_width: float
    gap: float
    rf_rail_width: float
    far_side_rail_width: float
    outer_dc_width: float
    electrode_length: float
    notch_width: float
    notch_depth: float
    dc_segment_length: float
    dc12_split_offset: float
    dc34_segment_length: float
    dc34_split_offset: float

    def __post_init__(self):
        for name in ("center_width", "gap", "rf_rail_width", "far_side_rail_width",
                     "outer_dc_width", "electrode_length", "dc_segment_length",
                     "dc34_segment_length"):
            if getattr(self, name) <= 0.0:
                raise LayoutError(f"{name} must be > 0")
        if self.notch_width < 0.0 or self.notch_depth < 0.0:
            raise LayoutError("notch dimensions must be >= 0")
        if self.dc12_split_offset < self.gap / 2.0 or self.dc34_split_offset < self.gap / 2.0:
            raise LayoutError("DC split offsets must be >= gap/2")
        if self.notch_depth >= self.center_width:
            raise LayoutError("notch_depth must be < center_width")
        if self.notch_width >= self.electrode_length:
            raise LayoutError("notch_width must be < electrode_length")

    @classmethod
    def with_defaults(cls, center_width: float, gap: float, rf_rail_width: float,
                      **overrides) -> "FiveRodParams":
        """Fill unspecified dimensions as multiples of the center width.

        The ratios reproduce the documented operating point (1 MHz-scale
        axial confinement, transverse modes near 2.2/2.5 MHz, tilt inside
        [6, 20] degrees at the usual +/- DC pattern) once ``rf_rail_width``
        is calibrated for the target height.
        """
        params = dict(
            center_width=center_width,
            gap=gap,
            rf_rail_width=rf_rail_width,
            far_side_rail_width=0.85 * center_width,
            outer_dc_width=2.0 * center_width,
            electrode_length=10.0 * center_width,
            notch_width=0.5 * center_width,
            notch_depth=0.25 * center_width,
            dc_segment_length=3.0 * center_width,
            dc12_split_offset=1.7 * center_width,
            dc34_segment_length=1.25 * center_width,
            dc34_split_offset=gap / 2.0,
        )
        unknown = set(overrides) - set(params)
        if unknown:
            raise LayoutError(f"unknown five-rod parameters: {sorted(unknown)}")
        params.update(overrides)
        return cls(**params)

    def scaled(self, s: float) -> "FiveRodParams":
        if s <= 0.0:
            raise LayoutError("scale factor must be > 0")
        return FiveRodParams(*(s * getattr(self, f) for f in _FIVE_ROD_FIELDS))


def _rect(x0: float, x1: float, y0: float, y1: float) -> tuple[tuple[float, float], ...]:
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))


def build_five_rod(params: FiveRodParams, characteristic_size_d: float | None = None) -> TrapLayout:
    """Build the five-rod layout from its parameters.

    The notch is cut into the +x edge of the central strip over
    |y| < notch_width/2, so the metal at the notch spans exactly
    [-center_width/2, +center_width/2].  DC1/DC2 sit on the -x side
    (y < 0 / y > 0), DC3/DC4 mirror them on the +x side.
    """
    cw, g = params.center_width, params.gap
    nd, nw = params.notch_depth, params.notch_width
    half_len = params.electrode_length / 2.0

    # Central strip [-cw/2, cw/2 + nd] with the notch removed.
    x_left, x_right = -cw / 2.0, cw / 2.0 + nd
    if nd > 0.0 and nw > 0.0:
        center_poly = (
            (x_left, -half_len),
            (x_right, -half_len),
            (x_right, -nw / 2.0),
            (x_right - nd, -nw / 2.0),
            (x_right - nd, nw / 2.0),
            (x_right, nw / 2.0),
            (x_right, half_len),
            (x_left, half_len),
        )
    else:
        center_poly = _rect(x_left, x_right, -half_len, half_len)

    rf_in_l = x_left - g
    rf_in_r = x_right + g
    rf_l = _rect(rf_in_l - params.far_side_rail_width, rf_in_l, -half_len, half_len)
    rf_r = _rect(rf_in_r, rf_in_r + params.rf_rail_width, -half_len, half_len)

    dc_in_l = rf_in_l - params.far_side_rail_width - g
    dc_in_r = rf_in_r + params.rf_rail_width + g
    a12, a34 = params.dc12_split_offset, params.dc34_split_offset
    seg12, seg34 = params.dc_segment_length, params.dc34_segment_length
    dc1 = _rect(dc_in_l - params.outer_dc_width, dc_in_l, -a12 - seg12, -a12)
    dc2 = _rect(dc_in_l - params.outer_dc_width, dc_in_l, a12, a12 + seg12)
    dc3 = _rect(dc_in_r, dc_in_r + params.outer_dc_width, -a34 - seg34, -a34)
    dc4 = _rect(dc_in_r, dc_in_r + params.outer_dc_width, a34, a34 + seg34)

    electrodes = (
        Electrode("CENTER", center_poly, "CENTER"),
        Electrode("RF_L", rf_l, "RF"),
        Electrode("RF_R", rf_r, "RF"),
        Electrode("DC1", dc1, "DC1"),
        Electrode("DC2", dc2, "DC2"),
        Electrode("DC3", dc3, "DC3"),
        Electrode("DC4", dc4, "DC4"),
    )
    d = characteristic_size_d if characteristic_size_d is not None else params.center_width
    try:
        return TrapLayout(electrodes, d, g)
    except LayoutError as err:
        raise LayoutError(f"five-rod parameters produce an invalid layout: {err}") from err


def calibrate_rail_width(target_height: float, params: FiveRodParams,
                         rel_tol: float = 5e-3) -> FiveRodParams:
    """Adjust rf_rail_width so the RF null sits at target_height.

    1-D root find on the computed null height; the bracket is
    [gap, 10 * target_height].  Raises LayoutError when the bracket does not
    straddle the target (e.g. the center strip alone already pushes the null
    beyond it).
    """
    from scipy.optimize import brentq

    from .pseudopotential import rf_null_height

    if target_height <= 0.0:
        raise LayoutError("target_height must be > 0")

    def height_error(width: float) -> float:
        return rf_null_height(build_five_rod(replace(params, rf_rail_width=width),
                                             characteristic_size_d=target_height)) - target_height

    lo, hi = params.gap, 10.0 * target_height
    try:
        f_lo, f_hi = height_error(lo), height_error(hi)
    except RuntimeError as err:
        raise LayoutError(
            f"no rail width in [{lo:.3g}, {hi:.3g}] m reaches null height "
            f"{target_height:.3g} m (null search failed at a bracket endpoint: {err})"
        ) from err
    if f_lo * f_hi > 0.0:
        raise LayoutError(
            f"no rail width in [{lo:.3g}, {hi:.3g}] m reaches null height "
            f"{target_height:.3g} m (bracket values {f_lo:.3g}, {f_hi:.3g})"
        )
    width = brentq(height_error, lo, hi, xtol=1e-12, rtol=1e-10)
    solved = replace(params, rf_rail_width=float(width))
    residual = height_error(width)
    if abs(residual) > rel_tol * target_height:
        raise LayoutError(f"rail-width calibration stalled, residual {residual:.3g} m")
    return solved


# Nominal trap-size profiles.  L150 uses the as-built numbers (center width at
# the notch 136 um, 21 um gaps, null 150 um above the surface); the smaller
# profiles are uniform rescalings, which by Laplace scale invariance move the
# null height proportionally.
_PROFILE_SCALES = {"L150": 1.0, "L100": 100.0 / 150.0, "L75": 75.0 / 150.0}
_L150_HEIGHT = 150e-6

# Rail width seed for the calibration root find; the solved value is ~2.45e-4 m.
_L150_BASE = FiveRodParams.with_defaults(center_width=136e-6, gap=21e-6,
                                         rf_rail_width=245e-6)


@lru_cache(maxsize=1)
def _calibrated_l150() -> FiveRodParams:
    return calibrate_rail_width(_L150_HEIGHT, _L150_BASE)


def five_rod_profile(name: str, calibrate: bool = True) -> tuple[FiveRodParams, TrapLayout]:
    """Named profile -> (params, layout).

    With calibrate=True the rail width is solved so the L150 null height is
    150 um (the smaller profiles inherit it by scaling).
    """
    if name not in _PROFILE_SCALES:
        raise LayoutError(f"unknown profile {name!r}, expected one of {sorted(_PROFILE_SCALES)}")
    base = _calibrated_l150() if calibrate else _L150_BASE
    s = _PROFILE_SCALES[name]
    params = base.scaled(s)
    return params, build_five_rod(params, characteristic_size_d=s * _L150_HEIGHT)
