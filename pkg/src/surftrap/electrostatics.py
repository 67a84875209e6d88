"""Unit-voltage electrostatics above a grounded plane with polygonal patches.

For a patch held at 1 V in an otherwise grounded plane, the potential in the
half space z > 0 is the solid angle the patch subtends at the observation
point divided by 2*pi.  This is exact for the gapless plane model and twice
differentiable in closed form:

* potential: Van Oosterom-Strackee signed solid angles summed over a
  triangle fan (valid for any simple polygon, convex or not);
* gradient: the solid-angle gradient is a line integral around the polygon
  boundary with a closed form per straight edge (the numerically stable
  two-endpoint form, well conditioned at small subtended angles);
* Hessian: the edge terms differentiated analytically, so the Laplace
  trace vanishes to machine precision.

Everything is vectorized over evaluation points; evaluators are immutable
after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
from shapely import STRtree
from shapely.geometry import JOIN_STYLE, MultiPoint, Point
from shapely.geometry.polygon import orient as shapely_orient
from shapely.ops import unary_union, voronoi_diagram

from .geometry import LayoutError, TrapLayout


class DomainError(ValueError):
    """Evaluation point outside the physical half space z > 0."""


def _check_points(points) -> tuple[np.ndarray, bool]:
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != 3:
        raise ValueError("points must have shape (3,) or (N, 3)")
    if np.any(pts[:, 2] <= 0.0):
        raise DomainError("evaluation points must have z > 0")
    return pts, single


def _vertices3(polygon) -> np.ndarray:
    verts = np.asarray(polygon, dtype=float)
    if verts.ndim != 2 or verts.shape[0] < 3 or verts.shape[1] != 2:
        raise ValueError("polygon must be an (M, 2) vertex array")
    # force counterclockwise so the solid-angle sign is fixed
    x, y = verts[:, 0], verts[:, 1]
    if 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) < 0.0:
        verts = verts[::-1]
    return np.column_stack([verts, np.zeros(len(verts))])


def _signed_solid_angle(verts3: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Signed solid angle of the polygon seen from each point (fan sum)."""
    omega = np.zeros(len(pts))
    a = verts3[0] - pts
    la = np.linalg.norm(a, axis=1)
    for i in range(1, len(verts3) - 1):
        b = verts3[i] - pts
        c = verts3[i + 1] - pts
        lb = np.linalg.norm(b, axis=1)
        lc = np.linalg.norm(c, axis=1)
        triple = np.einsum("ij,ij->i", a, np.cross(b, c))
        denom = (la * lb * lc + np.einsum("ij,ij->i", a, b) * lc
                 + np.einsum("ij,ij->i", a, c) * lb
                 + np.einsum("ij,ij->i", b, c) * la)
        omega += 2.0 * np.arctan2(triple, denom)
    return omega


def _edge_terms(verts3: np.ndarray, pts: np.ndarray, want_hessian: bool):
    """Boundary line integral of the solid-angle gradient, and its Jacobian.

    Per edge A->B, with R_i = A - P and R_f = B - P, the gradient term is
        (R_i x R_f) (r_i + r_f) / (r_i r_f (r_i r_f + R_i . R_f)),
    which is finite everywhere off the edge itself.  The Jacobian follows by
    direct differentiation with dR/dP = -I.
    """
    n = len(pts)
    grad = np.zeros((n, 3))
    hess = np.zeros((n, 3, 3)) if want_hessian else None
    eye = np.eye(3)
    for k in range(len(verts3)):
        A = verts3[k]
        B = verts3[(k + 1) % len(verts3)]
        ri_v = A - pts
        rf_v = B - pts
        ri = np.linalg.norm(ri_v, axis=1)
        rf = np.linalg.norm(rf_v, axis=1)
        dd = np.einsum("ij,ij->i", ri_v, rf_v)
        m = ri * rf
        s1 = ri + rf
        D = m * (m + dd)
        u = np.cross(ri_v, rf_v)
        c = s1 / D
        grad += c[:, None] * u
        if want_hessian:
            # dS[:, j] = d s1 / d P_j, similarly for the other scalars
            dS = -(ri_v / ri[:, None] + rf_v / rf[:, None])
            dM = -(rf[:, None] * ri_v / ri[:, None] + ri[:, None] * rf_v / rf[:, None])
            dDD = -(ri_v + rf_v)
            dD = dM * (m + dd)[:, None] + m[:, None] * (dM + dDD)
            dc = (dS * D[:, None] - s1[:, None] * dD) / (D ** 2)[:, None]
            w = A - B
            du = np.cross(eye, w)  # du[j] = e_j x (A - B)
            hess += dc[:, :, None] * u[:, None, :] + c[:, None, None] * du[None, :, :]
    return grad, hess


def polygon_potential(polygon, points):
    """Dimensionless potential of a unit-voltage patch, phi in [0, 1]."""
    pts, single = _check_points(points)
    phi = -_signed_solid_angle(_vertices3(polygon), pts) / (2.0 * np.pi)
    return float(phi[0]) if single else phi


def polygon_gradient(polygon, points):
    """grad(phi) in 1/m, shape (N, 3)."""
    pts, single = _check_points(points)
    grad, _ = _edge_terms(_vertices3(polygon), pts, want_hessian=False)
    grad = -grad / (2.0 * np.pi)
    return grad[0] if single else grad


def polygon_hessian(polygon, points):
    """grad grad (phi) in 1/m^2, shape (N, 3, 3); trace is zero (Laplace)."""
    pts, single = _check_points(points)
    _, hess = _edge_terms(_vertices3(polygon), pts, want_hessian=True)
    hess = -hess / (2.0 * np.pi)
    hess = 0.5 * (hess + np.swapaxes(hess, 1, 2))
    return hess[0] if single else hess


def patch_potential(polygon, point):
    """Solid angle over 2*pi for a single polygonal patch (unit voltage)."""
    return polygon_potential(polygon, point)


@dataclass(frozen=True)
class VoltageSet:
    """Drive amplitudes: RF (amplitude, not RMS) plus per-role DC voltages."""

    v_rf: float
    omega_rf: float
    v1: float = 0.0
    v2: float = 0.0
    v3: float = 0.0
    v4: float = 0.0
    v_center: float = 0.0

    def __post_init__(self):
        if self.omega_rf <= 0.0:
            raise ValueError("omega_rf must be > 0")

    def dc_role_voltages(self) -> dict[str, float]:
        return {"DC1": self.v1, "DC2": self.v2, "DC3": self.v3, "DC4": self.v4,
                "CENTER": self.v_center, "GROUND": 0.0}


GAP_TREATMENTS = ("midline", "exclude")


class BasisPotentials:
    """Per-electrode unit-voltage evaluators for a layout.

    phi/grad/hess evaluate one electrode; potential/field/field_jacobian
    evaluate a weighted superposition given per-id voltages.  Field is -grad
    of the summed potential, the field Jacobian is -hess.
    """

    def __init__(self, patches: dict[str, tuple[np.ndarray, ...]],
                 roles: dict[str, str], characteristic_size_d: float,
                 gap_treatment: str):
        self._patches = patches
        self.roles = dict(roles)
        self.characteristic_size_d = characteristic_size_d
        self.gap_treatment = gap_treatment

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(self._patches)

    def ids_for_role(self, role: str) -> tuple[str, ...]:
        return tuple(i for i, r in self.roles.items() if r == role)

    @property
    def rf_ids(self) -> tuple[str, ...]:
        return self.ids_for_role("RF")

    @property
    def dc_ids(self) -> tuple[str, ...]:
        return tuple(i for i, r in self.roles.items() if r.startswith("DC"))

    def patch_extent(self, ids: Iterable[str]) -> float:
        """Largest |x| or |y| over the vertices of the given electrodes (m)."""
        return max(float(np.abs(poly[:, :2]).max())
                   for eid in ids for poly in self._patches[eid])

    def patch_x_intervals(self, ids: Iterable[str]) -> list[tuple[float, float]]:
        """Per-patch x extents (m) of the given electrodes."""
        return [(float(poly[:, 0].min()), float(poly[:, 0].max()))
                for eid in ids for poly in self._patches[eid]]

    def dc_voltages(self, volts: VoltageSet) -> dict[str, float]:
        by_role = volts.dc_role_voltages()
        return {i: by_role[r] for i, r in self.roles.items() if r != "RF"}

    def phi(self, eid: str, points):
        pts, single = _check_points(points)
        out = np.zeros(len(pts))
        for poly in self._patches[eid]:
            out -= _signed_solid_angle(poly, pts)
        out /= 2.0 * np.pi
        return float(out[0]) if single else out

    def grad(self, eid: str, points):
        pts, single = _check_points(points)
        out = np.zeros((len(pts), 3))
        for poly in self._patches[eid]:
            g, _ = _edge_terms(poly, pts, want_hessian=False)
            out -= g
        out /= 2.0 * np.pi
        return out[0] if single else out

    def hess(self, eid: str, points):
        pts, single = _check_points(points)
        out = np.zeros((len(pts), 3, 3))
        for poly in self._patches[eid]:
            _, h = _edge_terms(poly, pts, want_hessian=True)
            out -= h
        out /= 2.0 * np.pi
        out = 0.5 * (out + np.swapaxes(out, 1, 2))
        return out[0] if single else out

    def potential(self, voltages: Mapping[str, float], points):
        pts, single = _check_points(points)
        out = np.zeros(len(pts))
        for eid, v in voltages.items():
            if v != 0.0:
                out += v * self.phi(eid, pts)
        return float(out[0]) if single else out

    def field(self, voltages: Mapping[str, float], points):
        pts, single = _check_points(points)
        out = np.zeros((len(pts), 3))
        for eid, v in voltages.items():
            if v != 0.0:
                out -= v * self.grad(eid, pts)
        return out[0] if single else out

    def field_jacobian(self, voltages: Mapping[str, float], points):
        pts, single = _check_points(points)
        out = np.zeros((len(pts), 3, 3))
        for eid, v in voltages.items():
            if v != 0.0:
                out -= v * self.hess(eid, pts)
        return out[0] if single else out


def _densify_ring(coords: np.ndarray, step: float) -> np.ndarray:
    pts = []
    for a, b in zip(coords[:-1], coords[1:]):
        seg = b - a
        n = max(int(np.ceil(np.linalg.norm(seg) / step)), 1)
        for k in range(n):
            pts.append(a + seg * (k / n))
    return np.asarray(pts)


def _midline_patches(layout: TrapLayout) -> dict[str, tuple[np.ndarray, ...]]:
    """Expand every electrode to the gap midline (nearest-electrode split).

    The midline is the locus equidistant from neighboring electrodes; every
    gap point is assigned to its nearest electrode, so uneven gaps (the notch)
    move the effective boundary accordingly.  Computed from a Voronoi diagram
    of densely sampled electrode boundaries, clipped so exterior edges grow by
    half a gap toward the surrounding ground plane, then simplified back to a
    compact polygon.
    """
    gap = layout.gap_width
    shapes = [el.shape for el in layout.electrodes]
    metal = unary_union(shapes)
    # close interior pockets (inter-electrode gaps, notch) before adding the
    # half-gap exterior margin; the closing radius bounds the pocket width
    # that still counts as "gap" rather than open ground plane
    closing = 5.0 * gap
    clip = metal.buffer(closing, join_style=JOIN_STYLE.mitre).buffer(
        -(closing - gap / 2.0), join_style=JOIN_STYLE.mitre)

    total_perimeter = sum(s.exterior.length for s in shapes)
    step = max(gap / 3.0, total_perimeter / 4000.0)
    samples = []
    owner = []
    for idx, shape in enumerate(shapes):
        ring = np.asarray(shape.exterior.coords)
        dense = _densify_ring(ring, step)
        samples.append(dense)
        owner.extend([idx] * len(dense))
    all_pts = np.concatenate(samples)
    owner = np.asarray(owner)
    # deterministic sub-tolerance jitter; exactly collinear generators make
    # GEOS produce non-noded cell boundaries that break the union step
    jitter = np.random.default_rng(1234).uniform(-1.0, 1.0, all_pts.shape)
    all_pts = all_pts + 1e-5 * step * jitter

    cells = list(voronoi_diagram(MultiPoint(all_pts),
                                 envelope=clip.buffer(5 * gap)).geoms)
    tree = STRtree(cells)
    cell_owner = np.full(len(cells), -1)
    pt_idx, cell_idx = tree.query([Point(p) for p in all_pts], predicate="within")
    cell_owner[cell_idx] = owner[pt_idx]

    patches: dict[str, tuple[np.ndarray, ...]] = {}
    sliver = (gap / 10.0) ** 2
    for idx, el in enumerate(layout.electrodes):
        region = unary_union([c for c, o in zip(cells, cell_owner) if o == idx])
        expanded = region.intersection(clip).union(shapes[idx])
        # tolerance sits above the point-sampling scallop amplitude but well
        # below the gap, so straight midlines collapse to single edges
        expanded = expanded.simplify(gap / 8.0, preserve_topology=True)
        out = []
        for poly in _polygons_of(expanded):
            if poly.area < sliver:
                continue
            poly = shapely_orient(poly, sign=1.0)
            coords = np.asarray(poly.exterior.coords)[:-1]
            out.append(np.column_stack([coords, np.zeros(len(coords))]))
        if not out:
            raise LayoutError(f"midline expansion lost electrode {el.id!r}")
        patches[el.id] = tuple(out)
    return patches


def _polygons_of(geom):
    if geom.geom_type == "Polygon":
        return [geom]
    if geom.geom_type in ("MultiPolygon", "GeometryCollection"):
        out = []
        for g in geom.geoms:
            out.extend(_polygons_of(g))
        return out
    return []


def build_basis(layout: TrapLayout, gap_treatment: str = "midline") -> BasisPotentials:
    """Evaluators for every electrode of a layout.

    midline: each polygon is expanded to the gap midline (nearest-electrode
    assignment of the gap area, converging to a gapless cover of the plane);
    exclude: gaps are left as grounded plane.
    """
    if gap_treatment not in GAP_TREATMENTS:
        raise LayoutError(f"gap_treatment must be one of {GAP_TREATMENTS}")
    if gap_treatment == "midline" and layout.gap_width > 0.0:
        patches = _midline_patches(layout)
    else:
        patches = {}
        for el in layout.electrodes:
            verts = el.vertices()
            patches[el.id] = (np.column_stack([verts, np.zeros(len(verts))]),)
    roles = {el.id: el.role for el in layout.electrodes}
    return BasisPotentials(patches, roles, layout.characteristic_size_d, gap_treatment)


def field_noise_transfer(basis: BasisPotentials, point,
                         electrode_ids: Iterable[str] | None = None,
                         mode: str = "sum") -> float:
    """Voltage-to-field transfer magnitude (1/m) for a set of electrodes.

    mode="sum" assumes fully correlated noise on the subset (coherent vector
    sum of the unit-voltage fields); mode="rss" assumes uncorrelated noise
    (root sum of squares).  Squaring the result and multiplying by a voltage
    noise density S_V gives the field noise density at the point.
    """
    ids = tuple(electrode_ids) if electrode_ids is not None else basis.dc_ids
    if not ids:
        return 0.0
    grads = np.array([basis.grad(eid, point) for eid in ids])
    if mode == "sum":
        return float(np.linalg.norm(grads.sum(axis=0)))
    if mode == "rss":
        return float(np.sqrt(np.sum(np.linalg.norm(grads, axis=1) ** 2)))
    raise ValueError("mode must be 'sum' or 'rss'")
