"""RF pseudopotential plus DC trap solving.

The effective potential of an ion in the oscillating field is
Psi = q^2 |E_RF|^2 / (4 m Omega^2) (lowest-order pseudopotential); the total
trap is Psi + q Phi_DC.  This module finds the RF null and the total-potential
minimum, and extracts secular frequencies, principal axes, tilt, depth and
Mathieu-q stability parameters from the Hessian at the minimum.

Minimization is damped Gauss-Newton on |E|^2 (respectively Newton on the
total potential) with analytic first derivatives; the reported total-potential
Hessian uses 4th-order central differences of the analytic gradient with step
max(1e-9 m, 1e-6 d), which is exact for quadratic potentials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from .constants import ELEMENTARY_CHARGE, SR88_COOLING_WAVELENGTH, SR88_MASS_KG
from .electrostatics import BasisPotentials, VoltageSet, build_basis
from .geometry import TrapLayout


class UnstableTrapError(RuntimeError):
    """Total-potential Hessian at the stationary point is not confining."""

    def __init__(self, message: str, eigenvalues):
        super().__init__(message)
        self.eigenvalues = np.asarray(eigenvalues)


@dataclass(frozen=True)
class IonSpecies:
    """Trapped ion: mass (kg), charge (C), cooling transition wavelength (m)."""

    mass: float
    charge: float
    wavelength: float
    label: str

    def __post_init__(self):
        if self.mass <= 0.0:
            raise ValueError("mass must be > 0")
        if self.charge == 0.0:
            raise ValueError("charge must be nonzero")


SR88 = IonSpecies(mass=SR88_MASS_KG, charge=ELEMENTARY_CHARGE,
                  wavelength=SR88_COOLING_WAVELENGTH, label="Sr88")

ION_REGISTRY = {"Sr88": SR88}


@dataclass(frozen=True)
class TrapSolution:
    """Solved operating point of the trap (SI units).

    secular_frequencies are sorted ascending; principal_axes holds the
    matching eigenvectors as columns.  tilt_deg is the rotation of the x-z
    principal-axis pair away from the surface coordinate frame.
    """

    r_null: np.ndarray
    r_min: np.ndarray
    secular_frequencies: np.ndarray
    principal_axes: np.ndarray
    tilt_deg: float
    depth_ev: float
    mathieu_q: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def micromotion_displacement(self) -> float:
        return float(np.linalg.norm(self.r_min - self.r_null))

    def to_dict(self) -> dict:
        return {
            "r_null_m": list(map(float, self.r_null)),
            "r_min_m": list(map(float, self.r_min)),
            "secular_frequencies_rad_s": list(map(float, self.secular_frequencies)),
            "secular_frequencies_hz": [float(w / (2.0 * np.pi)) for w in self.secular_frequencies],
            "principal_axes": [list(map(float, row)) for row in self.principal_axes],
            "tilt_deg": float(self.tilt_deg),
            "depth_ev": float(self.depth_ev),
            "mathieu_q": list(map(float, self.mathieu_q)),
            "micromotion_displacement_m": self.micromotion_displacement,
            "metadata": self.metadata,
        }


def _rf_unit_voltages(basis: BasisPotentials) -> dict[str, float]:
    return {eid: 1.0 for eid in basis.rf_ids}


def pseudo_potential(basis: BasisPotentials, volts: VoltageSet,
                     species: IonSpecies, points):
    """Pseudopotential q^2 |E_RF|^2 / (4 m Omega^2) in joules."""
    e_unit = basis.field(_rf_unit_voltages(basis), points)
    coeff = (species.charge * volts.v_rf) ** 2 / (4.0 * species.mass * volts.omega_rf ** 2)
    if e_unit.ndim == 1:
        return float(coeff * np.dot(e_unit, e_unit))
    return coeff * np.einsum("ij,ij->i", e_unit, e_unit)


def total_potential(basis: BasisPotentials, volts: VoltageSet, species: IonSpecies,
                    points, stray_field=None):
    """Pseudopotential plus DC electrostatic energy, in joules."""
    psi = pseudo_potential(basis, volts, species, points)
    phi_dc = basis.potential(basis.dc_voltages(volts), points)
    u = psi + species.charge * phi_dc
    if stray_field is not None:
        pts = np.asarray(points, dtype=float)
        shift = -species.charge * (pts @ np.asarray(stray_field, dtype=float))
        u = u + (float(shift) if pts.ndim == 1 else shift)
    return u


def _total_gradient(basis, volts, species, point, stray_field=None):
    """Analytic gradient of the total potential at one point (newtons)."""
    e_unit = basis.field(_rf_unit_voltages(basis), point)
    j_unit = basis.field_jacobian(_rf_unit_voltages(basis), point)
    coeff = (species.charge * volts.v_rf) ** 2 / (4.0 * species.mass * volts.omega_rf ** 2)
    grad = 2.0 * coeff * (j_unit.T @ e_unit)
    grad -= species.charge * basis.field(basis.dc_voltages(volts), point)
    if stray_field is not None:
        grad = grad - species.charge * np.asarray(stray_field, dtype=float)
    return grad


def _fd4_hessian(grad_fn, point, step: float) -> np.ndarray:
    """4th-order central-difference Jacobian of a gradient function."""
    h = np.zeros((3, 3))
    for j in range(3):
        dp = np.zeros(3)
        dp[j] = step
        g_m2 = grad_fn(point - 2 * dp)
        g_m1 = grad_fn(point - dp)
        g_p1 = grad_fn(point + dp)
        g_p2 = grad_fn(point + 2 * dp)
        h[j] = (g_m2 - 8.0 * g_m1 + 8.0 * g_p1 - g_p2) / (12.0 * step)
    return 0.5 * (h + h.T)


def _rf_gap_windows(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """x windows strictly between disjoint RF x-intervals."""
    if len(intervals) < 2:
        return []
    merged: list[list[float]] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(a[1], b[0]) for a, b in zip(merged[:-1], merged[1:]) if b[0] > a[1]]


def _grid_seeds(f, d: float, rf_extent: float, rf_x_intervals, n: int = 15,
                keep: int = 6) -> list[np.ndarray]:
    """Candidate null seeds: interior local minima of |E|^2 on coarse grids.

    Raw global minima are useless here because |E| also decays toward the far
    field; interior lattice minima isolate genuine null basins.  A dense x-z
    sheet at y = 0 supplements the 3-D grid: linear-trap nulls sit on the
    symmetry plane and their basins can be much narrower than the 3-D grid
    spacing.  The sheet spans the RF electrodes' own lateral extent with
    log-spaced heights, so it finds the null even when the nominal size label
    d is far from the actual null height.  The global argmin is kept as a
    fallback start.
    """
    from scipy.ndimage import minimum_filter

    seeds: list[np.ndarray] = []

    def sheet_minima(xs, zs):
        x2, z2 = np.meshgrid(xs, zs, indexing="ij")
        sheet = np.column_stack([x2.ravel(), np.zeros(x2.size), z2.ravel()])
        vals2 = f(sheet).reshape(x2.shape)
        local2 = (vals2 == minimum_filter(vals2, size=3, mode="nearest"))
        local2[0, :] = local2[-1, :] = False
        local2[:, 0] = local2[:, -1] = False
        idx2 = np.argwhere(local2)
        order2 = np.argsort(vals2[local2.nonzero()])
        return [np.array([xs[i], 0.0, zs[j]]) for i, j in idx2[order2][:keep]]

    seeds += sheet_minima(
        np.linspace(-1.2 * rf_extent, 1.2 * rf_extent, 61),
        np.geomspace(max(1e-3 * rf_extent, 1e-12), 4.0 * max(rf_extent, d), 61))
    # nulls of rail structures sit above the non-RF windows between rails;
    # dedicated sheets at each window's own scale resolve them even when the
    # overall RF extent is orders of magnitude larger
    for lo, hi in _rf_gap_windows(rf_x_intervals):
        w = hi - lo
        seeds += sheet_minima(np.linspace(lo - w, hi + w, 41),
                              np.geomspace(max(1e-2 * w, 1e-12), 20.0 * w, 41))

    xs3 = np.linspace(-2 * d, 2 * d, n)
    ys3 = np.linspace(-2 * d, 2 * d, n)
    zs3 = np.linspace(max(0.1 * d, 1e-9), 4 * d, n)
    grid = np.array(np.meshgrid(xs3, ys3, zs3, indexing="ij")).reshape(3, -1).T
    vals = f(grid).reshape(n, n, n)
    local = (vals == minimum_filter(vals, size=3, mode="nearest"))
    local[0, :, :] = local[-1, :, :] = False
    local[:, 0, :] = local[:, -1, :] = False
    local[:, :, 0] = local[:, :, -1] = False
    idx = np.argwhere(local)
    order = np.argsort(vals[local.nonzero()])
    seeds.extend(grid.reshape(n, n, n, 3)[tuple(i)] for i in idx[order][:keep])
    seeds.append(grid[int(np.argmin(vals))])
    return seeds


def _gauss_newton_null(basis, start, tol_e: float, d: float, max_iter: int):
    volts = _rf_unit_voltages(basis)
    x = np.asarray(start, dtype=float).copy()
    # allow movement on the larger of the label scale and the seed's own
    # height; a run drifting beyond that is chasing the decaying far field
    scale = max(d, 2.0 * abs(start[2]))
    lam = 1e-3
    for iterations in range(1, max_iter + 1):
        e = basis.field(volts, x)
        if np.linalg.norm(e) < tol_e:
            return x, iterations
        jac = basis.field_jacobian(volts, x)
        a = jac.T @ jac
        step = np.linalg.solve(a + lam * np.trace(a) / 3.0 * np.eye(3), -jac.T @ e)
        norm = np.linalg.norm(step)
        if norm > 0.25 * scale:
            step *= 0.25 * scale / norm
        trial = x + step
        trial[2] = max(trial[2], 1e-6 * scale)
        if np.linalg.norm(trial - start) > 3.0 * scale or trial[2] > 6.0 * scale:
            return None, iterations
        if np.linalg.norm(basis.field(volts, trial)) < np.linalg.norm(e):
            x = trial
            lam = max(lam / 3.0, 1e-14)
        else:
            lam *= 10.0
            if lam > 1e12:
                return None, iterations
    return None, max_iter


def find_rf_null(basis: BasisPotentials, seed=None, tol_rel: float = 1e-9,
                 max_iter: int = 80) -> tuple[np.ndarray, dict]:
    """Zero of the RF field by damped Gauss-Newton on |E|^2.

    Starts from a coarse-grid seed (or the one supplied), converging when the
    unit-voltage field drops below tol_rel of the characteristic scale 1/d.
    When multiple nulls exist the lowest one (the trapping null, below the
    escape point) is returned.
    """
    d = basis.characteristic_size_d
    volts = _rf_unit_voltages(basis)

    def e_norm2(pts):
        e = basis.field(volts, np.atleast_2d(pts))
        return np.einsum("ij,ij->i", e, e)

    if seed is not None:
        starts = [np.asarray(seed, dtype=float)]
    else:
        starts = _grid_seeds(e_norm2, d, basis.patch_extent(basis.rf_ids),
                             basis.patch_x_intervals(basis.rf_ids))
    tol_e = tol_rel / d
    found: list[tuple[np.ndarray, int]] = []
    total_iters = 0
    for start in starts:
        x, iters = _gauss_newton_null(basis, start, tol_e, d, max_iter)
        total_iters += iters
        if x is None:
            continue
        if not any(np.linalg.norm(x - prev) < 1e-6 * d for prev, _ in found):
            found.append((x, iters))
    if not found:
        raise RuntimeError("RF-null search failed to converge from any seed")
    x = min(found, key=lambda item: item[0][2])[0]
    info = {"iterations": total_iters,
            "residual_field_per_volt": float(np.linalg.norm(basis.field(volts, x))),
            "candidates": len(found)}
    return x, info


def rf_null_height(layout: TrapLayout, gap_treatment: str = "midline") -> float:
    """Height of the RF null above the surface for a layout (m)."""
    basis = build_basis(layout, gap_treatment)
    null, _ = find_rf_null(basis)
    return float(null[2])


def solve_trap(basis: BasisPotentials, volts: VoltageSet, species: IonSpecies,
               stray_field=None, compensate: bool = False, tol_rel: float = 1e-9,
               max_iter: int = 120) -> TrapSolution:
    """Solve the operating point: null, minimum, frequencies, axes, depth.

    With compensate=True a uniform shim field is added that zeroes the static
    (DC plus stray) field at the RF null, the compensated operating condition
    of a real trap; the applied shim is recorded in the solution metadata.
    Raises UnstableTrapError (carrying the Hessian eigenvalues) when the
    stationary point is not confining.
    """
    d = basis.characteristic_size_d
    q = species.charge
    r_null, null_info = find_rf_null(basis, tol_rel=tol_rel)

    shim = None
    if compensate:
        static = basis.field(basis.dc_voltages(volts), r_null)
        if stray_field is not None:
            static = static + np.asarray(stray_field, dtype=float)
        shim = -static
        stray_field = shim if stray_field is None else np.asarray(stray_field) + shim

    v_char = max(abs(volts.v_rf), *(abs(v) for v in basis.dc_voltages(volts).values()), 1.0)
    grad_tol = tol_rel * abs(q) * v_char / d

    def grad(x):
        return _total_gradient(basis, volts, species, x, stray_field)

    def value(x):
        return float(total_potential(basis, volts, species, x, stray_field))

    def value_batch(pts):
        return total_potential(basis, volts, species, pts, stray_field)

    def approx_hessian(x):
        rf_volts = _rf_unit_voltages(basis)
        j_unit = basis.field_jacobian(rf_volts, x)
        coeff = (q * volts.v_rf) ** 2 / (4.0 * species.mass * volts.omega_rf ** 2)
        h = 2.0 * coeff * (j_unit.T @ j_unit)
        h -= q * basis.field_jacobian(basis.dc_voltages(volts), x)
        return h

    x = r_null.copy()
    lam = 1e-3
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        g = grad(x)
        if np.linalg.norm(g) < grad_tol:
            converged = True
            break
        h = approx_hessian(x)
        scale = max(abs(np.trace(h)) / 3.0, 1e-300)
        step = np.linalg.solve(h + lam * scale * np.eye(3), -g)
        norm = np.linalg.norm(step)
        if norm > 0.25 * d:
            step *= 0.25 * d / norm
        trial = x + step
        trial[2] = max(trial[2], 1e-3 * d)
        if np.linalg.norm(grad(trial)) < np.linalg.norm(g):
            x = trial
            lam = max(lam / 3.0, 1e-14)
        else:
            lam *= 10.0
            if lam > 1e10:
                break
    if not converged and np.linalg.norm(grad(x)) >= grad_tol:
        # derivative-free fallback for awkward configurations
        res = scipy_minimize(value, x, method="Nelder-Mead",
                             options={"xatol": 1e-12 * d, "fatol": 1e-30, "maxiter": 4000})
        x = np.asarray(res.x)
        x[2] = max(x[2], 1e-3 * d)
        if np.linalg.norm(grad(x)) >= 100.0 * grad_tol:
            raise RuntimeError("total-potential minimization failed to converge")

    fd_step = max(1e-9, 1e-6 * d)
    hess = _fd4_hessian(grad, x, fd_step)
    eigvals, eigvecs = np.linalg.eigh(hess)
    if np.any(eigvals <= 0.0):
        raise UnstableTrapError(
            f"unstable configuration: Hessian eigenvalues {eigvals} J/m^2", eigvals)
    freqs = np.sqrt(eigvals / species.mass)

    tilt = math.degrees(0.5 * math.atan2(2.0 * hess[0, 2], hess[0, 0] - hess[2, 2]))
    tilt = abs(tilt)
    if tilt > 45.0:
        tilt = 90.0 - tilt

    rf_hess_unit = basis.field_jacobian(_rf_unit_voltages(basis), x)
    # field Jacobian = -hess(phi); Mathieu q from the curvature of phi_RF
    # along the RF quadrupole's own principal directions (its eigenframe);
    # the trap principal axes sit ~45 deg off the RF axes in a five-rod trap,
    # which would make the diagonal there misleadingly small
    phi_rf_hess = -rf_hess_unit
    rf_curvatures = np.linalg.eigvalsh(phi_rf_hess)
    mathieu_q = 2.0 * abs(q) * abs(volts.v_rf) * np.abs(rf_curvatures) / (
        species.mass * volts.omega_rf ** 2)

    depth = _escape_depth(value_batch, x, eigvecs, d)

    metadata = {
        "null_iterations": null_info["iterations"],
        "minimize_iterations": iterations,
        "gradient_tolerance_n": grad_tol,
        "residual_gradient_n": float(np.linalg.norm(grad(x))),
        "hessian_fd_step_m": fd_step,
        "gap_treatment": basis.gap_treatment,
        "mathieu_q_flag": bool(np.any(mathieu_q > 0.3)),
        "compensation_field_v_m": None if shim is None else list(map(float, shim)),
    }
    if np.any(mathieu_q >= 0.9):
        raise UnstableTrapError(
            f"Mathieu q {mathieu_q} outside pseudopotential validity", eigvals)

    return TrapSolution(r_null=r_null, r_min=x, secular_frequencies=freqs,
                        principal_axes=eigvecs, tilt_deg=tilt,
                        depth_ev=depth / ELEMENTARY_CHARGE,
                        mathieu_q=mathieu_q, metadata=metadata)


def _escape_depth(value_batch, r_min: np.ndarray, axes: np.ndarray, d: float) -> float:
    """Lowest barrier along +-principal axes and +-z, in joules.

    Escape probing: sample the potential along each ray out to several trap
    sizes and take the highest point passed; the depth is the smallest such
    barrier over all probe directions.
    """
    u0 = float(value_batch(r_min))
    directions = [axes[:, i] for i in range(3)]
    directions += [-axes[:, i] for i in range(3)]
    directions += [np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, -1.0])]
    t = np.linspace(d / 200.0, 6.0 * d, 1200)
    barriers = []
    for direction in directions:
        pts = r_min[None, :] + t[:, None] * direction[None, :]
        pts = pts[pts[:, 2] > 0.02 * d]
        if len(pts) == 0:
            continue
        vals = value_batch(pts)
        barriers.append(float(np.max(vals) - u0))
    return min(barriers) if barriers else float("inf")


def micromotion_displacement(solution: TrapSolution) -> float:
    """|r_min - r_null|; zero for a compensated trap."""
    return solution.micromotion_displacement
