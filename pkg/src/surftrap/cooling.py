"""Single-mode motional dynamics in Fock space.

The electronic state is adiabatically eliminated: each red-sideband pulse
transfers population n -> n-1 with probability sin^2(eta sqrt(n) Omega0 t / 2)
and the repump resets the internal state perfectly, so the motional state
stays a classical probability vector over Fock states.  Heating is the
infinite-temperature-reservoir birth-death process with rates
ndot*(n+1) up and ndot*n down, for which d<n>/dt = ndot exactly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .constants import BOLTZMANN, HBAR
from .pseudopotential import IonSpecies

LEAKAGE_FLAG_THRESHOLD = 1e-6
PROBABILITY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class FockDistribution:
    """Occupation probabilities p_n for n = 0..N_max.

    ``leakage`` is the probability mass lost to truncation when the
    distribution was built (before renormalization); ``leakage_flag`` marks
    distributions where it exceeded 1e-6.
    """

    p: np.ndarray
    leakage: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        object.__setattr__(self, "p", p)
        if p.ndim != 1 or len(p) == 0:
            raise ValueError("p must be a non-empty 1-D array")
        if np.any(p < -PROBABILITY_TOLERANCE):
            raise ValueError("probabilities must be >= 0")
        total = p.sum()
        if abs(total - 1.0) > PROBABILITY_TOLERANCE:
            raise ValueError(f"probabilities must sum to 1 (got {total!r})")

    @property
    def n_max(self) -> int:
        return len(self.p) - 1

    @property
    def nbar(self) -> float:
        return float(np.arange(len(self.p)) @ self.p)

    @property
    def ground_fidelity(self) -> float:
        return float(self.p[0])

    @property
    def leakage_flag(self) -> bool:
        return bool(self.leakage > LEAKAGE_FLAG_THRESHOLD)

    @classmethod
    def from_unnormalized(cls, raw: np.ndarray) -> "FockDistribution":
        raw = np.clip(np.asarray(raw, dtype=float), 0.0, None)
        total = raw.sum()
        if total <= 0.0:
            raise ValueError("distribution has no probability mass")
        return cls(raw / total, leakage=max(0.0, 1.0 - total))


def lamb_dicke(species: IonSpecies, wavelength: float, omega: float,
               projection_angle_rad: float = 0.0) -> float:
    """eta = k cos(angle) sqrt(hbar / (2 m omega))."""
    if omega <= 0.0:
        raise ValueError("omega must be > 0")
    k = 2.0 * math.pi / wavelength
    return k * math.cos(projection_angle_rad) * math.sqrt(
        HBAR / (2.0 * species.mass * omega))


def thermal_nbar(temperature: float, omega: float) -> float:
    """Bose occupation 1/(exp(hbar omega / k_B T) - 1)."""
    if temperature <= 0.0:
        return 0.0
    return 1.0 / math.expm1(HBAR * omega / (BOLTZMANN * temperature))


def thermal_distribution(nbar: float, n_max: int = 200) -> FockDistribution:
    """Thermal state p_n = nbar^n / (1+nbar)^(n+1), truncated at n_max."""
    if nbar < 0.0:
        raise ValueError("nbar must be >= 0")
    if nbar == 0.0:
        p = np.zeros(n_max + 1)
        p[0] = 1.0
        return FockDistribution(p)
    n = np.arange(n_max + 1)
    log_p = n * math.log(nbar) - (n + 1) * math.log(1.0 + nbar)
    return FockDistribution.from_unnormalized(np.exp(log_p))


def red_sideband_rabi(eta: float, omega0: float, n) -> np.ndarray:
    """Rabi frequency of the |n> -> |n-1> red sideband, eta sqrt(n) Omega0."""
    return eta * np.sqrt(np.asarray(n, dtype=float)) * omega0


def apply_red_sideband_pulse(dist: FockDistribution, eta: float, omega0: float,
                             duration: float) -> FockDistribution:
    """One red-sideband pulse with perfect repump.

    Population moves n -> n-1 with probability sin^2(Omega_{n,n-1} t / 2);
    the ground state is dark.
    """
    p = dist.p
    n = np.arange(len(p))
    transfer = np.sin(red_sideband_rabi(eta, omega0, n) * duration / 2.0) ** 2
    transfer[0] = 0.0
    moved = p * transfer
    out = p - moved
    out[:-1] += moved[1:]
    return FockDistribution(out, leakage=dist.leakage)


@dataclass(frozen=True)
class CoolingSequence:
    """Pulsed red-sideband cooling schedule.

    Default schedule: pulses ramped linearly from t_start to t_end; the
    default carrier Rabi frequency makes the final pulses pi pulses on the
    n=1 -> 0 transition.
    """

    durations: tuple[float, ...]
    carrier_rabi: float
    lamb_dicke: float
    perfect_repump: bool = True

    def __post_init__(self):
        if any(t <= 0.0 for t in self.durations):
            raise ValueError("pulse durations must be > 0")
        if not 0.0 < self.lamb_dicke < 1.0:
            raise ValueError("lamb_dicke must be in (0, 1)")
        if self.carrier_rabi <= 0.0:
            raise ValueError("carrier_rabi must be > 0")
        if not self.perfect_repump:
            raise NotImplementedError("only perfect repump is modeled")

    @classmethod
    def ramped(cls, n_pulses: int = 150, t_start: float = 10e-6, t_end: float = 25e-6,
               eta: float = 0.071, carrier_rabi: float | None = None,
               profile: str = "linear") -> "CoolingSequence":
        if n_pulses < 0:
            raise ValueError("n_pulses must be >= 0")
        if carrier_rabi is None:
            # 5 pi on n=1 for the final pulse: an odd multiple keeps those
            # pulses fully transferring on n=1 (sin^2(5 pi/2) = 1) while the
            # larger drive wraps the high-n transfer phases fast enough that
            # no Fock state stays near-dark across the whole ramp; a plain
            # pi/(eta t_end) drive strands ~18% of a nbar=10 thermal state
            carrier_rabi = 5.0 * math.pi / (eta * t_end)
        if n_pulses == 0:
            durations = ()
        elif n_pulses == 1:
            durations = (t_start,)
        elif profile == "linear":
            durations = tuple(np.linspace(t_start, t_end, n_pulses))
        elif profile == "geometric":
            durations = tuple(np.geomspace(t_start, t_end, n_pulses))
        else:
            raise ValueError("profile must be 'linear' or 'geometric'")
        return cls(durations=durations, carrier_rabi=carrier_rabi, lamb_dicke=eta)

    @property
    def total_time(self) -> float:
        return float(sum(self.durations))


def run_cooling(dist: FockDistribution, seq: CoolingSequence) -> FockDistribution:
    """Apply the pulse sequence; returns the final distribution."""
    out = dist
    for t in seq.durations:
        out = apply_red_sideband_pulse(out, seq.lamb_dicke, seq.carrier_rabi, t)
    return out


def cooling_trace(dist: FockDistribution, seq: CoolingSequence):
    """(pulse_index, p0, nbar) after every pulse, pulse 0 = initial state."""
    rows = [(0, dist.ground_fidelity, dist.nbar)]
    out = dist
    for i, t in enumerate(seq.durations, start=1):
        out = apply_red_sideband_pulse(out, seq.lamb_dicke, seq.carrier_rabi, t)
        rows.append((i, out.ground_fidelity, out.nbar))
    return rows, out


def _heating_rate_matrix_mul(ndot: float, p: np.ndarray) -> np.ndarray:
    n = np.arange(len(p))
    dp = np.empty_like(p)
    dp[:] = -(2.0 * n + 1.0) * p
    dp[1:] += n[1:] * p[:-1]          # birth from n-1: rate ndot * n
    dp[:-1] += (n[:-1] + 1.0) * p[1:]  # death from n+1: rate ndot * (n+1)
    return ndot * dp


def _evolve_master(dist: FockDistribution, ndot: float, t: float) -> FockDistribution:
    sol = solve_ivp(lambda _, p: _heating_rate_matrix_mul(ndot, p),
                    (0.0, t), dist.p, method="RK45", rtol=1e-9, atol=1e-13)
    if not sol.success:
        raise RuntimeError(f"master-equation integration failed: {sol.message}")
    return FockDistribution.from_unnormalized(sol.y[:, -1])


def _sample_initial(u: float, cdf: np.ndarray) -> int:
    return int(np.searchsorted(cdf, u, side="right"))


def _trajectory_final_n(rng: np.random.Generator, n0: int, ndot: float, t: float) -> int:
    n, elapsed = n0, 0.0
    while True:
        rate = ndot * (2 * n + 1)
        elapsed += rng.exponential(1.0 / rate)
        if elapsed >= t:
            return n
        if rng.random() * (2 * n + 1) < n + 1:
            n += 1
        else:
            n -= 1


def _evolve_monte_carlo(dist: FockDistribution, ndot: float, t: float,
                        trajectories: int, seed: int, threads: int) -> FockDistribution:
    cdf = np.cumsum(dist.p)
    n_max = dist.n_max
    children = np.random.SeedSequence(seed).spawn(trajectories)

    def run_chunk(chunk):
        counts = np.zeros(4 * (n_max + 1), dtype=np.int64)
        for child in chunk:
            rng = np.random.default_rng(child)
            n0 = _sample_initial(rng.random(), cdf)
            nf = _trajectory_final_n(rng, n0, ndot, t)
            if nf >= len(counts):
                counts = np.concatenate([counts, np.zeros(nf + 1 - len(counts), dtype=np.int64)])
            counts[nf] += 1
        return counts

    if threads > 1:
        chunks = [children[i::threads] for i in range(threads)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_chunk, chunks))
        size = max(len(c) for c in results)
        counts = np.zeros(size, dtype=np.int64)
        for c in results:
            counts[:len(c)] += c
    else:
        counts = run_chunk(children)

    counts = np.trim_zeros(counts, trim="b")
    if len(counts) < len(dist.p):
        counts = np.concatenate([counts, np.zeros(len(dist.p) - len(counts), dtype=np.int64)])
    return FockDistribution(counts / counts.sum())


def evolve_heating(dist: FockDistribution, ndot: float, t: float,
                   method: str = "master_equation", trajectories: int = 100_000,
                   seed: int | None = None, threads: int = 1) -> FockDistribution:
    """Evolve under the infinite-temperature birth-death heating process.

    method="master_equation" integrates the rate equations (adaptive RK);
    method="monte_carlo" samples jump trajectories with per-trajectory
    streams spawned deterministically from ``seed``, so results are
    reproducible for a fixed seed at any thread count.
    """
    if ndot < 0.0 or t < 0.0:
        raise ValueError("ndot and t must be >= 0")
    if ndot == 0.0 or t == 0.0:
        return dist
    if method == "master_equation":
        out = _evolve_master(dist, ndot, t)
    elif method == "monte_carlo":
        if seed is None:
            raise ValueError("monte_carlo evolution requires a seed")
        out = _evolve_monte_carlo(dist, ndot, t, trajectories, seed, threads)
    else:
        raise ValueError("method must be 'master_equation' or 'monte_carlo'")
    if out.leakage_flag:
        expanded = np.concatenate([dist.p, np.zeros(len(dist.p))])
        return evolve_heating(FockDistribution(expanded, leakage=dist.leakage),
                              ndot, t, method, trajectories, seed, threads)
    return out
