"""Physical model assembly: the state-independent Gaussian double well, the
per-channel contact interaction, and time-dependent well trajectories.

Energies are in natural units hbar^2/(m sigma^2); the well-bottom curvature
frequency omega0 = sqrt(V0/(m sigma^2)) is used as the reporting unit
(energies divided by omega0 are "in units of hbar*omega0").
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .grid import Grid1D, GridError

__all__ = [
    "ChannelId",
    "WellConfig",
    "TrajectorySpec",
    "PotentialError",
    "double_well",
    "single_hamiltonian_bands",
    "build_single_hamiltonian",
    "build_pair_hamiltonian",
    "pair_diagonal_indices",
    "trajectory_d",
]


class PotentialError(ValueError):
    """Invalid physical configuration or trajectory evaluation."""


class ChannelId(str, enum.Enum):
    """Internal two-qubit channel selecting the contact-interaction strength.

    The qubit channels c00, cPsiPlus and c11 pair with exchange-symmetric
    spatial states; cPsiMinus pairs with antisymmetric spatial states, on
    which the contact term is inert (it only samples the diagonal x_a = x_b
    where antisymmetric amplitudes vanish).
    """

    C00 = "c00"
    PSI_PLUS = "cPsiPlus"
    C11 = "c11"
    PSI_MINUS = "cPsiMinus"

    @property
    def scattering_key(self) -> str:
        if self is ChannelId.C00:
            return "00"
        if self is ChannelId.C11:
            return "11"
        return "01sym"


_DEFAULT_SCATTERING = {"00": 0.1, "01sym": 0.1, "11": 0.1}


@dataclass(frozen=True)
class WellConfig:
    """All physical parameters of the two-atom double-well model.

    Parameters
    ----------
    v0 : depth of each Gaussian well, > 0 (units hbar^2 / m sigma^2).
    sigma : Gaussian width; 1 in natural units.
    scattering_lengths : per-channel scattering lengths a_ij in units of
        sigma, keyed by "00", "01sym", "11"; negative values model
        attractive interactions.
    omega_perp_w0 : transverse confinement frequency in units of omega0.
    """

    v0: float = 30.0
    sigma: float = 1.0
    scattering_lengths: Mapping[str, float] = field(
        default_factory=lambda: dict(_DEFAULT_SCATTERING)
    )
    omega_perp_w0: float = 5.0

    def __post_init__(self):
        if self.v0 <= 0:
            raise PotentialError(f"v0 must be positive, got {self.v0}")
        if self.sigma <= 0:
            raise PotentialError(f"sigma must be positive, got {self.sigma}")
        if self.omega_perp_w0 <= 0:
            raise PotentialError("omega_perp_w0 must be positive")
        missing = {"00", "01sym", "11"} - set(self.scattering_lengths)
        if missing:
            raise PotentialError(f"scattering_lengths missing channels {sorted(missing)}")
        object.__setattr__(self, "scattering_lengths", dict(self.scattering_lengths))

    @property
    def omega0(self) -> float:
        """Harmonic frequency of one Gaussian well's quadratic bottom."""
        return math.sqrt(self.v0) / self.sigma

    @property
    def omega_perp(self) -> float:
        return self.omega_perp_w0 * self.omega0

    def g(self, channel: ChannelId) -> float:
        """Contact strength g_ij = 2 a_ij hbar omega_perp for the channel."""
        a = self.scattering_lengths[ChannelId(channel).scattering_key]
        return 2.0 * a * self.omega_perp


def double_well(x, d: float, cfg: WellConfig):
    """V(x, d) = -V0 exp(-(x-d/2)^2/2s^2) - V0 exp(-(x+d/2)^2/2s^2)."""
    s2 = 2.0 * cfg.sigma**2
    x = np.asarray(x, dtype=float)
    v = -cfg.v0 * (np.exp(-((x - d / 2.0) ** 2) / s2) + np.exp(-((x + d / 2.0) ** 2) / s2))
    return v if v.shape else float(v)


def _check_extent(grid: Grid1D, d: float, cfg: WellConfig) -> None:
    need = d / 2.0 + 6.0 * cfg.sigma
    if grid.x_max < need:
        raise PotentialError(
            f"grid extent {grid.x_max} too small for separation d={d}; need >= {need}"
        )


def single_hamiltonian_bands(grid: Grid1D, d: float, cfg: WellConfig):
    """(diagonal, off-diagonal) bands of the single-particle Hamiltonian.

    Kinetic term is the second-order central difference with hard-wall
    boundaries; the matrix is real symmetric tridiagonal by construction.
    """
    _check_extent(grid, d, cfg)
    dx = grid.dx
    diag = 1.0 / dx**2 + double_well(grid.points, d, cfg)
    off = np.full(grid.n_points - 1, -0.5 / dx**2)
    return diag, off


def build_single_hamiltonian(grid: Grid1D, d: float, cfg: WellConfig) -> sp.csr_matrix:
    """Sparse single-particle Hamiltonian H = p^2/2m + V(x, d)."""
    diag, off = single_hamiltonian_bands(grid, d, cfg)
    return sp.diags([off, diag, off], [-1, 0, 1], format="csr")


def pair_diagonal_indices(n: int) -> np.ndarray:
    """Flat indices of the coincidence cells x_a = x_b in row-major order."""
    return np.arange(n) * n + np.arange(n)


def build_pair_hamiltonian(
    grid: Grid1D,
    d: float,
    channel: ChannelId,
    cfg: WellConfig,
    delta_mode: str = "kronecker",
) -> sp.csc_matrix:
    """Two-particle Hamiltonian H1 (x) I + I (x) H1 + g D on the square grid.

    D is the discretized contact interaction: weight 1/dx on the coincidence
    diagonal for the default "kronecker" mode, or a narrow Gaussian of width
    2 dx (mode "gaussian") used for convergence cross-checks.  The channel
    cPsiMinus is assembled with its g like any other; it is inert on
    antisymmetric states by symmetry, not by zeroing.
    """
    channel = ChannelId(channel)
    h1 = build_single_hamiltonian(grid, d, cfg)
    eye = sp.identity(grid.n_points, format="csr")
    h2 = sp.kron(h1, eye) + sp.kron(eye, h1)
    g = cfg.g(channel)
    if g != 0.0:
        n = grid.n_points
        if delta_mode == "kronecker":
            idx = pair_diagonal_indices(n)
            delta = sp.csr_matrix(
                (np.full(n, g / grid.dx), (idx, idx)), shape=(n * n, n * n)
            )
        elif delta_mode == "gaussian":
            x = grid.points
            w = 2.0 * grid.dx
            rows, cols, vals = [], [], []
            # band |x_a - x_b| <= 4w is enough for double precision
            kmax = int(np.ceil(4.0 * w / grid.dx))
            for k in range(-kmax, kmax + 1):
                i = np.arange(max(0, -k), min(n, n - k))
                j = i + k
                u = x[i] - x[j]
                vals.append(g * np.exp(-(u**2) / (2 * w**2)) / (w * math.sqrt(2 * math.pi)))
                rows.append(i * n + j)
                cols.append(i * n + j)
            delta = sp.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(n * n, n * n),
            )
        else:
            raise PotentialError(f"unknown delta_mode {delta_mode!r}")
        h2 = h2 + delta
    return h2.tocsc()


@dataclass(frozen=True)
class TrajectorySpec:
    """Separation time course: ramp d_max -> d_min at v_in, hold, ramp back
    at v_out.  Ramp speeds are average speeds; the smoothstep profile applies
    C1 easing with the same endpoints (peak speed 1.5x the average).
    """

    d_max: float
    d_min: float = 0.0
    v_in: float = 0.01
    hold_time: float = 0.0
    v_out: float = 0.01
    profile: str = "smoothstep"

    def __post_init__(self):
        if self.d_min < 0 or self.d_max <= self.d_min:
            raise PotentialError("require 0 <= d_min < d_max")
        if self.v_in <= 0 or self.v_out <= 0:
            raise PotentialError("ramp speeds must be positive")
        if self.hold_time < 0:
            raise PotentialError("hold_time must be non-negative")
        if self.profile not in ("linear", "smoothstep"):
            raise PotentialError(f"unknown trajectory profile {self.profile!r}")

    @property
    def t_in(self) -> float:
        return (self.d_max - self.d_min) / self.v_in

    @property
    def t_out(self) -> float:
        return (self.d_max - self.d_min) / self.v_out

    @property
    def total_duration(self) -> float:
        return self.t_in + self.hold_time + self.t_out


def _ramp(u: np.ndarray, profile: str) -> np.ndarray:
    if profile == "smoothstep":
        return u * u * (3.0 - 2.0 * u)
    return u


def trajectory_d(t, traj: TrajectorySpec):
    """Separation d(t) for 0 <= t <= total_duration (vectorized in t)."""
    t_arr = np.asarray(t, dtype=float)
    total = traj.total_duration
    if np.any(t_arr < -1e-12) or np.any(t_arr > total * (1 + 1e-12)):
        raise PotentialError(f"t outside [0, {total}]")
    t_arr = np.clip(t_arr, 0.0, total)
    span = traj.d_max - traj.d_min
    d = np.empty_like(t_arr)
    in_ramp = t_arr < traj.t_in
    hold = (~in_ramp) & (t_arr <= traj.t_in + traj.hold_time)
    out_ramp = ~(in_ramp | hold)
    if traj.t_in > 0:
        u = t_arr[in_ramp] / traj.t_in
        d[in_ramp] = traj.d_max - span * _ramp(u, traj.profile)
    d[hold] = traj.d_min
    if traj.t_out > 0:
        u = (t_arr[out_ramp] - traj.t_in - traj.hold_time) / traj.t_out
        d[out_ramp] = traj.d_min + span * _ramp(u, traj.profile)
    return d if d.shape else float(d)
