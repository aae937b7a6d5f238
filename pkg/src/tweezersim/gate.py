"""Two-qubit gate algebra built from the accumulated collision phases: the
exchange-symmetrized unitary U, the controlled-phase construction G, local
equivalence classification via Makhlin invariants, concurrence, and the
selective-excitation Bell-pair scheme.

Basis order is (|00>, |01>, |10>, |11>).  All unitaries here are diagonal in
the partial Bell basis {|00>, |Psi+>, |Psi->, |11>} with
|Psi+-> = (|01> +- |10>)/sqrt(2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dynamics import (
    GatePhases,
    PropagationResult,
    phase_accumulation,
    propagate,
    symmetrized_pair_state,
)
from .grid import Grid1D, Wavefunction2D, exchange_expectation, overlap
from .potential import ChannelId, TrajectorySpec, WellConfig
from .spectra import SpectrumBranch, solve_pair

__all__ = [
    "GatePhases",
    "TwoQubitUnitary",
    "BellSchemeReport",
    "BellSeparationResult",
    "GateError",
    "T_MIX",
    "phase_gate",
    "build_U",
    "build_U_bell_form",
    "build_G",
    "controlled_phase_closed_form",
    "makhlin_invariants",
    "local_equivalence_class",
    "tunability_gamma",
    "gamma_from_invariant_phase",
    "apply_gate",
    "concurrence",
    "gate_from_trajectory",
    "bell_scheme",
    "bell_separation_check",
]

UNITARITY_TOL = 1e-12

# Bell-mixing involution: identity on |00>, |11>; Hadamard-like on the middle
T_MIX = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0), 0.0],
        [0.0, 1.0 / math.sqrt(2.0), -1.0 / math.sqrt(2.0), 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
)

# magic (Bell) basis for local-invariant computation
_MAGIC = np.array(
    [
        [1, 0, 0, 1j],
        [0, 1j, 1, 0],
        [0, 1j, -1, 0],
        [1, 0, 0, -1j],
    ],
    dtype=complex,
) / math.sqrt(2.0)

_SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)


class GateError(ValueError):
    """Invalid gate-layer input (non-unitary matrix, unnormalized qubit)."""


@dataclass(frozen=True)
class TwoQubitUnitary:
    """4x4 unitary in the computational basis (|00>, |01>, |10>, |11>)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise GateError(f"expected a 4x4 matrix, got {m.shape}")
        res = float(np.abs(m.conj().T @ m - np.eye(4)).max())
        if res > UNITARITY_TOL:
            raise GateError(f"matrix is not unitary: residual {res:.2e}")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def unitarity_residual(self) -> float:
        m = self.matrix
        return float(np.abs(m.conj().T @ m - np.eye(4)).max())

    def exchange_covariant(self, tol: float = 1e-12) -> bool:
        m = self.matrix
        return bool(np.abs(_SWAP @ m @ _SWAP - m).max() <= tol)


def phase_gate(theta: float) -> np.ndarray:
    """Single-qubit S(theta) = exp(-i theta |1><1|)."""
    return np.diag([1.0, np.exp(-1j * theta)])


def build_U(phases: GatePhases) -> TwoQubitUnitary:
    """The collision unitary, written directly in the computational basis."""
    ep = np.exp(-1j * phases.phi_plus)
    em = np.exp(-1j * phases.phi_minus)
    c = 0.5 * (ep + em)
    s = 0.5 * (ep - em)
    m = np.array(
        [
            [np.exp(-1j * phases.phi_00), 0, 0, 0],
            [0, c, s, 0],
            [0, s, c, 0],
            [0, 0, 0, np.exp(-1j * phases.phi_11)],
        ],
        dtype=complex,
    )
    return TwoQubitUnitary(m)


def build_U_bell_form(phases: GatePhases) -> TwoQubitUnitary:
    """The same unitary as T diag(e^{-i phi}) T^dagger in the partial Bell basis."""
    diag = np.diag(
        np.exp(
            -1j
            * np.array(
                [phases.phi_00, phases.phi_plus, phases.phi_minus, phases.phi_11]
            )
        )
    )
    return TwoQubitUnitary(T_MIX @ diag @ T_MIX.T)


def build_G(phases: GatePhases) -> TwoQubitUnitary:
    """Controlled-phase construction G = U (S(pi) x S(0)) U."""
    u = build_U(phases).matrix
    mid = np.kron(phase_gate(math.pi), phase_gate(0.0))
    return TwoQubitUnitary(u @ mid @ u)


def controlled_phase_closed_form(phases: GatePhases) -> TwoQubitUnitary:
    """Closed form of G: diag(e^{-2i phi00}, e^{-iS}, -e^{-iS}, -e^{-2i phi11})
    with S = phi_plus + phi_minus."""
    s = phases.phi_plus + phases.phi_minus
    return TwoQubitUnitary(
        np.diag(
            [
                np.exp(-2j * phases.phi_00),
                np.exp(-1j * s),
                -np.exp(-1j * s),
                -np.exp(-2j * phases.phi_11),
            ]
        )
    )


def makhlin_invariants(u: np.ndarray | TwoQubitUnitary) -> tuple[complex, float]:
    """Local invariants (G1, G2) of a two-qubit unitary.

    G1 = tr^2(m) / (16 det U) and G2 = (tr^2(m) - tr(m^2)) / (4 det U) with
    m = U_B^T U_B in the magic basis; both are invariant under single-qubit
    rotations and global phase.
    """
    m = u.matrix if isinstance(u, TwoQubitUnitary) else np.asarray(u, dtype=complex)
    if m.shape != (4, 4):
        raise GateError("expected a 4x4 matrix")
    if np.abs(m.conj().T @ m - np.eye(4)).max() > 1e-10:
        raise GateError("input is not unitary")
    ub = _MAGIC.conj().T @ m @ _MAGIC
    det = np.linalg.det(ub)
    mm = ub.T @ ub
    tr = np.trace(mm)
    g1 = complex(tr**2 / (16.0 * det))
    g2 = tr**2 - np.trace(mm @ mm)
    g2 = g2 / (4.0 * det)
    if abs(g2.imag) > 1e-9:
        raise GateError(f"second invariant unexpectedly complex: {g2}")
    return g1, float(g2.real)


def local_equivalence_class(
    u: np.ndarray | TwoQubitUnitary, tol: float = 1e-7
) -> tuple[tuple[complex, float], Optional[float]]:
    """Makhlin invariants plus the matching controlled-phase angle.

    For the family exp(-i gamma |11><11|) the invariants are
    G1 = cos^2(gamma/2) (real) and G2 = 2 + cos(gamma); when the input's
    invariants lie on that curve the folded gamma in [0, pi] is returned,
    otherwise None.
    """
    g1, g2 = makhlin_invariants(u)
    cos_g = g2 - 2.0
    if not -1.0 - tol <= cos_g <= 1.0 + tol:
        return (g1, g2), None
    gamma = math.acos(min(1.0, max(-1.0, cos_g)))
    on_family = abs(g1.imag) <= tol and abs(g1.real - (1.0 + cos_g) / 2.0) <= tol
    return (g1, g2), (gamma if on_family else None)


def gamma_from_invariant_phase(invariant_phase: float) -> float:
    """Fold the analytic controlled-phase angle 2*Phi into [0, pi]."""
    t = (2.0 * invariant_phase) % (2.0 * math.pi)
    return min(t, 2.0 * math.pi - t)


def tunability_gamma(phases: GatePhases) -> tuple[float, float]:
    """(gamma, Phi): the entangling class of G and the invariant phase.

    Phi = phi00 + phi11 - phi+ - phi- (mod 2 pi) is the gauge-invariant
    phase combination; G is locally equivalent to the controlled-phase gate
    with gamma = 2*Phi folded into [0, pi].  This closed form is independent
    of (and cross-checked against) the Makhlin-invariant oracle.
    """
    phi = (
        phases.phi_00 + phases.phi_11 - phases.phi_plus - phases.phi_minus
    ) % (2.0 * math.pi)
    return gamma_from_invariant_phase(phi), phi


def concurrence(state: np.ndarray) -> float:
    """Concurrence 2|a d - b c| of a pure two-qubit state (a, b, c, d)."""
    s = np.asarray(state, dtype=complex).reshape(4)
    return float(2.0 * abs(s[0] * s[3] - s[1] * s[2]))


def apply_gate(
    u: TwoQubitUnitary,
    left: Sequence[complex],
    right: Sequence[complex],
) -> tuple[np.ndarray, float]:
    """Apply u to the product state (alpha|0>+beta|1>) x (mu|0>+nu|1>).

    Returns the output four-vector and its concurrence.
    """
    a = np.asarray(left, dtype=complex).reshape(2)
    b = np.asarray(right, dtype=complex).reshape(2)
    for name, q in (("left", a), ("right", b)):
        if abs(np.vdot(q, q).real - 1.0) > 1e-10:
            raise GateError(f"{name} qubit amplitudes are not normalized")
    out = u.matrix @ np.kron(a, b)
    return out, concurrence(out)


def gate_from_trajectory(
    traj: TrajectorySpec,
    cfg: WellConfig,
    grid: Grid1D,
    d_step: float = 0.1,
    k: int = 8,
    branch_map: Optional[dict[ChannelId, list[SpectrumBranch]]] = None,
) -> tuple[GatePhases, TwoQubitUnitary, float]:
    """End-to-end pipeline: accumulate phases, build U, classify the gate."""
    if traj.total_duration == 0.0:
        phases = GatePhases(0.0, 0.0, 0.0, 0.0)
    else:
        phases = phase_accumulation(
            traj, list(ChannelId), cfg, grid, d_step=d_step, k=k, branch_map=branch_map
        )
    u = build_U(phases)
    gamma, _ = tunability_gamma(phases)
    return phases, u, gamma


@dataclass(frozen=True)
class BellSchemeReport:
    """Spectroscopic feasibility of the selective excitation at d = 0.

    Energies are in natural units; the resolvability verdict compares the
    |11> detuning and the vibrational spacing against the given linewidth.
    """

    transition_energy: float  # E0(Psi+) - E0(00)
    detuning_11: float  # E0(11) - E0(Psi+)
    vibrational_spacing: float  # next exchange-symmetric level above the Psi+ ground
    interaction_shift: float  # E0(Psi+) - E0(g = 0)
    spacing_to_shift_ratio: float
    linewidth: float
    resolvable: bool


def bell_scheme(grid: Grid1D, cfg: WellConfig, linewidth: float) -> BellSchemeReport:
    """Evaluate the Bell-pair preparation scheme at merged wells (d = 0)."""
    if linewidth <= 0:
        raise GateError("linewidth must be positive")

    def ground_sym(channel: ChannelId, cfg_used: WellConfig) -> float:
        pairs = solve_pair(grid, 0.0, channel, cfg_used, k=4)
        for p in pairs:
            if p.label.exchange == "symmetric":
                return p.energy
        raise GateError("no symmetric ground state found at d=0")

    e00 = ground_sym(ChannelId.C00, cfg)
    e_plus = ground_sym(ChannelId.PSI_PLUS, cfg)
    e11 = ground_sym(ChannelId.C11, cfg)
    free_cfg = WellConfig(
        v0=cfg.v0,
        sigma=cfg.sigma,
        scattering_lengths={"00": 0.0, "01sym": 0.0, "11": 0.0},
        omega_perp_w0=cfg.omega_perp_w0,
    )
    e_free = ground_sym(ChannelId.PSI_PLUS, free_cfg)

    pairs_plus = solve_pair(grid, 0.0, ChannelId.PSI_PLUS, cfg, k=6)
    sym_levels = [p.energy for p in pairs_plus if p.label.exchange == "symmetric"]
    if len(sym_levels) < 2:
        raise GateError("need at least two symmetric levels to define the spacing")
    spacing = sym_levels[1] - sym_levels[0]

    detuning = e11 - e_plus
    shift = e_plus - e_free
    ratio = abs(spacing / shift) if shift != 0.0 else math.inf
    return BellSchemeReport(
        transition_energy=e_plus - e00,
        detuning_11=detuning,
        vibrational_spacing=spacing,
        interaction_shift=shift,
        spacing_to_shift_ratio=ratio,
        linewidth=linewidth,
        resolvable=bool(abs(detuning) > linewidth and spacing > linewidth),
    )


@dataclass(frozen=True)
class BellSeparationResult:
    fidelity: float
    final_exchange: float
    propagation: PropagationResult


def bell_separation_check(
    cfg: WellConfig,
    traj: TrajectorySpec,
    grid: Grid1D,
    dt: Optional[float] = None,
) -> BellSeparationResult:
    """Separate the excited pair adiabatically and score the spatial target.

    Starts from the exchange-symmetric vibrational ground at d = d_min in
    the Psi+ channel, runs only the separation half of the trajectory, and
    returns the overlap-squared with (|LR> + |RL>)/sqrt(2) at d_max.  The
    internal Bell factor is carried symbolically: the internal state does
    not evolve in the state-independent trap.
    """
    pairs = solve_pair(grid, traj.d_min, ChannelId.PSI_PLUS, cfg, k=2)
    psi0 = next((p.state for p in pairs if p.label.exchange == "symmetric"), None)
    if psi0 is None:
        raise GateError(f"no symmetric ground at d={traj.d_min}")
    t_sep = traj.t_in + traj.hold_time
    res = propagate(
        psi0,
        traj,
        ChannelId.PSI_PLUS,
        cfg,
        dt=dt,
        time_window=(t_sep, traj.total_duration),
    )
    target = symmetrized_pair_state(grid, traj.d_max, cfg, sign=+1)
    fid = abs(overlap(target, res.final_state)) ** 2
    return BellSeparationResult(
        fidelity=float(fid),
        final_exchange=exchange_expectation(res.final_state),
        propagation=res,
    )
