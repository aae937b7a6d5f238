"""Single- and two-particle eigenproblems for the double well: solving,
symmetry classification, localized left/right orbitals, adiabatic branch
tracking across separation sweeps, and the on-site interaction energy.

Eigensolver contract: k lowest eigenpairs of the discrete operators with
residual ||H psi - E psi|| < RESIDUAL_TOL for unit-norm vectors.  Raw
eigensolvers return arbitrary rotations inside (numerically) degenerate
clusters; those are resolved by simultaneous diagonalization of the exchange
and parity operators before labels are assigned.  Degenerate states that
share both labels (the far-separated excited clusters) are kept continuous
along a sweep by aligning each cluster with the previous step's states.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .grid import (
    Grid1D,
    SymmetryLabel,
    Wavefunction1D,
    Wavefunction2D,
    classify_symmetry,
)
from .potential import (
    ChannelId,
    WellConfig,
    single_hamiltonian_bands,
    build_pair_hamiltonian,
)

__all__ = [
    "EigenPair",
    "SpectrumBranch",
    "LocalizedBasis",
    "EigensolverError",
    "BranchTrackingError",
    "LocalizationError",
    "solve_single",
    "solve_pair",
    "localized_basis",
    "sweep_spectrum",
    "onsite_energy",
    "same_well_fraction",
]

RESIDUAL_TOL = 1e-8
DEGENERACY_TOL = 1e-9
TRACKING_MIN_OVERLAP = 0.9


class EigensolverError(RuntimeError):
    """Eigensolver failed to converge or returned an unusable subspace."""


class BranchTrackingError(RuntimeError):
    """Adiabatic continuation lost a branch; carries the offending d."""

    def __init__(self, message: str, d: float):
        super().__init__(message)
        self.d = d


class LocalizationError(RuntimeError):
    """Left/right orbitals are not sufficiently localized at this separation."""


@dataclass(frozen=True)
class EigenPair:
    """One eigenstate with its energy, symmetry label, and within-sector index."""

    energy: float
    state: Wavefunction1D | Wavefunction2D
    label: SymmetryLabel
    index: int


@dataclass
class SpectrumBranch:
    """An adiabatically tracked energy curve for one channel.

    samples are (d, energy) pairs with d strictly increasing; the symmetry
    label is constant along the branch.  n is the energy order at the first
    sampled d.  endpoint_state holds the tracked eigenstate at the last d,
    which is what gate-path selection keys on.
    """

    channel: ChannelId
    n: int
    label: SymmetryLabel
    samples: list[tuple[float, float]] = field(default_factory=list)
    endpoint_state: Optional[Wavefunction2D] = None

    @property
    def d_values(self) -> np.ndarray:
        return np.array([s[0] for s in self.samples])

    @property
    def energies(self) -> np.ndarray:
        return np.array([s[1] for s in self.samples])

    def energy_at(self, d: float) -> float:
        ds = self.d_values
        i = int(np.argmin(np.abs(ds - d)))
        if abs(ds[i] - d) > 1e-9:
            raise KeyError(f"branch has no sample at d={d}")
        return self.samples[i][1]


@dataclass(frozen=True)
class LocalizedBasis:
    """Left/right single-particle orbitals built from the lowest doublet."""

    psi_L: Wavefunction1D
    psi_R: Wavefunction1D
    d: float


def _canonical_sign(vecs: np.ndarray) -> np.ndarray:
    """Flip column signs so the largest-magnitude entry of each is positive."""
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def _degenerate_clusters(energies: np.ndarray, tol: float) -> list[slice]:
    clusters = []
    start = 0
    for i in range(1, len(energies) + 1):
        if i == len(energies) or energies[i] - energies[i - 1] > tol:
            clusters.append(slice(start, i))
            start = i
    return clusters


def _rotate_to_symmetry(vecs: np.ndarray, op) -> np.ndarray:
    """Rotate a degenerate cluster onto eigenvectors of a symmetry operator."""
    m = vecs.shape[1]
    if m == 1:
        return vecs
    applied = np.column_stack([op(vecs[:, i]) for i in range(m)])
    sub = vecs.T @ applied
    sub = 0.5 * (sub + sub.T)
    _, rot = np.linalg.eigh(sub)
    return vecs @ rot


def _exchange_op(n: int):
    return lambda u: np.ascontiguousarray(u.reshape(n, n).T).ravel()


def _parity_op(n: int):
    return lambda u: np.ascontiguousarray(u.reshape(n, n)[::-1, ::-1]).ravel()


def _symmetrize_pair_clusters(w: np.ndarray, v: np.ndarray, n: int, tol: float) -> np.ndarray:
    """Resolve degenerate clusters into exchange then parity eigenvectors."""
    ex_op, par_op = _exchange_op(n), _parity_op(n)
    for cl in _degenerate_clusters(w, tol):
        if cl.stop - cl.start == 1:
            continue
        v[:, cl] = _rotate_to_symmetry(v[:, cl], ex_op)
        sub = v[:, cl]
        ex_val = np.array([sub[:, i] @ ex_op(sub[:, i]) for i in range(sub.shape[1])])
        for sign in (-1.0, 1.0):
            sel = np.where(np.abs(ex_val - sign) < 1e-3)[0]
            if len(sel) > 1:
                cols = cl.start + sel
                v[:, cols] = _rotate_to_symmetry(v[:, cols], par_op)
    return v


def _pair_label(col: np.ndarray, n: int) -> SymmetryLabel:
    psi = col.reshape(n, n)
    ex = float(col @ psi.T.ravel())
    par = float(col @ psi[::-1, ::-1].ravel())
    exchange = "symmetric" if ex > 0.999 else "antisymmetric" if ex < -0.999 else None
    parity = "even" if par > 0.999 else "odd" if par < -0.999 else None
    return SymmetryLabel(exchange=exchange, parity=parity)


def solve_single(grid: Grid1D, d: float, cfg: WellConfig, k: int = 3) -> list[EigenPair]:
    """k lowest single-particle eigenpairs, energy-ordered and parity-labeled."""
    if k < 1:
        raise ValueError("k must be >= 1")
    diag, off = single_hamiltonian_bands(grid, d, cfg)
    try:
        w, v = sla.eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1))
    except Exception as exc:  # pragma: no cover - LAPACK failure
        raise EigensolverError(f"1D eigensolver failed at d={d}: {exc}") from exc
    for cl in _degenerate_clusters(w, DEGENERACY_TOL):
        if cl.stop - cl.start > 1:
            v[:, cl] = _rotate_to_symmetry(v[:, cl], lambda u: u[::-1])
    v = _canonical_sign(v)
    _check_residual_tridiag(diag, off, w, v, d)
    pairs = []
    sector_count: dict = {}
    for i in range(k):
        psi = Wavefunction1D(grid, v[:, i].astype(complex) / np.sqrt(grid.dx))
        label = classify_symmetry(psi)
        idx = sector_count.get(label.parity, 0)
        sector_count[label.parity] = idx + 1
        pairs.append(EigenPair(energy=float(w[i]), state=psi, label=label, index=idx))
    return pairs


def _check_residual_tridiag(diag, off, w, v, d):
    hv = diag[:, None] * v
    hv[:-1] += off[:, None] * v[1:]
    hv[1:] += off[:, None] * v[:-1]
    res = np.linalg.norm(hv - v * w[None, :], axis=0)
    if np.any(res > RESIDUAL_TOL):
        raise EigensolverError(f"1D residual {res.max():.2e} exceeds {RESIDUAL_TOL} at d={d}")


def _solve_pair_arrays(grid: Grid1D, d: float, channel: ChannelId, cfg: WellConfig, k: int):
    """Energies and unit-norm eigenvector columns (n^2, k) of the pair operator.

    Shift-invert Lanczos with a deterministic start vector; the shift is
    placed below the ground state (retried downward if it lands inside the
    spectrum, which is detectable because returned eigenvalues then
    straddle it).
    """
    n = grid.n_points
    h2 = build_pair_hamiltonian(grid, d, channel, cfg)
    diag, off = single_hamiltonian_bands(grid, d, cfg)
    e1 = sla.eigh_tridiagonal(diag, off, select="i", select_range=(0, 0))[0][0]
    g = cfg.g(channel)
    sigma = 2.0 * e1 - 0.5 * cfg.omega0
    if g < 0:
        sigma -= 2.0 * abs(g)
    v0 = np.ones(n * n)
    last_exc: Optional[Exception] = None
    for _ in range(4):
        try:
            w, v = spla.eigsh(h2, k=k, sigma=sigma, which="LM", v0=v0, tol=1e-12)
        except Exception as exc:
            last_exc = exc
            sigma -= cfg.v0
            continue
        order = np.argsort(w)
        w, v = w[order], np.ascontiguousarray(v[:, order])
        if w[0] > sigma:
            break
        sigma = w[0] - max(1.0, w[-1] - w[0]) - 1.0
    else:
        raise EigensolverError(f"2D eigensolver did not converge at d={d}: {last_exc}")

    v = _symmetrize_pair_clusters(w, v, n, DEGENERACY_TOL)
    if any(_pair_label(v[:, i], n).exchange is None for i in range(k)):
        # residual-level mixing just above the degeneracy threshold: widen once
        v = _symmetrize_pair_clusters(w, v, n, 1e3 * DEGENERACY_TOL)
    v = _canonical_sign(v)

    resid = np.linalg.norm(h2 @ v - v * w[None, :], axis=0)
    if np.any(resid > RESIDUAL_TOL):
        raise EigensolverError(f"2D residual {resid.max():.2e} exceeds {RESIDUAL_TOL} at d={d}")
    gram = v.T @ v
    if np.abs(gram - np.eye(k)).max() > 1e-8:
        raise EigensolverError(f"eigenvectors not orthonormal at d={d}")
    return w, v


def solve_pair(
    grid: Grid1D, d: float, channel: ChannelId, cfg: WellConfig, k: int = 6
) -> list[EigenPair]:
    """k lowest two-particle eigenpairs with exchange and parity labels."""
    if k < 1:
        raise ValueError("k must be >= 1")
    channel = ChannelId(channel)
    w, v = _solve_pair_arrays(grid, d, channel, cfg, k)
    n = grid.n_points
    pairs = []
    sector_count: dict = {}
    for i in range(k):
        label = _pair_label(v[:, i], n)
        if label.exchange is None:
            raise EigensolverError(f"state {i} at d={d} has indeterminate exchange character")
        psi = Wavefunction2D(grid, v[:, i].reshape(n, n).astype(complex) / grid.dx)
        sec = (label.exchange, label.parity)
        idx = sector_count.get(sec, 0)
        sector_count[sec] = idx + 1
        pairs.append(EigenPair(energy=float(w[i]), state=psi, label=label, index=idx))
    return pairs


def localized_basis(grid: Grid1D, d: float, cfg: WellConfig) -> LocalizedBasis:
    """Left/right orbitals (psiA -+ psiB)/sqrt(2) from the lowest doublet.

    Requires the far-separated regime d >= 8 sigma, where at least 99% of
    |psi_L|^2 must sit at x < 0 (mirror for psi_R).  The sign convention
    makes psi_L real-positive at the left well centre.
    """
    if d < 8.0 * cfg.sigma:
        raise LocalizationError(f"localized basis needs d >= 8 sigma, got d={d}")
    pairs = solve_single(grid, d, cfg, k=2)
    even = next((p for p in pairs if p.label.parity == "even"), None)
    odd = next((p for p in pairs if p.label.parity == "odd"), None)
    if even is None or odd is None:
        raise LocalizationError(f"lowest doublet at d={d} lacks definite parity")
    a = even.state.amplitudes.real.copy()
    b = odd.state.amplitudes.real.copy()
    x = grid.points
    if a[int(np.argmin(np.abs(x - d / 2.0)))] < 0:
        a = -a
    left = (a - b) / np.sqrt(2.0)
    if np.sum(left[x < 0] ** 2) * grid.dx < 0.5:
        b = -b
        left = (a - b) / np.sqrt(2.0)
    right = (a + b) / np.sqrt(2.0)
    if left[int(np.argmin(np.abs(x + d / 2.0)))] < 0:
        left, right = -left, -right
    mass_left = float(np.sum(left[x < 0] ** 2) * grid.dx)
    mass_right = float(np.sum(right[x > 0] ** 2) * grid.dx)
    if mass_left < 0.99 or mass_right < 0.99:
        raise LocalizationError(
            f"orbitals insufficiently localized at d={d}: "
            f"left mass {mass_left:.4f}, right mass {mass_right:.4f}"
        )
    return LocalizedBasis(
        psi_L=Wavefunction1D(grid, left.astype(complex)),
        psi_R=Wavefunction1D(grid, right.astype(complex)),
        d=d,
    )


def _align_degenerate_groups(w, v, labels, prev_v, n):
    """Rotate same-label degenerate groups to stay continuous with prev_v.

    Inside a degenerate cluster, members sharing both symmetry labels are
    defined only up to rotation; pick the combination best aligned with the
    previous step's tracked states (polar decomposition of the overlap).
    """
    for cl in _degenerate_clusters(w, DEGENERACY_TOL):
        if cl.stop - cl.start == 1:
            continue
        group_by_label: dict = {}
        for i in range(cl.start, cl.stop):
            group_by_label.setdefault((labels[i].exchange, labels[i].parity), []).append(i)
        for cols in group_by_label.values():
            if len(cols) < 2:
                continue
            c = v[:, cols]
            m = c.T @ prev_v
            norms = np.linalg.norm(m, axis=0)
            pick = np.argsort(-norms, kind="stable")[: len(cols)]
            mm = m[:, np.sort(pick)]
            u_svd, _, vt_svd = np.linalg.svd(mm)
            v[:, cols] = c @ (u_svd @ vt_svd)
    return v


def sweep_spectrum(
    grid: Grid1D,
    d_values: Sequence[float],
    channel: ChannelId,
    cfg: WellConfig,
    k: int = 8,
    min_overlap: float = TRACKING_MIN_OVERLAP,
) -> list[SpectrumBranch]:
    """Track the k lowest branches across a separation sweep.

    Branches are continued by greedy maximal state overlap from one d to the
    next, restricted to states of identical exchange and parity labels;
    crossings between opposite-symmetry branches therefore cross without
    relabeling.  A lost branch (best overlap below min_overlap) raises
    BranchTrackingError with the offending d.
    """
    channel = ChannelId(channel)
    d_values = [float(d) for d in d_values]
    if not d_values:
        raise ValueError("need at least one d sample")
    if any(b - a <= 0 for a, b in zip(d_values, d_values[1:])):
        raise ValueError("d_values must be strictly increasing")
    n = grid.n_points

    w, v = _solve_pair_arrays(grid, d_values[0], channel, cfg, k)
    labels = [_pair_label(v[:, i], n) for i in range(k)]
    branches = [
        SpectrumBranch(channel=channel, n=i, label=labels[i], samples=[(d_values[0], float(w[i]))])
        for i in range(k)
    ]
    prev_v = v

    for d in d_values[1:]:
        w, v = _solve_pair_arrays(grid, d, channel, cfg, k)
        cur_labels = [_pair_label(v[:, i], n) for i in range(k)]
        v = _align_degenerate_groups(w, v, cur_labels, prev_v, n)
        ov = prev_v.T @ v  # unit-norm real columns: plain dot is the overlap
        abs_ov = np.abs(ov)
        candidates = sorted(
            (
                (abs_ov[i, j], i, j)
                for i in range(k)
                for j in range(k)
                if branches[i].label == cur_labels[j]
            ),
            key=lambda t: (-t[0], t[1], t[2]),
        )
        assigned: dict[int, int] = {}
        taken: set[int] = set()
        for _, i, j in candidates:
            if i in assigned or j in taken:
                continue
            assigned[i] = j
            taken.add(j)
        for i, br in enumerate(branches):
            j = assigned.get(i)
            if j is None or abs_ov[i, j] < min_overlap:
                sector = [jj for jj in range(k) if cur_labels[jj] == br.label]
                best = max((abs_ov[i, jj] for jj in sector), default=0.0)
                raise BranchTrackingError(
                    f"branch n={br.n} ({br.label.exchange}/{br.label.parity}) lost at "
                    f"d={d}: best same-sector overlap {best:.3f} < {min_overlap}",
                    d=d,
                )
            if ov[i, j] < 0:
                v[:, j] = -v[:, j]
            br.samples.append((d, float(w[j])))
        prev_v = np.ascontiguousarray(v[:, [assigned[i] for i in range(k)]])

    for i, br in enumerate(branches):
        br.endpoint_state = Wavefunction2D(
            grid, prev_v[:, i].reshape(n, n).astype(complex) / grid.dx
        )
    return branches


def same_well_fraction(psi: Wavefunction2D) -> float:
    """Probability mass in the same-well quadrants x_a * x_b > 0.

    Cells on the axes (either coordinate exactly zero) are split evenly
    between the same- and opposite-well counts.
    """
    x = psi.grid.points
    quad = np.sign(x)[:, None] * np.sign(x)[None, :]
    p = np.abs(psi.amplitudes) ** 2 * psi.grid.dx**2
    return float(np.sum(p[quad > 0]) + 0.5 * np.sum(p[quad == 0]))


def onsite_energy(grid: Grid1D, channel: ChannelId, cfg: WellConfig, d: float, k: int = 8) -> float:
    """Splitting between same-well and opposite-well pair states at large d.

    E(lowest exchange-symmetric state living in the same-well quadrants)
    minus E(lowest antisymmetric state); the antisymmetric opposite-well
    state is blind to the contact interaction and serves as the unshifted
    reference.  Positive for repulsive channels, negative for attractive.
    """
    if d < 8.0 * cfg.sigma:
        raise ValueError(f"onsite energy is defined in the far-separated regime, got d={d}")
    pairs = solve_pair(grid, d, channel, cfg, k=k)
    e_ref = next((p.energy for p in pairs if p.label.exchange == "antisymmetric"), None)
    e_same = next(
        (
            p.energy
            for p in pairs
            if p.label.exchange == "symmetric" and same_well_fraction(p.state) > 0.5
        ),
        None,
    )
    if e_ref is None or e_same is None:
        raise EigensolverError(f"could not resolve on-site branches at d={d} with k={k}")
    return float(e_same - e_ref)
