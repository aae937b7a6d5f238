"""Uniform 1D grid, one- and two-particle wavefunctions, and the discrete
symmetry operators (exchange, parity) together with inner products.

Conventions used throughout the package:

* natural units hbar = m = sigma = 1,
* plain Riemann quadrature with weight dx (dx^2 for two particles),
* hard-wall boundaries: psi is implicitly zero one grid spacing outside
  the stored points,
* two-particle amplitudes are stored as a square array with the first
  axis the position of particle a and the second axis particle b.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np

__all__ = [
    "Grid1D",
    "Wavefunction1D",
    "Wavefunction2D",
    "SymmetryLabel",
    "GridError",
    "make_grid",
    "exchange_apply",
    "parity_apply",
    "overlap",
    "exchange_expectation",
    "parity_expectation",
    "classify_symmetry",
    "save_wavefunction",
    "load_wavefunction",
    "wavefunction_to_csv",
]

CLASSIFY_THRESHOLD = 0.999


class GridError(ValueError):
    """Invalid grid construction or mismatched grids in an operation."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform symmetric grid on [-x_max, x_max] with n_points points.

    The grid must be symmetric about zero so the parity operation maps
    grid points onto grid points exactly.
    """

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 16:
            raise GridError(f"n_points must be >= 16, got {self.n_points}")
        if not self.x_min < self.x_max:
            raise GridError("x_min must be smaller than x_max")
        if abs(self.x_min + self.x_max) > 1e-12 * max(1.0, abs(self.x_max)):
            raise GridError("grid must be symmetric about 0 (x_min = -x_max)")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        x = np.linspace(self.x_min, self.x_max, self.n_points)
        x.flags.writeable = False
        return x


def make_grid(x_max: float, n_points: int) -> Grid1D:
    """Symmetric grid on [-x_max, x_max]."""
    if x_max <= 0:
        raise GridError(f"x_max must be positive, got {x_max}")
    return Grid1D(x_min=-float(x_max), x_max=float(x_max), n_points=int(n_points))


def _frozen(amplitudes: np.ndarray, shape) -> np.ndarray:
    arr = np.ascontiguousarray(amplitudes, dtype=np.complex128)
    if arr.shape != shape:
        raise GridError(f"amplitude shape {arr.shape} does not match grid {shape}")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Wavefunction1D:
    """Single-particle state: complex amplitudes on a Grid1D."""

    grid: Grid1D
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", _frozen(self.amplitudes, (self.grid.n_points,)))

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.dx))

    def normalized(self) -> "Wavefunction1D":
        n = self.norm()
        if n == 0.0:
            raise GridError("cannot normalize the zero wavefunction")
        return Wavefunction1D(self.grid, self.amplitudes / n)


@dataclass(frozen=True)
class Wavefunction2D:
    """Two-particle state on the shared grid; axis 0 is particle a, axis 1 particle b."""

    grid: Grid1D
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = self.grid.n_points
        object.__setattr__(self, "amplitudes", _frozen(self.amplitudes, (n, n)))

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.dx**2))

    def normalized(self) -> "Wavefunction2D":
        n = self.norm()
        if n == 0.0:
            raise GridError("cannot normalize the zero wavefunction")
        return Wavefunction2D(self.grid, self.amplitudes / n)


Wavefunction = Union[Wavefunction1D, Wavefunction2D]


@dataclass(frozen=True)
class SymmetryLabel:
    """Exchange and parity character of a state.

    A field is None when the corresponding expectation value is not within
    CLASSIFY_THRESHOLD of +-1 (the state is then unclassified in that
    respect).
    """

    exchange: Optional[Literal["symmetric", "antisymmetric"]] = None
    parity: Optional[Literal["even", "odd"]] = None

    @property
    def classified(self) -> bool:
        return self.exchange is not None and self.parity is not None


def exchange_apply(psi: Wavefunction2D) -> Wavefunction2D:
    """Swap the two particle coordinates (transpose of the amplitude array)."""
    return Wavefunction2D(psi.grid, psi.amplitudes.T)


def parity_apply(psi: Wavefunction) -> Wavefunction:
    """Spatial inversion x -> -x (both coordinates for a two-particle state)."""
    if isinstance(psi, Wavefunction1D):
        return Wavefunction1D(psi.grid, psi.amplitudes[::-1])
    return Wavefunction2D(psi.grid, psi.amplitudes[::-1, ::-1])


def _check_same_grid(a: Wavefunction, b: Wavefunction) -> None:
    if a.grid != b.grid:
        raise GridError("wavefunctions live on different grids")


def overlap(a: Wavefunction, b: Wavefunction) -> complex:
    """Discrete inner product <a|b> with Riemann weight."""
    _check_same_grid(a, b)
    if isinstance(a, Wavefunction1D) != isinstance(b, Wavefunction1D):
        raise GridError("cannot overlap a 1D with a 2D wavefunction")
    w = a.grid.dx if isinstance(a, Wavefunction1D) else a.grid.dx**2
    return complex(np.vdot(a.amplitudes, b.amplitudes) * w)


def exchange_expectation(psi: Wavefunction2D) -> float:
    """<psi|P_ex|psi>; real for any state because P_ex is Hermitian."""
    val = np.vdot(psi.amplitudes, psi.amplitudes.T) * psi.grid.dx**2
    return float(val.real)


def parity_expectation(psi: Wavefunction) -> float:
    if isinstance(psi, Wavefunction1D):
        val = np.vdot(psi.amplitudes, psi.amplitudes[::-1]) * psi.grid.dx
    else:
        val = np.vdot(psi.amplitudes, psi.amplitudes[::-1, ::-1]) * psi.grid.dx**2
    return float(val.real)


def classify_symmetry(psi: Wavefunction) -> SymmetryLabel:
    """Assign exchange/parity labels where the expectation values are decisive."""
    exchange = None
    if isinstance(psi, Wavefunction2D):
        ex = exchange_expectation(psi)
        if ex > CLASSIFY_THRESHOLD:
            exchange = "symmetric"
        elif ex < -CLASSIFY_THRESHOLD:
            exchange = "antisymmetric"
    par = parity_expectation(psi)
    parity = None
    if par > CLASSIFY_THRESHOLD:
        parity = "even"
    elif par < -CLASSIFY_THRESHOLD:
        parity = "odd"
    return SymmetryLabel(exchange=exchange, parity=parity)


# ---------------------------------------------------------------------------
# serialization: flat little-endian binary (re, im interleaved, row-major)
# plus a JSON sidecar carrying the grid metadata


def wavefunction_to_bytes(psi: Wavefunction) -> tuple[bytes, str]:
    """Return (binary payload, JSON sidecar text) for a wavefunction."""
    amps = psi.amplitudes
    flat = np.empty(amps.size * 2, dtype="<f8")
    flat[0::2] = amps.real.ravel()
    flat[1::2] = amps.imag.ravel()
    sidecar = {
        "kind": "wavefunction1d" if isinstance(psi, Wavefunction1D) else "wavefunction2d",
        "x_min": psi.grid.x_min,
        "x_max": psi.grid.x_max,
        "n_points": psi.grid.n_points,
        "dtype": "<f8 interleaved re/im, row-major",
    }
    return flat.tobytes(), json.dumps(sidecar, sort_keys=True, indent=2) + "\n"


def save_wavefunction(psi: Wavefunction, path: Union[str, Path]) -> tuple[Path, Path]:
    """Write psi to <path>.bin with sidecar <path>.json; returns both paths."""
    base = Path(path)
    blob, sidecar = wavefunction_to_bytes(psi)
    bin_path = base.with_suffix(".bin")
    json_path = base.with_suffix(".json")
    bin_path.write_bytes(blob)
    json_path.write_text(sidecar, encoding="utf-8")
    return bin_path, json_path


def load_wavefunction(path: Union[str, Path]) -> Wavefunction:
    base = Path(path)
    meta = json.loads(base.with_suffix(".json").read_text(encoding="utf-8"))
    raw = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype="<f8")
    amps = raw[0::2] + 1j * raw[1::2]
    grid = Grid1D(meta["x_min"], meta["x_max"], meta["n_points"])
    if meta["kind"] == "wavefunction1d":
        return Wavefunction1D(grid, amps)
    n = meta["n_points"]
    return Wavefunction2D(grid, amps.reshape(n, n))


def wavefunction_to_csv(psi: Wavefunction1D) -> str:
    """CSV export (x, re, im) for a single-particle state."""
    if not isinstance(psi, Wavefunction1D):
        raise GridError("CSV export is defined for 1D wavefunctions")
    lines = ["x,re,im"]
    for xv, av in zip(psi.grid.points, psi.amplitudes):
        lines.append(f"{xv!r},{av.real!r},{av.imag!r}")
    return "\n".join(lines) + "\n"
