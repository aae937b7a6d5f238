"""Deterministic serialization of run outputs.

All floats are written with shortest round-trip repr so identical numeric
results serialize to identical bytes; JSON objects are dumped with sorted
keys.  Artifacts carry their payload as bytes plus a sha256, and the run
manifest lists every artifact with its checksum.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .grid import Wavefunction2D, wavefunction_to_bytes
from .spectra import SpectrumBranch

__all__ = [
    "Artifact",
    "text_artifact",
    "binary_artifact",
    "fmt",
    "json_text",
    "spectrum_branches_csv",
    "single_levels_csv",
    "eigenfunctions_csv",
    "timeseries_csv",
    "speed_table_csv",
    "magnitude_snapshot_artifacts",
    "wavefunction_artifacts",
    "sha256_hex",
    "build_manifest",
    "write_artifacts",
]


def fmt(x: float) -> str:
    return repr(float(x))


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class Artifact:
    name: str
    kind: str  # "csv" | "json" | "f64"
    data: bytes

    @property
    def sha256(self) -> str:
        return sha256_hex(self.data)

    @property
    def text(self) -> Optional[str]:
        if self.kind in ("csv", "json"):
            return self.data.decode("utf-8")
        return None


def text_artifact(name: str, kind: str, text: str) -> Artifact:
    return Artifact(name=name, kind=kind, data=text.encode("utf-8"))


def binary_artifact(name: str, data: bytes) -> Artifact:
    return Artifact(name=name, kind="f64", data=data)


def json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def spectrum_branches_csv(branches: Iterable[SpectrumBranch], omega0: float) -> str:
    lines = ["d,channel,n,energy_hw0,exchange,parity"]
    for br in branches:
        for d, e in br.samples:
            lines.append(
                f"{fmt(d)},{br.channel.value},{br.n},{fmt(e / omega0)},"
                f"{br.label.exchange},{br.label.parity}"
            )
    return "\n".join(lines) + "\n"


def single_levels_csv(rows: Iterable[tuple[float, int, float, str]], omega0: float) -> str:
    """Rows of (d, n, energy, parity) for the single-particle levels."""
    lines = ["d,n,energy_hw0,parity"]
    for d, n, e, parity in rows:
        lines.append(f"{fmt(d)},{n},{fmt(e / omega0)},{parity}")
    return "\n".join(lines) + "\n"


def eigenfunctions_csv(x: np.ndarray, states: list[np.ndarray]) -> str:
    """Columns x, re_i, im_i for each eigenfunction at one separation."""
    header = ["x"]
    for i in range(len(states)):
        header += [f"re_{i}", f"im_{i}"]
    lines = [",".join(header)]
    for row in range(len(x)):
        cells = [fmt(x[row])]
        for st in states:
            cells += [fmt(st[row].real), fmt(st[row].imag)]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def timeseries_csv(samples) -> str:
    lines = ["t,d,fidelity_vs_init,norm,exchange_expectation"]
    for smp in samples:
        lines.append(
            f"{fmt(smp.t)},{fmt(smp.d)},{fmt(smp.fidelity)},{fmt(smp.norm)},{fmt(smp.exchange)}"
        )
    return "\n".join(lines) + "\n"


def speed_table_csv(rows) -> str:
    """Rows of dicts with keys v, v_v0, fidelity, same_well, opposite_well,
    norm_drift, exchange_drift, revival, error."""
    lines = ["v,v_v0,fidelity,same_well,opposite_well,norm_drift,exchange_drift,revival,error"]
    for r in rows:
        def cell(key, numeric=True):
            val = r.get(key)
            if val is None:
                return ""
            return fmt(val) if numeric else str(val)

        lines.append(
            ",".join(
                [
                    cell("v"),
                    cell("v_v0"),
                    cell("fidelity"),
                    cell("same_well"),
                    cell("opposite_well"),
                    cell("norm_drift"),
                    cell("exchange_drift"),
                    cell("revival", numeric=False),
                    cell("error", numeric=False),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def magnitude_snapshot_artifacts(
    prefix: str, grid, snapshots: list[tuple[float, np.ndarray]]
) -> list[Artifact]:
    """|psi| grids as flat little-endian float64 with a JSON sidecar each."""
    arts = []
    for idx, (t, mag) in enumerate(snapshots):
        blob = np.ascontiguousarray(mag, dtype="<f8").tobytes()
        sidecar = {
            "kind": "magnitude2d",
            "t": t,
            "x_min": grid.x_min,
            "x_max": grid.x_max,
            "n_points": grid.n_points,
            "dtype": "<f8 row-major",
        }
        arts.append(binary_artifact(f"{prefix}_snap{idx:04d}.bin", blob))
        arts.append(text_artifact(f"{prefix}_snap{idx:04d}.json", "json", json_text(sidecar)))
    return arts


def wavefunction_artifacts(name: str, psi: Wavefunction2D) -> list[Artifact]:
    blob, sidecar = wavefunction_to_bytes(psi)
    return [
        binary_artifact(f"{name}.bin", blob),
        text_artifact(f"{name}.json", "json", sidecar),
    ]


def build_manifest(
    command: str,
    version: str,
    config_echo: dict,
    tasks: list[dict],
    artifacts: list[Artifact],
    status: str,
    started_utc: str,
    finished_utc: str,
) -> dict:
    return {
        "artifact_version": version,
        "command": command,
        "status": status,
        "started_utc": started_utc,
        "finished_utc": finished_utc,
        "config": config_echo,
        "tasks": tasks,
        "outputs": [
            {"name": a.name, "kind": a.kind, "bytes": len(a.data), "sha256": a.sha256}
            for a in artifacts
        ],
    }


def write_artifacts(out_dir: str | Path, artifacts: list[Artifact], manifest: dict) -> Path:
    """Write all artifacts plus manifest.json (atomically) into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for art in artifacts:
        (out / art.name).write_bytes(art.data)
    manifest_path = out / "manifest.json"
    tmp = out / "manifest.json.tmp"
    tmp.write_text(json_text(manifest), encoding="utf-8")
    os.replace(tmp, manifest_path)
    return manifest_path
