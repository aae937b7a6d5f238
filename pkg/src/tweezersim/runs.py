"""Run orchestration: execute one subcommand worth of computation from a
validated RunConfig and return artifacts, reports, and task statuses.

Each run decomposes into independent pure tasks (one sweep per channel, one
propagation per speed) dispatched through the deterministic worker pool;
merge order is fixed by the task list, so identical configs produce
bit-identical artifact bytes at any worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

import numpy as np

from . import __version__
from .config import RunConfig, resolve_workers
from .dynamics import (
    adiabaticity_bound,
    default_dt,
    flag_revivals,
    phase_accumulation,
    propagate,
    symmetrized_pair_state,
)
from .gate import (
    bell_scheme,
    bell_separation_check,
    build_G,
    build_U,
    build_U_bell_form,
    controlled_phase_closed_form,
    apply_gate,
    local_equivalence_class,
    tunability_gamma,
)
from .grid import Grid1D
from .parallel import TaskOutcome, run_tasks
from .potential import ChannelId, TrajectorySpec, WellConfig
from .serialize import (
    Artifact,
    eigenfunctions_csv,
    json_text,
    magnitude_snapshot_artifacts,
    single_levels_csv,
    spectrum_branches_csv,
    speed_table_csv,
    text_artifact,
    timeseries_csv,
    wavefunction_artifacts,
)
from .spectra import solve_single, sweep_spectrum

__all__ = ["RunOutcome", "run_command", "COMMANDS"]


@dataclass
class RunOutcome:
    command: str
    status: str  # "ok" | "partial" | "failed"
    version: str
    started_utc: str
    finished_utc: str
    config_echo: dict
    tasks: list[dict] = field(default_factory=list)
    reports: dict = field(default_factory=dict)
    artifacts: list[Artifact] = field(default_factory=list)


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def _status(tasks: list[dict]) -> str:
    oks = [t["status"] == "ok" for t in tasks]
    if all(oks):
        return "ok"
    return "partial" if any(oks) else "failed"


def _task_records(outcomes: list[TaskOutcome]) -> list[dict]:
    return [
        {"name": o.name, "status": "ok" if o.ok else "failed", "error": o.error}
        for o in outcomes
    ]


def _d_values(d_min: float, d_max: float, step: float) -> tuple[float, ...]:
    n = max(2, int(round((d_max - d_min) / step)) + 1)
    return tuple(np.linspace(d_min, d_max, n).tolist())


# -- module-level task bodies (picklable for the spawn pool) ----------------


def _sweep_task(grid: Grid1D, d_values, channel: ChannelId, well: WellConfig, k: int):
    return sweep_spectrum(grid, d_values, channel, well, k=k)


def _single_task(grid: Grid1D, d: float, well: WellConfig, k: int):
    return solve_single(grid, d, well, k=k)


def _propagate_task(
    psi0,
    traj: TrajectorySpec,
    channel: ChannelId,
    well: WellConfig,
    dt: float,
    sample_every: int,
    snapshot_every: int,
    time_window=None,
):
    return propagate(
        psi0,
        traj,
        channel,
        well,
        dt=dt,
        sample_every=sample_every,
        snapshot_every=snapshot_every,
        time_window=time_window,
    )


# -- subcommands -------------------------------------------------------------


def run_spectrum(cfg: RunConfig, workers: Optional[int] = None) -> RunOutcome:
    started = _utcnow()
    grid = cfg.grid.build()
    well = cfg.well.build()
    nworkers = resolve_workers(cfg, workers)
    d_values = _d_values(cfg.spectrum.d_min, cfg.spectrum.d_max, cfg.numerics.d_step)

    tasks = [
        (f"sweep_{ch.value}", _sweep_task, (grid, d_values, ch, well, cfg.numerics.k_states))
        for ch in cfg.channel_ids()
    ]
    tasks += [
        (f"single_d{d:g}", _single_task, (grid, float(d), well, cfg.spectrum.k_single))
        for d in cfg.spectrum.eigenfunction_d_values
    ]
    outcomes = run_tasks(tasks, nworkers)

    artifacts: list[Artifact] = []
    single_rows = []
    for (name, _, args), out in zip(tasks, outcomes):
        if not out.ok:
            continue
        if name.startswith("sweep_"):
            channel = args[2]
            artifacts.append(
                text_artifact(
                    f"spectrum_{channel.value}.csv",
                    "csv",
                    spectrum_branches_csv(out.value, well.omega0),
                )
            )
        else:
            d = args[1]
            pairs = out.value
            states = [p.state.amplitudes for p in pairs]
            artifacts.append(
                text_artifact(
                    f"eigenfunctions_d{d:g}.csv",
                    "csv",
                    eigenfunctions_csv(np.asarray(grid.points), states),
                )
            )
            single_rows += [(d, i, p.energy, p.label.parity) for i, p in enumerate(pairs)]
    if single_rows:
        artifacts.append(
            text_artifact("single_levels.csv", "csv", single_levels_csv(single_rows, well.omega0))
        )

    task_records = _task_records(outcomes)
    return RunOutcome(
        command="spectrum",
        status=_status(task_records),
        version=__version__,
        started_utc=started,
        finished_utc=_utcnow(),
        config_echo=cfg.canonical_dict(),
        tasks=task_records,
        reports={"d_samples": len(d_values), "channels": [c for c in cfg.channels]},
        artifacts=artifacts,
    )


def _transport_bound(grid, well, traj_model, channel, k, d_step):
    """Adiabaticity report for the given channel over the trajectory d-range."""
    probe = TrajectorySpec(
        d_max=traj_model.d_max, d_min=traj_model.d_min, v_in=1.0, v_out=1.0
    )
    return adiabaticity_bound(grid, probe, channel, well, k=k, d_step=d_step)


def run_evolve(cfg: RunConfig, workers: Optional[int] = None) -> RunOutcome:
    started = _utcnow()
    grid = cfg.grid.build()
    well = cfg.well.build()
    nworkers = resolve_workers(cfg, workers)
    dt = cfg.numerics.dt(well)
    channel = ChannelId(cfg.evolve.channel)

    bound = _transport_bound(grid, well, cfg.trajectory, channel, cfg.numerics.k_states, cfg.numerics.d_step)
    scale = bound.v_bound if cfg.trajectory.speed_units == "v0" else 1.0
    sign = -1 if channel is ChannelId.PSI_MINUS else +1
    psi0 = symmetrized_pair_state(grid, cfg.trajectory.d_max, well, sign=sign)

    tasks = []
    for i, v in enumerate(cfg.evolve.v_values):
        traj = TrajectorySpec(
            d_max=cfg.trajectory.d_max,
            d_min=cfg.trajectory.d_min,
            v_in=v * scale,
            hold_time=cfg.trajectory.hold_time,
            v_out=v * scale,
            profile=cfg.trajectory.profile,
        )
        tasks.append(
            (
                f"v{i}",
                _propagate_task,
                (psi0, traj, channel, well, dt, cfg.output.sample_every, cfg.output.snapshot_every),
            )
        )
    outcomes = run_tasks(tasks, nworkers)

    artifacts: list[Artifact] = []
    rows = []
    for i, (v, out) in enumerate(zip(cfg.evolve.v_values, outcomes)):
        v_nat = v * scale
        if out.ok:
            res = out.value
            rows.append(
                {
                    "v": v_nat,
                    "v_v0": v_nat / bound.v_bound,
                    "fidelity": res.fidelity,
                    "same_well": res.same_well_population,
                    "opposite_well": res.opposite_well_population,
                    "norm_drift": res.norm_drift,
                    "exchange_drift": res.exchange_drift,
                    "revival": "",
                    "error": "",
                }
            )
            if res.time_series:
                artifacts.append(
                    text_artifact(f"evolve_v{i}_timeseries.csv", "csv", timeseries_csv(res.time_series))
                )
            if res.snapshots:
                artifacts += magnitude_snapshot_artifacts(f"evolve_v{i}", grid, res.snapshots)
            if cfg.output.save_final_state:
                artifacts += wavefunction_artifacts(f"evolve_v{i}_final", res.final_state)
        else:
            rows.append({"v": v_nat, "v_v0": v_nat / bound.v_bound, "error": out.error.splitlines()[0]})
    artifacts.insert(0, text_artifact("evolve_fidelities.csv", "csv", speed_table_csv(rows)))

    task_records = _task_records(outcomes)
    return RunOutcome(
        command="evolve",
        status=_status(task_records),
        version=__version__,
        started_utc=started,
        finished_utc=_utcnow(),
        config_echo=cfg.canonical_dict(),
        tasks=task_records,
        reports={
            "omega_ab": bound.omega_ab,
            "v_bound": bound.v_bound,
            "channel": channel.value,
            "fidelities": {f"{v:g}": r.get("fidelity") for v, r in zip(cfg.evolve.v_values, rows)},
        },
        artifacts=artifacts,
    )


def run_gate(cfg: RunConfig, workers: Optional[int] = None) -> RunOutcome:
    started = _utcnow()
    grid = cfg.grid.build()
    well = cfg.well.build()
    nworkers = resolve_workers(cfg, workers)
    dt = cfg.numerics.dt(well)
    k = cfg.numerics.k_states
    required = {c.value for c in ChannelId}
    if set(cfg.channels) != required:
        raise ValueError(f"gate runs need all four channels, got {cfg.channels}")

    d_values = _d_values(cfg.trajectory.d_min, cfg.trajectory.d_max, cfg.numerics.d_step)
    unique_g: dict[float, ChannelId] = {}
    for ch in cfg.channel_ids():
        unique_g.setdefault(well.g(ch), ch)
    sweep_tasks = [
        (f"sweep_g{gval:g}", _sweep_task, (grid, d_values, ch, well, k))
        for gval, ch in unique_g.items()
    ]
    sweep_outcomes = run_tasks(sweep_tasks, nworkers)
    task_records = _task_records(sweep_outcomes)
    if any(not o.ok for o in sweep_outcomes):
        return RunOutcome(
            command="gate",
            status="failed",
            version=__version__,
            started_utc=started,
            finished_utc=_utcnow(),
            config_echo=cfg.canonical_dict(),
            tasks=task_records,
            reports={},
            artifacts=[],
        )
    branches_by_g = {gval: out.value for (gval, _), out in zip(unique_g.items(), sweep_outcomes)}
    branch_map = {ch: branches_by_g[well.g(ch)] for ch in ChannelId}

    bounds = {
        ch: adiabaticity_bound(
            grid,
            TrajectorySpec(d_max=cfg.trajectory.d_max, d_min=cfg.trajectory.d_min, v_in=1.0, v_out=1.0),
            ch,
            well,
            k=k,
            branches=branch_map[ch],
        )
        for ch in ChannelId
    }
    v_bound = min(b.v_bound for b in bounds.values())
    traj = cfg.trajectory.build(v_bound if cfg.trajectory.speed_units == "v0" else None)

    phases = phase_accumulation(
        traj, list(ChannelId), well, grid, d_step=cfg.numerics.d_step, k=k, branch_map=branch_map
    )
    u = build_U(phases)
    u_bell = build_U_bell_form(phases)
    g_mat = build_G(phases)
    g_closed = controlled_phase_closed_form(phases)
    gamma, phi = tunability_gamma(phases)
    invariants, gamma_oracle = local_equivalence_class(g_mat)

    two_pi = 2.0 * math.pi
    samples = []
    for left, right in (
        ((1 / math.sqrt(2), 1 / math.sqrt(2)), (1 / math.sqrt(2), 1 / math.sqrt(2))),
        ((1.0, 0.0), (0.0, 1.0)),
        ((0.6, 0.8), (0.8, 0.6)),
    ):
        out_state, conc = apply_gate(u, left, right)
        samples.append({"left": list(left), "right": list(right), "concurrence": conc})

    report = {
        "phases_raw": {
            "phi_00": phases.phi_00,
            "phi_11": phases.phi_11,
            "phi_plus": phases.phi_plus,
            "phi_minus": phases.phi_minus,
        },
        "phases_mod_2pi": {
            "phi_00": phases.phi_00 % two_pi,
            "phi_11": phases.phi_11 % two_pi,
            "phi_plus": phases.phi_plus % two_pi,
            "phi_minus": phases.phi_minus % two_pi,
        },
        "invariant_phase": phi,
        "gamma": gamma,
        "gamma_oracle": gamma_oracle,
        "makhlin_g1": [invariants[0].real, invariants[0].imag],
        "makhlin_g2": invariants[1],
        "unitarity_residual_U": u.unitarity_residual,
        "unitarity_residual_G": g_mat.unitarity_residual,
        "dual_form_max_diff": float(np.abs(u.matrix - u_bell.matrix).max()),
        "closed_form_max_diff": float(np.abs(g_mat.matrix - g_closed.matrix).max()),
        "exchange_covariant": u.exchange_covariant(),
        "concurrence_samples": samples,
        "v_bound": v_bound,
        "omega_ab": {ch.value: bounds[ch].omega_ab for ch in ChannelId},
        "trajectory": {"v_in": traj.v_in, "v_out": traj.v_out, "duration": traj.total_duration},
    }

    if cfg.gate.verify_propagation:
        combos: dict[tuple[float, int], ChannelId] = {}
        for ch in ChannelId:
            sign = -1 if ch is ChannelId.PSI_MINUS else +1
            combos.setdefault((well.g(ch), sign), ch)
        verify_tasks = []
        for (gval, sign), ch in combos.items():
            branches = branch_map[ch]
            ref = symmetrized_pair_state(grid, traj.d_max, well, sign=sign)
            from .dynamics import select_transport_branch

            psi0 = select_transport_branch(branches, ref).endpoint_state
            verify_tasks.append(
                (f"verify_g{gval:g}_s{sign}", _propagate_task, (psi0, traj, ch, well, dt, 0, 0))
            )
        verify_outcomes = run_tasks(verify_tasks, nworkers)
        task_records += _task_records(verify_outcomes)
        deltas = {}
        for ((gval, sign), ch), out in zip(combos.items(), verify_outcomes):
            if not out.ok:
                continue
            for target in ChannelId:
                t_sign = -1 if target is ChannelId.PSI_MINUS else +1
                if well.g(target) == gval and t_sign == sign:
                    phase_attr = {
                        ChannelId.C00: phases.phi_00,
                        ChannelId.C11: phases.phi_11,
                        ChannelId.PSI_PLUS: phases.phi_plus,
                        ChannelId.PSI_MINUS: phases.phi_minus,
                    }[target]
                    prop_phase = math.atan2(out.value.final_overlap.imag, out.value.final_overlap.real)
                    delta = (prop_phase + phase_attr + math.pi) % two_pi - math.pi
                    deltas[target.value] = {
                        "delta_rad": abs(delta),
                        "fidelity": out.value.fidelity,
                    }
        report["propagation_phase_check"] = deltas

    artifacts = [text_artifact("gate_report.json", "json", json_text(report))]
    return RunOutcome(
        command="gate",
        status=_status(task_records),
        version=__version__,
        started_utc=started,
        finished_utc=_utcnow(),
        config_echo=cfg.canonical_dict(),
        tasks=task_records,
        reports=report,
        artifacts=artifacts,
    )


def run_bell(cfg: RunConfig, workers: Optional[int] = None) -> RunOutcome:
    started = _utcnow()
    grid = cfg.grid.build()
    well = cfg.well.build()
    dt = cfg.numerics.dt(well)
    linewidth = cfg.bell.linewidth_hw0 * well.omega0

    tasks_records = []
    reports: dict = {}
    artifacts: list[Artifact] = []
    try:
        scheme = bell_scheme(grid, well, linewidth)
        tasks_records.append({"name": "scheme", "status": "ok", "error": None})
    except Exception as exc:
        scheme = None
        tasks_records.append({"name": "scheme", "status": "failed", "error": str(exc)})

    separation = None
    try:
        bound = _transport_bound(
            grid, well, cfg.trajectory, ChannelId.PSI_PLUS, cfg.numerics.k_states, cfg.numerics.d_step
        )
        traj = cfg.trajectory.build(bound.v_bound if cfg.trajectory.speed_units == "v0" else None)
        separation = bell_separation_check(well, traj, grid, dt=dt)
        tasks_records.append({"name": "separation", "status": "ok", "error": None})
    except Exception as exc:
        tasks_records.append({"name": "separation", "status": "failed", "error": str(exc)})

    w0 = well.omega0
    if scheme is not None:
        reports["scheme"] = {
            "transition_energy_hw0": scheme.transition_energy / w0,
            "detuning_11_hw0": scheme.detuning_11 / w0,
            "vibrational_spacing_hw0": scheme.vibrational_spacing / w0,
            "interaction_shift_hw0": scheme.interaction_shift / w0,
            "spacing_to_shift_ratio": scheme.spacing_to_shift_ratio,
            "linewidth_hw0": cfg.bell.linewidth_hw0,
            "resolvable": scheme.resolvable,
        }
    if separation is not None:
        reports["separation"] = {
            "fidelity": separation.fidelity,
            "final_exchange": separation.final_exchange,
            "norm_drift": separation.propagation.norm_drift,
        }
    artifacts.append(text_artifact("bell_report.json", "json", json_text(reports)))
    return RunOutcome(
        command="bell",
        status=_status(tasks_records),
        version=__version__,
        started_utc=started,
        finished_utc=_utcnow(),
        config_echo=cfg.canonical_dict(),
        tasks=tasks_records,
        reports=reports,
        artifacts=artifacts,
    )


def run_adiabaticity(cfg: RunConfig, workers: Optional[int] = None) -> RunOutcome:
    started = _utcnow()
    grid = cfg.grid.build()
    well = cfg.well.build()
    nworkers = resolve_workers(cfg, workers)
    dt = cfg.numerics.dt(well)
    channel = ChannelId(cfg.adiabaticity.scan_channel)

    bound = _transport_bound(grid, well, cfg.trajectory, channel, cfg.numerics.k_states, cfg.numerics.d_step)
    reports: dict = {
        "omega_ab": bound.omega_ab,
        "omega_ab_hw0": bound.omega_ab / well.omega0,
        "v_bound": bound.v_bound,
        "v_bound_in_v0_units": bound.v_bound_in_v0_units,
        "gap_d": bound.gap_d,
        "channel": channel.value,
    }
    task_records = [{"name": "bound", "status": "ok", "error": None}]
    artifacts: list[Artifact] = []

    if cfg.adiabaticity.scan:
        sign = -1 if channel is ChannelId.PSI_MINUS else +1
        psi0 = symmetrized_pair_state(grid, cfg.trajectory.d_max, well, sign=sign)
        tasks = []
        for i, v in enumerate(cfg.adiabaticity.scan_speeds):
            v_nat = v * bound.v_bound if cfg.trajectory.speed_units == "v0" else v
            traj = TrajectorySpec(
                d_max=cfg.trajectory.d_max,
                d_min=cfg.trajectory.d_min,
                v_in=v_nat,
                hold_time=cfg.trajectory.hold_time,
                v_out=v_nat,
                profile=cfg.trajectory.profile,
            )
            tasks.append((f"scan_v{i}", _propagate_task, (psi0, traj, channel, well, dt, 0, 0)))
        outcomes = run_tasks(tasks, nworkers)
        task_records += _task_records(outcomes)
        v_nats = [
            v * bound.v_bound if cfg.trajectory.speed_units == "v0" else v
            for v in cfg.adiabaticity.scan_speeds
        ]
        fids = [o.value.fidelity if o.ok else -1.0 for o in outcomes]
        revivals = flag_revivals(v_nats, fids, bound.v_bound)
        rows = []
        for v_nat, o, rev in zip(v_nats, outcomes, revivals):
            if o.ok:
                res = o.value
                rows.append(
                    {
                        "v": v_nat,
                        "v_v0": v_nat / bound.v_bound,
                        "fidelity": res.fidelity,
                        "same_well": res.same_well_population,
                        "opposite_well": res.opposite_well_population,
                        "norm_drift": res.norm_drift,
                        "exchange_drift": res.exchange_drift,
                        "revival": str(rev).lower(),
                        "error": "",
                    }
                )
            else:
                rows.append({"v": v_nat, "v_v0": v_nat / bound.v_bound, "error": o.error.splitlines()[0]})
        artifacts.append(text_artifact("speed_scan.csv", "csv", speed_table_csv(rows)))
        reports["scan"] = {
            "speeds_v0": list(cfg.adiabaticity.scan_speeds),
            "fidelities": [r.get("fidelity") for r in rows],
            "revivals": revivals,
        }

    artifacts.insert(0, text_artifact("adiabaticity_report.json", "json", json_text(reports)))
    return RunOutcome(
        command="adiabaticity",
        status=_status(task_records),
        version=__version__,
        started_utc=started,
        finished_utc=_utcnow(),
        config_echo=cfg.canonical_dict(),
        tasks=task_records,
        reports=reports,
        artifacts=artifacts,
    )


COMMANDS = {
    "spectrum": run_spectrum,
    "evolve": run_evolve,
    "gate": run_gate,
    "bell": run_bell,
    "adiabaticity": run_adiabaticity,
}


def run_command(command: str, cfg: RunConfig, workers: Optional[int] = None) -> RunOutcome:
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    return COMMANDS[command](cfg, workers=workers)
