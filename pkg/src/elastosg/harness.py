"""Convergence ladders, field reports and snapshot/CSV I/O."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .analysis import (
    component_norms,
    convergence_order,
    l2_norm,
    max_in_time,
    prolongation_matrix,
    star_norm,
)
from .errors import CFLError, ConfigurationError, UndefinedOrderError
from .mesh import build_box_mesh
from .problem import STRESS_COMPONENTS, ExperimentConfig, StressField, example_config
from .solver import cfl_max_sigma, run

logger = logging.getLogger(__name__)

CSV_HEADER = ("resolution", "error_u", "order_u", "error_psi", "order_psi", "wall_seconds")


def dyadic_label(x: float) -> str:
    """``2^-m`` for exact powers of two, otherwise the shortest repr."""
    if x > 0:
        m = math.log2(x)
        if m == round(m):
            return f"2^{int(round(m))}"
    return repr(float(x))


def parse_dyadic(text: str) -> float:
    """Parse ``2^-7``, ``2**-7`` or a plain float."""
    s = text.strip().replace("**", "^")
    if s.startswith("2^"):
        return 2.0 ** float(s[2:])
    return float(s)


@dataclass
class TableRow:
    resolution: str
    error_u: float
    order_u: float | None
    error_psi: float
    order_psi: float | None
    wall_seconds: float
    parameter: float  # cube side or time step the row was computed at

    def csv_cells(self, timing: bool = True) -> list[str]:
        def num(x):
            return "" if x is None else format(x, ".17g")

        return [
            self.resolution,
            num(self.error_u),
            num(self.order_u),
            num(self.error_psi),
            num(self.order_psi),
            format(self.wall_seconds, ".3f") if timing else "",
        ]


def _orders(rows: list[TableRow]) -> None:
    for prev, row in zip(rows, rows[1:]):
        for err, attr in (("error_u", "order_u"), ("error_psi", "order_psi")):
            try:
                setattr(row, attr, convergence_order(getattr(prev, err), getattr(row, err)))
            except UndefinedOrderError:
                logger.warning("order undefined between %s and %s (zero error)", prev.resolution, row.resolution)
                setattr(row, attr, None)


def _base_config(example: int | ExperimentConfig, **overrides) -> ExperimentConfig:
    cfg = example if isinstance(example, ExperimentConfig) else example_config(example)
    return cfg.with_(**overrides) if overrides else cfg


def _gate(cfg: ExperimentConfig, label: str) -> None:
    if cfg.allow_unstable:
        return
    mesh = build_box_mesh(cfg.lo, cfg.hi, cfg.cells_per_axis)
    bound = cfl_max_sigma(cfg.params, cfg.C_p, cfg.C_ts, mesh.h)
    if cfg.sigma > bound * (1.0 + 1e-12):
        raise CFLError(f"rung {label}: sigma = {cfg.sigma:.6g} exceeds C_ts*h = {bound:.6g}")


def _check_dyadic(values: Sequence[float], what: str) -> None:
    for a, b in zip(values, values[1:]):
        if not math.isclose(a / b, 2.0, rel_tol=1e-12):
            raise ConfigurationError(f"{what} ladder must halve at every rung; got {a} then {b}")


def run_spatial_study(
    example: int | ExperimentConfig,
    mesh_ladder: Sequence[int],
    sigma: float,
    reference_cells: int | None = None,
    **overrides,
) -> list[TableRow]:
    """Errors against the next finer mesh at fixed sigma, one row per mesh."""
    if not mesh_ladder:
        raise ConfigurationError("empty mesh ladder")
    ladder = sorted(int(n) for n in mesh_ladder)
    cfg = _base_config(example, sigma=sigma, **overrides)
    sides = [float((cfg.hi[0] - cfg.lo[0]) / n) for n in ladder]
    _check_dyadic(sides, "mesh")
    ref_n = reference_cells or 2 * ladder[-1]
    if ref_n <= ladder[-1]:
        raise ConfigurationError("reference mesh must be strictly finer than the ladder")
    for n in ladder + [ref_n]:
        _gate(cfg.with_(cells_per_axis=n), f"n={n}")

    t0 = time.perf_counter()
    ref = run(cfg.with_(cells_per_axis=ref_n), capture_every=1, with_stress=True)
    logger.info("spatial reference n=%d done in %.1fs", ref_n, time.perf_counter() - t0)
    mass = ref.stepper.mass
    rows = []
    for n, side in zip(ladder, sides):
        t0 = time.perf_counter()
        traj = run(cfg.with_(cells_per_axis=n), capture_every=1, with_stress=True)
        P = prolongation_matrix(traj.space, ref.space)
        eu, ep = [], []
        for u, s, ur, sr in zip(traj.u, traj.stress, ref.u, ref.stress):
            up = (P @ u.reshape(3, -1).T).T.reshape(-1)
            eu.append(l2_norm(ref.space, up - ur, mass))
            sp = StressField((P @ s.components.T).T)
            ep.append(star_norm(sp - sr, mass))
        rows.append(TableRow(dyadic_label(side), max_in_time(eu), None, max_in_time(ep), None,
                             time.perf_counter() - t0, side))
    # decreasing resolution parameter: coarsest mesh first
    _orders(rows)
    return rows


def run_temporal_study(
    example: int | ExperimentConfig,
    n: int,
    sigma_ladder: Sequence[float],
    sigma_reference: float | None = None,
    **overrides,
) -> list[TableRow]:
    """Errors against a run two rungs finer in time on a fixed mesh."""
    if not sigma_ladder:
        raise ConfigurationError("empty time-step ladder")
    ladder = sorted((float(s) for s in sigma_ladder), reverse=True)
    _check_dyadic(ladder, "time-step")
    cfg = _base_config(example, cells_per_axis=n, **overrides)
    s_ref = sigma_reference or ladder[-1] / 4.0
    if s_ref >= ladder[-1]:
        raise ConfigurationError("reference time step must be strictly finer than the ladder")
    for s in ladder + [s_ref]:
        _gate(cfg.with_(sigma=s), f"sigma={dyadic_label(s)}")
    ratios = [s / s_ref for s in ladder]
    if any(abs(r - round(r)) > 1e-9 for r in ratios):
        raise ConfigurationError("every ladder step must be an integer multiple of the reference step")
    stride = int(round(min(ratios)))

    t0 = time.perf_counter()
    ref = run(cfg.with_(sigma=s_ref), capture_every=stride, with_stress=True)
    logger.info("temporal reference sigma=%s done in %.1fs", dyadic_label(s_ref), time.perf_counter() - t0)
    mass = ref.stepper.mass
    lookup = {k: i for i, k in enumerate(ref.steps)}
    rows = []
    for s, r in zip(ladder, ratios):
        t0 = time.perf_counter()
        traj = run(cfg.with_(sigma=s), capture_every=1, with_stress=True, stepper=ref.stepper)
        r = int(round(r))
        eu, ep = [], []
        for k, u, st in zip(traj.steps, traj.u, traj.stress):
            j = lookup[k * r]
            eu.append(l2_norm(ref.space, u - ref.u[j], mass))
            ep.append(star_norm(st - ref.stress[j], mass))
        rows.append(TableRow(dyadic_label(s), max_in_time(eu), None, max_in_time(ep), None,
                             time.perf_counter() - t0, s))
    _orders(rows)
    return rows


@dataclass
class FieldReport:
    u_max: float
    psi_max: dict[str, float]  # keyed "11", "22", ...
    psi_matrix: np.ndarray  # symmetric 3x3 of the component max norms
    steps: int

    def values(self) -> list[float]:
        return [self.u_max] + [self.psi_max[k] for k in ("11", "22", "33", "12", "13", "23")]


def run_field_report(example: int | ExperimentConfig, n: int, sigma: float, export_every: int | None = None,
                     export_dir: str | Path | None = None, **overrides) -> FieldReport:
    """Max-in-time norms of u and of each stress component."""
    cfg = _base_config(example, cells_per_axis=n, sigma=sigma, **overrides)
    _gate(cfg, f"n={n}")
    traj = run(cfg, capture_every=1, with_stress=True)
    mass = traj.stepper.mass
    u_series = [l2_norm(traj.space, u, mass) for u in traj.u]
    comp = np.array([component_norms(s, mass) for s in traj.stress]).max(axis=0)
    psi = {f"{i + 1}{j + 1}": float(v) for (i, j), v in zip(STRESS_COMPONENTS, comp)}
    mat = np.zeros((3, 3))
    for (i, j), v in zip(STRESS_COMPONENTS, comp):
        mat[i, j] = mat[j, i] = v
    if export_every and export_dir is not None:
        out = Path(export_dir)
        out.mkdir(parents=True, exist_ok=True)
        for k, u, s in zip(traj.steps, traj.u, traj.stress):
            if k % export_every == 0:
                export_snapshot(out / f"snapshot_{k:06d}.txt", traj.space, u, s, t=k * cfg.sigma)
    return FieldReport(max_in_time(u_series), psi, mat, len(traj.steps) - 1)


def export_snapshot(path: str | Path, space, coeffs: np.ndarray, stress: StressField | None = None,
                    t: float = 0.0) -> Path:
    """Write ``t <time> dofs <count>`` then one row per scalar dof."""
    N = space.scalar_dof_count
    cols = [space.dof_coords, np.asarray(coeffs, dtype=float).reshape(3, N).T]
    if stress is not None:
        cols.append(stress.components.T)
    table = np.hstack(cols)
    buf = io.StringIO()
    buf.write(f"t {float(t):.17g} dofs {N}\n")
    np.savetxt(buf, table, fmt="%.17g")
    path = Path(path)
    path.write_text(buf.getvalue())
    return path


def read_snapshot(path: str | Path) -> tuple[float, np.ndarray, np.ndarray, StressField | None]:
    """Parse an exported snapshot into (t, coords, flat coefficients, stress)."""
    with open(path) as fh:
        head = fh.readline().split()
        data = np.loadtxt(fh, ndmin=2)
    t, N = float(head[1]), int(head[3])
    if data.shape[0] != N:
        raise ValueError(f"expected {N} rows, found {data.shape[0]}")
    coeffs = data[:, 3:6].T.reshape(-1).copy()
    stress = StressField(data[:, 6:12].T.copy()) if data.shape[1] >= 12 else None
    return t, data[:, :3], coeffs, stress


def write_table_csv(rows: Sequence[TableRow], path: str | Path | None = None, timing: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow(row.csv_cells(timing))
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_table_csv(path: str | Path) -> list[dict[str, float | str | None]]:
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append({k: (v if k == "resolution" else (float(v) if v else None)) for k, v in rec.items()})
    return out
