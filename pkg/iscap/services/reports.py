"""
Artifact emission: CSV tables and SVG heatmaps.

CSV headers read ``name [unit]``; floats are written with 17 significant
digits so a re-parse reproduces them exactly. Heatmaps are rendered with
the Agg backend to self-contained SVG with fixed ids and no timestamps.
"""

from __future__ import annotations

import math
import re
from collections.abc import Mapping
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from matplotlib.axes import Axes  # noqa: E402
from matplotlib.colors import Normalize  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402
from structlog import get_logger  # noqa: E402

from iscap.core.exceptions import ArtifactError  # noqa: E402
from iscap.models.scenario import Scenario  # noqa: E402
from iscap.services.experiments import PowerMap  # noqa: E402

logger = get_logger()

FLOAT_FORMAT = "%.17g"

# Lowest color level of a heatmap, relative to its brightest cell.
HEATMAP_FLOOR_DB = -60.0

COLUMN_UNITS: dict[str, str] = {
    "sinr_threshold_db": "dB",
    "harvest_threshold_dbm": "dBm",
    "uncertainty_area_m2": "m^2",
    "power_budget_dbm": "dBm",
    "false_alarm": "1",
    "antennas": "1",
    "theta": "W",
    "detection_probability": "1",
    "min_sinr_slack": "normalized",
    "min_harvest_slack": "normalized",
    "min_power_slack": "normalized",
    "reconstruction_error": "1",
    "seconds": "s",
    "seconds_per_iteration": "s",
    "x": "m",
    "y": "m",
    "power": "W",
    "value": "1",
    "threshold": "1",
    "null_depth_db": "dB",
    "isolation_db": "dB",
}

_HEADER = re.compile(r"^(?P<name>.*?) \[(?P<unit>[^\]]*)\]$")


def column_header(name: str, units: Mapping[str, str] | None = None) -> str:
    unit = (units or COLUMN_UNITS).get(name, "-")
    return f"{name} [{unit}]"


def emit_csv(table: pd.DataFrame, path: Path, units: Mapping[str, str] | None = None) -> Path:
    """
    Write ``table`` with unit-annotated headers.

    An empty table yields a header-only file.

    Raises:
        ArtifactError: If the file cannot be written
    """
    headers = [column_header(str(c), units) for c in table.columns]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(
            path,
            index=False,
            header=headers,
            float_format=FLOAT_FORMAT,
            na_rep="nan",
            lineterminator="\n",
        )
    except OSError as exc:
        raise ArtifactError(path, f"cannot write CSV: {exc}") from exc
    logger.info("csv_emitted", path=str(path), rows=len(table))
    return path


def read_csv_table(path: Path) -> pd.DataFrame:
    """
    Parse a CSV written by ``emit_csv``; units are stripped from the headers.

    Raises:
        ArtifactError: If the file cannot be read
    """
    try:
        table = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError) as exc:
        raise ArtifactError(path, f"cannot read CSV: {exc}") from exc

    names: list[str] = []
    for header in table.columns:
        match = _HEADER.match(str(header))
        names.append(match.group("name") if match else str(header))
    table.columns = pd.Index(names)
    return table


def _relative_db(values: np.ndarray) -> np.ndarray:
    finite = values[np.isfinite(values)]
    peak = float(finite.max()) if finite.size else 0.0
    if peak <= 0.0:
        return np.where(np.isfinite(values), HEATMAP_FLOOR_DB, np.nan)
    tiny = float(np.finfo(float).tiny)
    with np.errstate(invalid="ignore"):
        db = 10.0 * np.log10(np.maximum(values, tiny) / peak)
    return np.maximum(db, HEATMAP_FLOOR_DB)


def _overlay(ax: Axes, scenario: Scenario) -> None:
    for k, g in enumerate(scenario.bs):
        xy = g.element_coordinates()
        line = ax.plot(xy[:, 0], xy[:, 1], color="black", linewidth=2.0)[0]
        line.set_gid(f"bs-{k}")
    for k, cu in enumerate(scenario.cus):
        marker = ax.plot(
            cu.position.x, cu.position.y, marker="^", color="white", markeredgecolor="black"
        )[0]
        marker.set_gid(f"cu-{k}")
    for k, er in enumerate(scenario.ers):
        center = er.region.center
        marker = ax.plot(center.x, center.y, marker="s", color="yellow", markeredgecolor="black")[0]
        marker.set_gid(f"er-{k}")
    for m, p in enumerate(scenario.sensing.sample_points):
        marker = ax.plot(p.x, p.y, marker="x", color="red")[0]
        marker.set_gid(f"sensing-{m}")


def emit_heatmap(
    grid: PowerMap,
    path: Path,
    *,
    bs_index: int | None = None,
    scenario: Scenario | None = None,
    title: str | None = None,
) -> Path:
    """
    Render one BS's map as an SVG heatmap in dB relative to its maximum cell.

    Every cell is a rectangle with id ``cell-<iy>-<ix>``; invalid cells are
    drawn grey. With ``scenario`` the BS arrays, CUs, ERs and sensing points
    are overlaid.

    Raises:
        ArtifactError: If the file cannot be written
    """
    b = 0 if bs_index is None else grid.bs_indices.index(bs_index)
    db = _relative_db(grid.values[b])
    spec = grid.spec
    cmap = plt.get_cmap("viridis")
    norm = Normalize(vmin=HEATMAP_FLOOR_DB, vmax=0.0)

    with plt.rc_context({"svg.hashsalt": "iscap", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.0, 5.0))
        try:
            for iy in range(spec.ny):
                for ix in range(spec.nx):
                    value = db[iy, ix]
                    color = "lightgrey" if math.isnan(value) else cmap(norm(value))
                    cell = Rectangle(
                        (spec.x_min + ix * spec.cell_width, spec.y_min + iy * spec.cell_height),
                        spec.cell_width,
                        spec.cell_height,
                        facecolor=color,
                        edgecolor="none",
                    )
                    cell.set_gid(f"cell-{iy}-{ix}")
                    ax.add_patch(cell)
            if scenario is not None:
                _overlay(ax, scenario)
            ax.set_xlim(spec.x_min, spec.x_max)
            ax.set_ylim(spec.y_min, spec.y_max)
            ax.set_aspect("equal")
            ax.set_xlabel("x [m]")
            ax.set_ylabel("y [m]")
            ax.set_title(title or f"BS {grid.bs_indices[b] + 1} received power")
            colorbar = fig.colorbar(plt.cm.ScalarMappable(norm=norm, cmap=cmap), ax=ax)
            colorbar.set_label("relative power [dB]")
            path.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(path, format="svg", metadata={"Date": None})
        except OSError as exc:
            raise ArtifactError(path, f"cannot write heatmap: {exc}") from exc
        finally:
            plt.close(fig)

    logger.info("heatmap_emitted", path=str(path), cells=spec.nx * spec.ny)
    return path
