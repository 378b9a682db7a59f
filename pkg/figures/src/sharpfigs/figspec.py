"""Figure specifications.

A spec names a plot kind, the input files, and styling. JSON layout:

    {
      "kind": "error_curve" | "distance_curve" | "contour_overlay",
      "trajectories": [{"path": "traj.csv", "eta_multiplier": 0.9}, ...],
      "verdicts": "escape_report.json",     # alternative trajectory source
      "grid": "grid.csv",                   # contour_overlay only
      "basis": "basis.json",                # optional, labels the axes
      "log_y": true,
      "star_final": true,
      "out": "fig.png"
    }

Relative paths resolve against the spec file's directory. When
``trajectories`` is omitted but ``verdicts`` is given, the trajectory list
is taken from the report's own file listing, labeled by each cell's step
multiplier. Every referenced file must exist when the spec is loaded.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import SpecError
from .inputs import read_json, read_verdicts

KINDS = ("error_curve", "distance_curve", "contour_overlay")


@dataclass(frozen=True)
class TrajectoryInput:
    path: Path
    eta_multiplier: float


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    trajectories: tuple[TrajectoryInput, ...]
    grid: Path | None = None
    basis: Path | None = None
    verdicts: Path | None = None
    log_y: bool = True
    star_final: bool = True
    out: Path | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown plot kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "contour_overlay" and self.grid is None:
            raise SpecError("contour_overlay needs a grid file")
        if self.kind != "contour_overlay" and not self.trajectories:
            raise SpecError(f"{self.kind} needs at least one trajectory")
        for path in self._referenced():
            if not Path(path).is_file():
                raise SpecError(f"input file does not exist: {path}")

    def _referenced(self):
        for traj in self.trajectories:
            yield traj.path
        for path in (self.grid, self.basis, self.verdicts):
            if path is not None:
                yield path


def _as_path(base: Path, value) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base / path


def load_spec(path) -> FigureSpec:
    """Parse a spec JSON file, resolving inputs relative to its directory."""
    path = Path(path)
    doc = read_json(path)
    base = path.parent
    if "kind" not in doc:
        raise SpecError(f"spec {path} lacks 'kind'")

    known = {"kind", "trajectories", "verdicts", "grid", "basis",
             "log_y", "star_final", "out"}
    for key in doc:
        if key not in known:
            raise SpecError(f"unknown spec field {key!r}")

    verdicts_path = _as_path(base, doc["verdicts"]) if doc.get("verdicts") else None
    trajectories: list[TrajectoryInput] = []
    if doc.get("trajectories"):
        for entry in doc["trajectories"]:
            try:
                trajectories.append(TrajectoryInput(
                    path=_as_path(base, entry["path"]),
                    eta_multiplier=float(entry["eta_multiplier"]),
                ))
            except (KeyError, TypeError, ValueError) as exc:
                raise SpecError(f"malformed trajectory entry {entry!r}: {exc}") from exc
    elif verdicts_path is not None:
        report = read_verdicts(verdicts_path)
        cells = report["cells"]
        files = report["trajectory_files"]
        if len(cells) != len(files):
            raise SpecError(f"verdict report lists {len(cells)} cells "
                            f"but {len(files)} trajectory files")
        for cell, name in zip(cells, files):
            trajectories.append(TrajectoryInput(
                path=_as_path(verdicts_path.parent, name),
                eta_multiplier=float(cell["eta_multiplier"]),
            ))

    return FigureSpec(
        kind=doc["kind"],
        trajectories=tuple(trajectories),
        grid=_as_path(base, doc["grid"]) if doc.get("grid") else None,
        basis=_as_path(base, doc["basis"]) if doc.get("basis") else None,
        verdicts=verdicts_path,
        log_y=bool(doc.get("log_y", True)),
        star_final=bool(doc.get("star_final", True)),
        out=_as_path(base, doc["out"]) if doc.get("out") else None,
    )
