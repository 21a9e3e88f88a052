"""Self-contained SVG plotting for metrics and trajectory CSV files.

No charting dependency: plots are assembled from polylines, circles, and
text, which keeps outputs diffable. Also owns the CSV schemas and their
strict readers (malformed input is rejected with the offending line number).
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

METRICS_COLUMNS = (
    "iteration",
    "sigma",
    "agent",
    "train_return",
    "eval_return",
    "actor_loss",
    "critic_loss",
    "freq_left",
    "freq_straight",
    "freq_right",
)
TRAJECTORY_COLUMNS = (
    "episode",
    "step",
    "agent",
    "x",
    "y",
    "heading",
    "action",
    "reward",
    "dest_x",
    "dest_y",
)

PALETTE = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


class CsvFormatError(ValueError):
    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


def _read_rows(path: str | Path, columns: Sequence[str]) -> list[list[str]]:
    path = Path(path)
    text = path.read_text()
    lines = text.splitlines()
    if not lines:
        raise CsvFormatError(path, 1, "file is empty")
    header = lines[0].split(",")
    if header != list(columns):
        raise CsvFormatError(
            path, 1, f"expected header {','.join(columns)!r}, got {lines[0]!r}"
        )
    rows = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(columns):
            raise CsvFormatError(
                path, line_no, f"expected {len(columns)} columns, got {len(cells)}"
            )
        rows.append(cells)
    if not rows:
        raise CsvFormatError(path, len(lines), "no data rows")
    return rows


def _parse(path, line_no: int, cell: str, kind, column: str):
    try:
        return kind(cell)
    except ValueError:
        raise CsvFormatError(
            path, line_no, f"bad {column} value {cell!r}"
        ) from None


def read_metrics(path: str | Path) -> list[dict]:
    """Metrics rows as dicts; optional cells come back as None."""
    out = []
    for line_no, cells in enumerate(_read_rows(path, METRICS_COLUMNS), start=2):
        row: dict = {}
        for col, cell in zip(METRICS_COLUMNS, cells):
            if col in ("iteration", "agent"):
                row[col] = _parse(path, line_no, cell, int, col)
            elif col == "sigma":
                row[col] = _parse(path, line_no, cell, float, col)
            else:
                row[col] = None if cell == "" else _parse(path, line_no, cell, float, col)
        out.append(row)
    return out


def read_trajectories(path: str | Path) -> list[dict]:
    out = []
    int_cols = ("episode", "step", "agent", "x", "y", "dest_x", "dest_y")
    for line_no, cells in enumerate(_read_rows(path, TRAJECTORY_COLUMNS), start=2):
        row = dict(zip(TRAJECTORY_COLUMNS, cells))
        for col in int_cols:
            row[col] = _parse(path, line_no, row[col], int, col)
        row["reward"] = _parse(path, line_no, row["reward"], float, "reward")
        out.append(row)
    return out


def _svg_document(width: int, height: int, body: list[str]) -> str:
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">\n'
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def _polyline(points: list[tuple[float, float]], color: str, dashed: bool = False) -> str:
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
    dash = ' stroke-dasharray="6,4"' if dashed else ""
    return (
        f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} '
        f'points="{pts}"/>'
    )


def _text(x: float, y: float, s: str, size: int = 11, anchor: str = "start") -> str:
    return (
        f'<text x="{x:.2f}" y="{y:.2f}" font-family="sans-serif" '
        f'font-size="{size}" text-anchor="{anchor}">{s}</text>'
    )


def render_return_curves(metrics_rows: list[dict], out_path: str | Path) -> Path:
    """Train and eval return curves, one solid + one dashed polyline per agent."""
    if not metrics_rows:
        raise ValueError("no metrics rows to plot")
    width, height = 720, 440
    left, right, top, bottom = 60, 20, 20, 50
    agents = sorted({r["agent"] for r in metrics_rows})

    series: dict[tuple[int, str], list[tuple[float, float]]] = {}
    for r in metrics_rows:
        for col in ("train_return", "eval_return"):
            if r[col] is not None:
                series.setdefault((r["agent"], col), []).append(
                    (float(r["iteration"]), r[col])
                )

    xs = [p[0] for pts in series.values() for p in pts]
    ys = [p[1] for pts in series.values() for p in pts]
    if not xs:
        raise ValueError("metrics contain no return values to plot")
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(x: float) -> float:
        return left + (x - x_lo) / (x_hi - x_lo) * (width - left - right)

    def py(y: float) -> float:
        return height - bottom - (y - y_lo) / (y_hi - y_lo) * (height - top - bottom)

    body = []
    # axes
    body.append(
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" '
        f'y2="{height - bottom}" stroke="black"/>'
    )
    body.append(
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="black"/>'
    )
    for i in range(5):
        xv = x_lo + (x_hi - x_lo) * i / 4
        yv = y_lo + (y_hi - y_lo) * i / 4
        body.append(_text(px(xv), height - bottom + 16, f"{xv:.0f}", anchor="middle"))
        body.append(_text(left - 6, py(yv) + 4, f"{yv:.1f}", anchor="end"))
    body.append(_text((left + width - right) / 2, height - 12, "iteration", anchor="middle"))
    body.append(
        f'<text x="16" y="{(top + height - bottom) / 2:.2f}" font-family="sans-serif" '
        f'font-size="11" text-anchor="middle" '
        f'transform="rotate(-90 16 {(top + height - bottom) / 2:.2f})">return</text>'
    )
    # curves + legend
    legend_y = top + 6
    for agent in agents:
        color = PALETTE[agent % len(PALETTE)]
        for col, dashed in (("train_return", False), ("eval_return", True)):
            pts = series.get((agent, col), [])
            if pts:
                body.append(_polyline([(px(x), py(y)) for x, y in pts], color, dashed))
            label = f"agent {agent} {'eval' if dashed else 'train'}"
            lx = width - right - 150
            body.append(
                f'<line x1="{lx}" y1="{legend_y}" x2="{lx + 24}" y2="{legend_y}" '
                f'stroke="{color}" stroke-width="1.5"'
                + (' stroke-dasharray="6,4"' if dashed else "")
                + "/>"
            )
            body.append(_text(lx + 30, legend_y + 4, label))
            legend_y += 16

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(_svg_document(width, height, body))
    return out_path


def render_trajectories(
    trajectory_rows: list[dict], out_dir: str | Path, grid_size: int = 6
) -> list[Path]:
    """One SVG per episode: grid, start marker, destination circles, paths."""
    if not trajectory_rows:
        raise ValueError("no trajectory rows to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cell = 60
    margin = 30
    side = 2 * margin + grid_size * cell
    start = (3, 0)

    def centre(x: int, y: int) -> tuple[float, float]:
        # y axis points north; SVG y runs downward.
        return (
            margin + (x + 0.5) * cell,
            margin + (grid_size - 1 - y + 0.5) * cell,
        )

    episodes = sorted({r["episode"] for r in trajectory_rows})
    paths = []
    for ep in episodes:
        rows = [r for r in trajectory_rows if r["episode"] == ep]
        body = []
        for i in range(grid_size + 1):
            offset = margin + i * cell
            body.append(
                f'<line x1="{margin}" y1="{offset}" x2="{side - margin}" '
                f'y2="{offset}" stroke="#cccccc"/>'
            )
            body.append(
                f'<line x1="{offset}" y1="{margin}" x2="{offset}" '
                f'y2="{side - margin}" stroke="#cccccc"/>'
            )
        sx, sy = centre(*start)
        body.append(
            f'<rect x="{sx - 9:.2f}" y="{sy - 9:.2f}" width="18" height="18" '
            f'fill="none" stroke="black" stroke-width="2"/>'
        )
        for agent in sorted({r["agent"] for r in rows}):
            color = PALETTE[agent % len(PALETTE)]
            arows = sorted(
                (r for r in rows if r["agent"] == agent), key=lambda r: r["step"]
            )
            dx, dy = centre(arows[0]["dest_x"], arows[0]["dest_y"])
            body.append(
                f'<circle cx="{dx:.2f}" cy="{dy:.2f}" r="{cell * 0.22:.2f}" '
                f'fill="{color}" fill-opacity="0.35" stroke="{color}" stroke-width="2"/>'
            )
            pts = [centre(*start)] + [centre(r["x"], r["y"]) for r in arows]
            body.append(_polyline(pts, color))
            for x, y in pts:
                body.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{color}"/>')
        body.append(_text(margin, side - 8, f"episode {ep}"))
        path = out_dir / f"trajectory_ep{ep:03d}.svg"
        path.write_text(_svg_document(side, side, body))
        paths.append(path)
    return paths


def render_plots(
    metrics_path: str | Path,
    trajectories_path: str | Path | None,
    out_dir: str | Path,
    grid_size: int = 6,
) -> list[Path]:
    """Render everything the inputs support; returns the written files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [
        render_return_curves(read_metrics(metrics_path), out_dir / "returns.svg")
    ]
    if trajectories_path is not None:
        written.extend(
            render_trajectories(read_trajectories(trajectories_path), out_dir, grid_size)
        )
    return written
