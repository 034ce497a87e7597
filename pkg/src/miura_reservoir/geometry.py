"""Miura-ori crease pattern, rigid folding and bar/hinge connectivity.

Vertices are indexed row-major, ``node = row * cols + col``, with row 0 the
bottom edge (clamped to the shaker) and the last row the top edge (payload).
Flat coordinates put the straight crease lines along +y and the zig-zag
crease lines along +x. Lengths are in millimetres.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from ._kernels import dihedral
from .errors import DegenerateGeometry

DEFAULT_ROWS = 4
DEFAULT_COLS = 7
DEFAULT_PANEL_A = 20.0
DEFAULT_PANEL_B = 20.0
DEFAULT_GAMMA = 60.0
DEFAULT_FOLD_ANGLE = 50.0


class Fold(str, Enum):
    MOUNTAIN = "M"
    VALLEY = "V"

    def flipped(self) -> "Fold":
        return Fold.VALLEY if self is Fold.MOUNTAIN else Fold.MOUNTAIN


@dataclass(frozen=True)
class CreasePattern:
    rows: int
    cols: int
    panel_a: float
    panel_b: float
    gamma: float
    vertices: np.ndarray  # (rows*cols, 2) flat coordinates
    crease_edges: list[tuple[int, int, Fold]]
    facet_quads: list[tuple[int, int, int, int]]

    def node(self, row: int, col: int) -> int:
        return row * self.cols + col

    def row_col(self, node: int) -> tuple[int, int]:
        return divmod(node, self.cols)

    @property
    def n_nodes(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class FoldedMesh:
    pattern: CreasePattern
    node_positions: np.ndarray  # (n, 3) mm
    bars: np.ndarray  # (n_bars, 2) int
    hinges: np.ndarray  # (n_hinges, 4) int: edge p, edge q, left wing, right wing
    hinge_rest: np.ndarray  # (n_hinges,) rad
    hinge_is_facet: np.ndarray  # (n_hinges,) bool, True for facet-bending diagonals
    fold_angle: float
    flipped: bool = False
    triangles: np.ndarray = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.node_positions.shape[0]

    @property
    def rows(self) -> int:
        return self.pattern.rows

    @property
    def cols(self) -> int:
        return self.pattern.cols

    def bar_lengths(self, positions: np.ndarray | None = None) -> np.ndarray:
        x = self.node_positions if positions is None else positions
        d = x[self.bars[:, 1]] - x[self.bars[:, 0]]
        return np.linalg.norm(d, axis=1)

    def node_name(self, node: int) -> str:
        r, c = self.pattern.row_col(node)
        return f"node_{r}{c}" if self.cols <= 10 and self.rows <= 10 else f"node_{r}_{c}"

    def to_dict(self, clamped=None) -> dict:
        hinges = [
            [int(p), int(q), int(k), int(l), float(np.degrees(th))]
            for (p, q, k, l), th in zip(self.hinges, self.hinge_rest)
        ]
        return {
            "nodes": self.node_positions.tolist(),
            "bars": self.bars.tolist(),
            "hinges": hinges,
            "clamped": sorted(int(i) for i in (clamped if clamped is not None else clamped_nodes(self))),
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def _crease_label(row_a: int, col_a: int, row_b: int, col_b: int) -> Fold:
    if row_a == row_b:
        # zig-zag creases keep one assignment along the row, alternating row to row
        return Fold.MOUNTAIN if row_a % 2 == 1 else Fold.VALLEY
    # straight creases alternate along the line and between neighbouring lines
    low = min(row_a, row_b)
    return Fold.MOUNTAIN if (low + col_a) % 2 == 0 else Fold.VALLEY


def build_miura_pattern(
    rows: int = DEFAULT_ROWS,
    cols: int = DEFAULT_COLS,
    panel_a: float = DEFAULT_PANEL_A,
    panel_b: float = DEFAULT_PANEL_B,
    gamma: float = DEFAULT_GAMMA,
) -> CreasePattern:
    """Flat Miura-ori vertex grid with mountain/valley crease labels.

    ``panel_a`` is the zig-zag segment length, ``panel_b`` the straight
    segment length and ``gamma`` the acute sector angle in degrees.
    """
    if rows < 2 or cols < 2:
        raise DegenerateGeometry(f"need at least a 2x2 vertex grid, got {rows}x{cols}")
    if not (panel_a > 0 and panel_b > 0):
        raise DegenerateGeometry("panel side lengths must be positive")
    if not (0.0 < gamma < 90.0):
        raise DegenerateGeometry(f"sector angle must lie in (0, 90) degrees, got {gamma}")
    g = np.radians(gamma)
    verts = np.empty((rows * cols, 2))
    for r in range(rows):
        for c in range(cols):
            verts[r * cols + c] = (c * panel_a * np.sin(g), r * panel_b + (c % 2) * panel_a * np.cos(g))
    edges: list[tuple[int, int, Fold]] = []
    for r in range(rows):
        for c in range(cols - 1):
            edges.append((r * cols + c, r * cols + c + 1, _crease_label(r, c, r, c + 1)))
    for r in range(rows - 1):
        for c in range(cols):
            edges.append((r * cols + c, (r + 1) * cols + c, _crease_label(r, c, r + 1, c)))
    quads = [
        (r * cols + c, r * cols + c + 1, (r + 1) * cols + c + 1, (r + 1) * cols + c)
        for r in range(rows - 1)
        for c in range(cols - 1)
    ]
    return CreasePattern(rows, cols, float(panel_a), float(panel_b), float(gamma), verts, edges, quads)


def miura_cell_dimensions(panel_a: float, panel_b: float, gamma: float, fold_angle: float):
    """Lattice spacings of the rigidly folded sheet.

    Returns ``(dx, dy_zigzag, dy_row, dz)``: column spacing along x, y offset
    of odd columns, row spacing along y and apex height of odd rows.
    ``fold_angle`` is the fold of the zig-zag creases in degrees (0 = flat).
    """
    g = np.radians(gamma)
    half = np.radians(fold_angle) / 2.0
    sin_half = np.sin(abs(half))
    cos_phi = np.sqrt(1.0 - (sin_half * np.sin(g)) ** 2)
    dy_row = panel_b * cos_phi
    dz = panel_b * sin_half * np.sin(g)
    dy_zig = panel_a * np.cos(g) / cos_phi
    dx = np.sqrt(max(panel_a**2 - dy_zig**2, 0.0))
    return dx, dy_zig, dy_row, dz


def fold_miura(pattern: CreasePattern, fold_angle: float = DEFAULT_FOLD_ANGLE, flip: bool = False) -> FoldedMesh:
    """Rigidly fold the pattern; facets stay planar parallelograms.

    ``flip`` swaps the mountain/valley parity, mirroring the sheet through
    the flat plane.
    """
    if not (0.0 <= fold_angle < 180.0):
        raise DegenerateGeometry(f"fold angle must lie in [0, 180) degrees, got {fold_angle}")
    dx, dy_zig, dy_row, dz = miura_cell_dimensions(
        pattern.panel_a, pattern.panel_b, pattern.gamma, fold_angle
    )
    if dx <= 1e-9 * pattern.panel_a:
        raise DegenerateGeometry("fold collapses the unit cell onto itself")
    rows, cols = pattern.rows, pattern.cols
    x = np.empty((rows * cols, 3))
    sign = -1.0 if flip else 1.0
    for r in range(rows):
        for c in range(cols):
            x[r * cols + c] = (c * dx, r * dy_row + (c % 2) * dy_zig, sign * (r % 2) * dz)

    flat = pattern.vertices
    bars: list[tuple[int, int]] = [(i, j) for i, j, _ in pattern.crease_edges]
    triangles: list[tuple[int, int, int]] = []
    for n00, n01, n11, n10 in pattern.facet_quads:
        d_main = np.linalg.norm(flat[n11] - flat[n00])
        d_anti = np.linalg.norm(flat[n10] - flat[n01])
        if d_anti <= d_main:
            bars.append((n01, n10))
            triangles += [(n00, n01, n10), (n01, n11, n10)]
        else:
            bars.append((n00, n11))
            triangles += [(n00, n01, n11), (n00, n11, n10)]
    crease_set = {frozenset((i, j)) for i, j, _ in pattern.crease_edges}

    # each interior edge gets one hinge; edge direction follows the first
    # (counter-clockwise) triangle so that its opposite vertex is the left wing
    edge_tris: dict[frozenset, list[tuple[int, int, int]]] = {}
    for a, b, c in triangles:
        for p, q, o in ((a, b, c), (b, c, a), (c, a, b)):
            edge_tris.setdefault(frozenset((p, q)), []).append((p, q, o))
    hinges, is_facet = [], []
    for i, j in bars:
        owners = edge_tris.get(frozenset((i, j)), [])
        if len(owners) != 2:
            continue
        (p, q, k), (_, _, l) = owners
        hinges.append((p, q, k, l))
        is_facet.append(frozenset((i, j)) not in crease_set)

    hinges_arr = np.array(hinges, dtype=np.int64).reshape(-1, 4)
    rest = np.array([dihedral(x, *h) for h in hinges_arr]) if len(hinges) else np.empty(0)
    mesh = FoldedMesh(
        pattern=pattern,
        node_positions=x,
        bars=np.array(bars, dtype=np.int64),
        hinges=hinges_arr,
        hinge_rest=rest,
        hinge_is_facet=np.array(is_facet, dtype=bool),
        fold_angle=float(fold_angle),
        flipped=flip,
        triangles=np.array(triangles, dtype=np.int64),
    )
    if fold_angle > 0 and np.any(mesh.bar_lengths() <= 0):
        raise DegenerateGeometry("zero-length bar after folding")
    return mesh


def facet_planarity(mesh: FoldedMesh) -> np.ndarray:
    """Distance of each quad's fourth node from the plane of the other three (mm)."""
    x = mesh.node_positions
    out = []
    for n00, n01, n11, n10 in mesh.pattern.facet_quads:
        normal = np.cross(x[n01] - x[n00], x[n10] - x[n00])
        normal /= np.linalg.norm(normal)
        out.append(abs(np.dot(x[n11] - x[n00], normal)))
    return np.array(out)


def clamped_nodes(mesh: FoldedMesh | CreasePattern) -> frozenset[int]:
    """Bottom-left corner vertex plus its bottom-row neighbour."""
    return frozenset({0, 1})


def top_edge_nodes(mesh: FoldedMesh | CreasePattern) -> list[int]:
    pattern = mesh.pattern if isinstance(mesh, FoldedMesh) else mesh
    r = pattern.rows - 1
    return [r * pattern.cols + c for c in range(pattern.cols)]


def bottom_row_nodes(mesh: FoldedMesh | CreasePattern) -> list[int]:
    pattern = mesh.pattern if isinstance(mesh, FoldedMesh) else mesh
    return list(range(pattern.cols))
