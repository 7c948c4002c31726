"""Grid, block and sensor geometry.

Coordinates are meters with the origin at the grid corner.  Cells and blocks
are indexed row-major: cell ``row * n + col`` spans
``[col*10, (col+1)*10) x [row*10, (row+1)*10)``; rows run along ``y``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ExhaustedRejection, OutOfRange, UnsupportedCount
from .sensing import MIN_SEPARATION

CELL_SIZE = 10.0
MAX_REJECTION_ATTEMPTS = 10_000
SUPPORTED_COARSE_COUNTS = (4, 8, 16)


@dataclass(frozen=True)
class GridGeometry:
    n: int
    block_side: int
    cell_size: float = CELL_SIZE

    def __post_init__(self):
        if self.n < 1 or self.block_side < 1 or self.n % self.block_side:
            raise OutOfRange(f"block side {self.block_side} does not divide grid side {self.n}")

    @property
    def side(self) -> float:
        return self.n * self.cell_size

    @property
    def n_cells(self) -> int:
        return self.n * self.n

    @property
    def blocks_per_side(self) -> int:
        return self.n // self.block_side

    @property
    def n_blocks(self) -> int:
        return self.blocks_per_side ** 2

    @property
    def cells_per_block(self) -> int:
        return self.block_side ** 2

    def contains(self, point) -> bool:
        x, y = point
        return 0.0 <= x <= self.side and 0.0 <= y <= self.side

    def cell_of(self, point) -> int:
        x, y = point
        col = min(max(int(math.floor(x / self.cell_size)), 0), self.n - 1)
        row = min(max(int(math.floor(y / self.cell_size)), 0), self.n - 1)
        return row * self.n + col

    def cell_rowcol(self, cell_id: int) -> tuple[int, int]:
        if not 0 <= cell_id < self.n_cells:
            raise OutOfRange(f"cell {cell_id} outside a {self.n}x{self.n} grid")
        return divmod(cell_id, self.n)

    def block_of_cell(self, cell_id: int) -> int:
        row, col = self.cell_rowcol(cell_id)
        return (row // self.block_side) * self.blocks_per_side + col // self.block_side

    def block_of(self, point) -> int:
        return self.block_of_cell(self.cell_of(point))

    def block_rect(self, block_id: int) -> tuple[float, float, float, float]:
        """``(x0, y0, x1, y1)`` of a block in meters."""
        if not 0 <= block_id < self.n_blocks:
            raise OutOfRange(f"block {block_id} outside {self.n_blocks} blocks")
        brow, bcol = divmod(block_id, self.blocks_per_side)
        w = self.block_side * self.cell_size
        return bcol * w, brow * w, (bcol + 1) * w, (brow + 1) * w

    def cells_in_block(self, block_id: int) -> list[int]:
        """Cell ids of a block in row-major order; position in the list is the local label."""
        brow, bcol = divmod(block_id, self.blocks_per_side)
        bs = self.block_side
        return [(brow * bs + r) * self.n + bcol * bs + c for r in range(bs) for c in range(bs)]

    def to_dict(self) -> dict:
        return {"n": self.n, "block_side": self.block_side, "cell_size": self.cell_size}


def _closest_divisor(n: int) -> int:
    root = math.sqrt(n)
    divisors = [d for d in range(1, n + 1) if n % d == 0]
    # min() keeps the first (smaller) divisor on a tie
    return min(divisors, key=lambda d: abs(d - root))


def make_grid(n: int) -> GridGeometry:
    """Square grid of ``n x n`` cells with blocks of side closest to ``sqrt(n)``."""
    if not 2 <= n <= 16:
        raise OutOfRange(f"grid side must be in [2, 16], got {n}")
    return GridGeometry(n=n, block_side=_closest_divisor(n))


def centers(grid: GridGeometry, level: str = "cell") -> np.ndarray:
    """Row-major ``(k, 2)`` array of cell or block centers."""
    if level == "cell":
        k, w = grid.n, grid.cell_size
    elif level == "block":
        k, w = grid.blocks_per_side, grid.block_side * grid.cell_size
    else:
        raise ValueError(f"level must be 'cell' or 'block', got {level!r}")
    rows, cols = np.divmod(np.arange(k * k), k)
    return np.column_stack([(cols + 0.5) * w, (rows + 0.5) * w])


@dataclass(frozen=True)
class SensorLayout:
    coarse: np.ndarray
    fine: dict[int, np.ndarray] = field(default_factory=dict)

    def all_sensors(self) -> np.ndarray:
        """Distinct positions over the coarse and fine levels, in first-seen order."""
        pts = [self.coarse] + [self.fine[b] for b in sorted(self.fine)]
        stacked = np.concatenate(pts, axis=0) if pts else np.zeros((0, 2))
        _, first = np.unique(np.round(stacked, 9), axis=0, return_index=True)
        return stacked[np.sort(first)]

    def to_dict(self) -> dict:
        return {
            "coarse": self.coarse.tolist(),
            "fine": {str(b): v.tolist() for b, v in sorted(self.fine.items())},
        }


def _snap(v: float, step: float) -> float:
    return math.floor(v / step + 0.5) * step


def coarse_positions(grid: GridGeometry, count: int) -> np.ndarray:
    """Centered lattice snapped to cell corners.

    ``count = k*k`` uses a ``k x k`` lattice at ``(i + 1/2) * side / k``;
    ``count = 8`` uses the 3x3 lattice without its center.  Snapping to cell
    corners keeps every cell center at least ``cell_size / sqrt(2)`` away.
    """
    if count not in SUPPORTED_COARSE_COUNTS:
        raise UnsupportedCount(f"coarse sensor count must be one of {SUPPORTED_COARSE_COUNTS}, got {count}")
    k = 3 if count == 8 else math.isqrt(count)
    coords = [_snap((i + 0.5) * grid.side / k, grid.cell_size) for i in range(k)]
    if len(set(coords)) != k:
        raise UnsupportedCount(f"{count} sensors do not fit on a {grid.n}x{grid.n} grid")
    pts = [(x, y) for y in coords for x in coords]
    if count == 8:
        del pts[4]
    return np.array(pts, dtype=float)


def fine_positions(grid: GridGeometry, block_id: int) -> np.ndarray:
    """Midpoints of the block's bottom, left, right and top edges."""
    x0, y0, x1, y1 = grid.block_rect(block_id)
    xm, ym = (x0 + x1) / 2, (y0 + y1) / 2
    return np.array([(xm, y0), (x0, ym), (x1, ym), (xm, y1)], dtype=float)


def deploy_sensors(grid: GridGeometry, coarse_count: int) -> SensorLayout:
    fine = {b: fine_positions(grid, b) for b in range(grid.n_blocks)}
    return SensorLayout(coarse=coarse_positions(grid, coarse_count), fine=fine)


@dataclass(frozen=True)
class TxLocation:
    x: float
    y: float
    cell_id: int
    block_id: int

    @property
    def point(self) -> np.ndarray:
        return np.array([self.x, self.y])


def _sensor_array(sensors) -> np.ndarray:
    if isinstance(sensors, SensorLayout):
        return sensors.all_sensors()
    if sensors is None:
        return np.zeros((0, 2))
    return np.asarray(sensors, dtype=float).reshape(-1, 2)


def sample_tx(grid: GridGeometry, cell_id: int, setting: str, rng: np.random.Generator | None = None,
              sensors=None) -> TxLocation:
    """Transmitter location inside ``cell_id``.

    ``discrete`` returns the cell center.  ``continuous`` draws uniformly in
    the cell and rejects draws closer than 5 m to any sensor (``sensors`` may
    be a ``SensorLayout``, in which case all of its sensors count).
    """
    row, col = grid.cell_rowcol(cell_id)
    block = grid.block_of_cell(cell_id)
    cs = grid.cell_size
    if setting == "discrete":
        return TxLocation((col + 0.5) * cs, (row + 0.5) * cs, cell_id, block)
    if setting != "continuous":
        raise ValueError(f"setting must be 'continuous' or 'discrete', got {setting!r}")
    pts = _sensor_array(sensors)
    for _ in range(MAX_REJECTION_ATTEMPTS):
        x = (col + rng.random()) * cs
        y = (row + rng.random()) * cs
        if pts.size == 0 or np.min(np.hypot(pts[:, 0] - x, pts[:, 1] - y)) >= MIN_SEPARATION:
            return TxLocation(float(x), float(y), cell_id, block)
    raise ExhaustedRejection(f"no point of cell {cell_id} is {MIN_SEPARATION} m from every sensor")
