"""Geometric model of the simulated multi-die package.

Three identical chiplets sit side by side on an interposer. Die-to-die wires
terminate in dedicated driver tiles arranged in a vertical column just inside
the transmitting chiplet's edge; each tile holds 4 sites of 6 drivers
(24 drivers per tile). The general fabric is a uniform grid of slice cells,
each carrying 8 register-pair spots (16 registers), and ring-oscillator
guidepost blocks of 256 oscillators can be placed anywhere on a die.

Coordinates are micrometres, package origin at the bottom-left corner.
Node ids are plain strings:

    sll:<boundary>:<tile>:<site>:<lane>     die-to-die wire driver
    ff:<chiplet>:<col>:<row>:<pair>         fabric register-pair spot
    ro:<block>:<index>                      ring oscillator

A fabric spot models the two physically coincident registers of a slice
register pair; counts quoted "in registers" are twice the spot count.

Layout constants not fixed by die dimensions or driver counts (pitches,
column offset, footprint radii) are model parameters with documented
defaults; only ratios of optical footprints are contractual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import overlap_weight, rects_overlap

KIND_FABRIC = "fabric_register"
KIND_SLL = "sll_driver"
KIND_RO = "ring_oscillator"

# registers per fabric spot (a slice register pair images as one blob)
REGISTERS_PER_SPOT = 2


class FloorplanConfigError(ValueError):
    """Invalid floorplan configuration."""


class PlacementError(FloorplanConfigError):
    """Overlapping or out-of-die block placement."""


class UnknownNodeError(KeyError):
    """Node id does not resolve to a node in the plan."""


@dataclass(frozen=True)
class RoBlockPlacement:
    """Placement of one 256-oscillator guidepost block (centre, absolute µm)."""

    block_id: str
    chiplet: int
    x_um: float
    y_um: float


@dataclass(frozen=True)
class FloorPlanConfig:
    chiplet_count: int = 3
    chiplet_width_um: float = 11660.0
    chiplet_height_um: float = 26000.0
    tiles_per_boundary: int = 720
    sites_per_tile: int = 4
    drivers_per_tile: int = 24
    # optical footprints; the ratio is an area ratio (see module docstring)
    fabric_register_radius_um: float = 0.6
    driver_fabric_footprint_ratio: float = 4.0
    # invented layout constants
    slice_pitch_um: float = 100.0
    register_spot_pitch_um: float = 2.5
    lane_pitch_um: float = 5.0
    site_pitch_um: float = 5.0
    laguna_column_offset_um: float = 30.0
    ro_grid: int = 16
    ro_pitch_um: float = 4.0
    ro_blocks: tuple[RoBlockPlacement, ...] = field(default_factory=tuple)

    @property
    def lanes_per_site(self) -> int:
        return self.drivers_per_tile // self.sites_per_tile

    @property
    def driver_radius_um(self) -> float:
        return self.fabric_register_radius_um * math.sqrt(self.driver_fabric_footprint_ratio)


@dataclass(frozen=True)
class NodeRef:
    """Resolved node: identity, kind, centre position and optical footprint."""

    id: str
    kind: str
    x_um: float
    y_um: float
    radius_um: float
    boundary: int | None = None
    tile: int | None = None
    site: int | None = None
    lane: int | None = None
    chiplet: int | None = None
    block: str | None = None

    @property
    def position(self) -> tuple[float, float]:
        return (self.x_um, self.y_um)


# offsets of the 8 register-pair spots inside a slice cell, in units of
# register_spot_pitch_um (2 columns x 4 rows, centred)
_SPOT_COLS = np.array([-0.5, 0.5])
_SPOT_ROWS = np.array([-1.5, -0.5, 0.5, 1.5])


class FloorPlan:
    """Immutable geometric model; safe for concurrent read access."""

    def __init__(self, config: FloorPlanConfig):
        _validate_config(config)
        self.config = config
        c = config

        self.package_width_um = c.chiplet_count * c.chiplet_width_um
        self.package_height_um = c.chiplet_height_um
        self.chiplet_rects = [
            (i * c.chiplet_width_um, 0.0, (i + 1) * c.chiplet_width_um, c.chiplet_height_um)
            for i in range(c.chiplet_count)
        ]
        # boundary b separates chiplet b from chiplet b+1
        self.boundary_x_um = [(b + 1) * c.chiplet_width_um for b in range(c.chiplet_count - 1)]
        self.boundary_count = len(self.boundary_x_um)

        self.tile_pitch_um = (
            c.chiplet_height_um / c.tiles_per_boundary if c.tiles_per_boundary else 0.0
        )
        tile_h = (c.lanes_per_site - 1) * c.lane_pitch_um + 2 * c.driver_radius_um
        if c.tiles_per_boundary and tile_h > self.tile_pitch_um:
            raise FloorplanConfigError(
                f"{c.tiles_per_boundary} tiles do not fit on a "
                f"{c.chiplet_height_um} um boundary (tile height {tile_h:.1f} um "
                f"> pitch {self.tile_pitch_um:.1f} um)"
            )

        self.fabric_cols = int(c.chiplet_width_um // c.slice_pitch_um)
        self.fabric_rows = int(c.chiplet_height_um // c.slice_pitch_um)

        self._ro_blocks = {p.block_id: p for p in c.ro_blocks}
        self._ro_order = [p.block_id for p in c.ro_blocks]
        _validate_ro_blocks(self, c)

    # -- counts ------------------------------------------------------------

    @property
    def sll_driver_count(self) -> int:
        return self.boundary_count * self.config.tiles_per_boundary * self.config.drivers_per_tile

    @property
    def fabric_spot_count(self) -> int:
        return self.config.chiplet_count * self.fabric_cols * self.fabric_rows * 8

    @property
    def ro_node_count(self) -> int:
        return len(self._ro_blocks) * self.config.ro_grid**2

    @property
    def ro_block_ids(self) -> list[str]:
        return list(self._ro_order)

    # -- position rules ----------------------------------------------------

    def locate_laguna(self, tile: int, site: int, lane: int, boundary: int = 0) -> tuple[float, float]:
        """Centre of one driver; site 0 is leftmost, tile 0 / lane 0 at the bottom."""
        c = self.config
        if not (0 <= boundary < self.boundary_count):
            raise IndexError(f"boundary {boundary} out of range [0, {self.boundary_count})")
        if not (0 <= tile < c.tiles_per_boundary):
            raise IndexError(f"tile {tile} out of range [0, {c.tiles_per_boundary})")
        if not (0 <= site < c.sites_per_tile):
            raise IndexError(f"site {site} out of range [0, {c.sites_per_tile})")
        if not (0 <= lane < c.lanes_per_site):
            raise IndexError(f"lane {lane} out of range [0, {c.lanes_per_site})")
        col_x = self.boundary_x_um[boundary] - c.laguna_column_offset_um
        x = col_x + (site - (c.sites_per_tile - 1) / 2.0) * c.site_pitch_um
        tile_y = (tile + 0.5) * self.tile_pitch_um
        y = tile_y + (lane - (c.lanes_per_site - 1) / 2.0) * c.lane_pitch_um
        return (x, y)

    def _fabric_spot_position(self, chiplet: int, col: int, row: int, pair: int) -> tuple[float, float]:
        c = self.config
        cx = chiplet * c.chiplet_width_um + (col + 0.5) * c.slice_pitch_um
        cy = (row + 0.5) * c.slice_pitch_um
        x = cx + _SPOT_COLS[pair % 2] * c.register_spot_pitch_um
        y = cy + _SPOT_ROWS[pair // 2] * c.register_spot_pitch_um
        return (x, y)

    def _ro_position(self, block_id: str, idx: int) -> tuple[float, float]:
        c = self.config
        p = self._ro_blocks[block_id]
        g = c.ro_grid
        half = (g - 1) / 2.0
        return (
            p.x_um + ((idx % g) - half) * c.ro_pitch_um,
            p.y_um + ((idx // g) - half) * c.ro_pitch_um,
        )

    def ro_block_rect(self, block_id: str) -> tuple[float, float, float, float]:
        c = self.config
        p = self._ro_blocks[block_id]
        half = (c.ro_grid - 1) / 2.0 * c.ro_pitch_um + c.fabric_register_radius_um
        return (p.x_um - half, p.y_um - half, p.x_um + half, p.y_um + half)

    # -- node resolution ---------------------------------------------------

    def has_node(self, node_id: str) -> bool:
        try:
            self.node(node_id)
            return True
        except UnknownNodeError:
            return False

    def node(self, node_id: str) -> NodeRef:
        """Resolve a node id to its reference; raises UnknownNodeError."""
        parts = node_id.split(":")
        try:
            if parts[0] == "sll" and len(parts) == 5:
                b, t, s, l = (int(p) for p in parts[1:])
                x, y = self.locate_laguna(t, s, l, boundary=b)
                return NodeRef(node_id, KIND_SLL, x, y, self.config.driver_radius_um,
                               boundary=b, tile=t, site=s, lane=l)
            if parts[0] == "ff" and len(parts) == 5:
                ch, col, row, pair = (int(p) for p in parts[1:])
                if not (0 <= ch < self.config.chiplet_count and 0 <= col < self.fabric_cols
                        and 0 <= row < self.fabric_rows and 0 <= pair < 8):
                    raise UnknownNodeError(node_id)
                x, y = self._fabric_spot_position(ch, col, row, pair)
                return NodeRef(node_id, KIND_FABRIC, x, y,
                               self.config.fabric_register_radius_um, chiplet=ch)
            if parts[0] == "ro" and len(parts) == 3:
                block, idx = parts[1], int(parts[2])
                if block not in self._ro_blocks or not (0 <= idx < self.config.ro_grid**2):
                    raise UnknownNodeError(node_id)
                x, y = self._ro_position(block, idx)
                return NodeRef(node_id, KIND_RO, x, y, self.config.fabric_register_radius_um,
                               chiplet=self._ro_blocks[block].chiplet, block=block)
        except (ValueError, IndexError):
            raise UnknownNodeError(node_id) from None
        raise UnknownNodeError(node_id)

    def positions_of(self, node_ids) -> np.ndarray:
        """(N, 2) array of node centres."""
        return np.array([self.node(n).position for n in node_ids], dtype=float)

    def ro_node_ids(self, block_id: str) -> list[str]:
        if block_id not in self._ro_blocks:
            raise UnknownNodeError(block_id)
        return [f"ro:{block_id}:{i}" for i in range(self.config.ro_grid**2)]

    # -- spatial query -----------------------------------------------------

    def nodes_in_spot(self, center: tuple[float, float], radius: float):
        """All nodes whose footprint intersects the disc, with overlap weights.

        Weight is the intersection area normalised by the smaller of the
        footprint and the disc, in [0, 1]. Out-of-die centres simply return
        an empty list.
        """
        if radius <= 0:
            raise ValueError("spot radius must be positive")
        cx, cy = center
        out: list[tuple[NodeRef, float]] = []
        for ref in self._candidates_near(cx, cy, radius):
            d = math.hypot(ref.x_um - cx, ref.y_um - cy)
            if d < radius + ref.radius_um:
                w = float(overlap_weight(np.array(d), ref.radius_um, radius))
                if w > 0:
                    out.append((ref, w))
        out.sort(key=lambda p: p[0].id)
        return out

    def _candidates_near(self, cx: float, cy: float, radius: float):
        c = self.config
        # drivers: columns are at known x positions
        reach_d = radius + c.driver_radius_um
        for b, bx in enumerate(self.boundary_x_um if c.tiles_per_boundary else []):
            col_x = bx - c.laguna_column_offset_um
            half_w = (c.sites_per_tile - 1) / 2.0 * c.site_pitch_um
            if cx + reach_d < col_x - half_w or cx - reach_d > col_x + half_w:
                continue
            t_lo = max(0, int((cy - reach_d) / self.tile_pitch_um) - 1)
            t_hi = min(c.tiles_per_boundary - 1, int((cy + reach_d) / self.tile_pitch_um) + 1)
            for t in range(t_lo, t_hi + 1):
                for s in range(c.sites_per_tile):
                    for l in range(c.lanes_per_site):
                        yield self.node(f"sll:{b}:{t}:{s}:{l}")
        # fabric spots: arithmetic range over the slice grid
        reach_f = radius + c.fabric_register_radius_um + 2 * c.register_spot_pitch_um
        for ch, rect in enumerate(self.chiplet_rects):
            x0 = max(cx - reach_f, rect[0])
            x1 = min(cx + reach_f, rect[2])
            if x0 > x1:
                continue
            col_lo = max(0, int((x0 - rect[0]) / c.slice_pitch_um))
            col_hi = min(self.fabric_cols - 1, int((x1 - rect[0]) / c.slice_pitch_um))
            row_lo = max(0, int((cy - reach_f) / c.slice_pitch_um))
            row_hi = min(self.fabric_rows - 1, int((cy + reach_f) / c.slice_pitch_um))
            for col in range(col_lo, col_hi + 1):
                for row in range(row_lo, row_hi + 1):
                    for pair in range(8):
                        yield self.node(f"ff:{ch}:{col}:{row}:{pair}")
        # ring oscillators: test block bounding boxes first
        for block in self._ro_order:
            bx0, by0, bx1, by1 = self.ro_block_rect(block)
            if cx + radius < bx0 or cx - radius > bx1 or cy + radius < by0 or cy - radius > by1:
                continue
            for i in range(c.ro_grid**2):
                yield self.node(f"ro:{block}:{i}")

    # -- summaries ---------------------------------------------------------

    def geometry_summary(self) -> dict:
        """Compact geometry for UIs: rectangles and grid parameters, no nodes."""
        c = self.config
        half_w = (c.sites_per_tile - 1) / 2.0 * c.site_pitch_um + c.driver_radius_um
        columns = []
        for b, bx in enumerate(self.boundary_x_um):
            col_x = bx - c.laguna_column_offset_um
            columns.append({
                "boundary": b,
                "rect_um": [col_x - half_w, 0.0, col_x + half_w, self.package_height_um],
                "tiles": c.tiles_per_boundary,
                "tile_pitch_um": self.tile_pitch_um,
            })
        return {
            "package_um": [0.0, 0.0, self.package_width_um, self.package_height_um],
            "chiplets": [list(r) for r in self.chiplet_rects],
            "boundaries_x_um": list(self.boundary_x_um),
            "laguna_columns": columns,
            "ro_blocks": [
                {"id": b, "rect_um": list(self.ro_block_rect(b)),
                 "oscillators": c.ro_grid**2}
                for b in self._ro_order
            ],
            "fabric": {
                "slice_pitch_um": c.slice_pitch_um,
                "cols_per_chiplet": self.fabric_cols,
                "rows": self.fabric_rows,
                "registers_per_spot": REGISTERS_PER_SPOT,
            },
            "counts": {
                "sll_drivers": self.sll_driver_count,
                "fabric_spots": self.fabric_spot_count,
                "ring_oscillators": self.ro_node_count,
            },
        }


def _validate_config(c: FloorPlanConfig) -> None:
    if c.chiplet_count < 1:
        raise FloorplanConfigError("chiplet_count must be >= 1")
    if c.tiles_per_boundary < 0:
        raise FloorplanConfigError("tiles_per_boundary must be >= 0")
    if c.sites_per_tile < 1 or c.drivers_per_tile < 1:
        raise FloorplanConfigError("sites_per_tile and drivers_per_tile must be >= 1")
    if c.drivers_per_tile % c.sites_per_tile != 0:
        raise FloorplanConfigError(
            f"drivers_per_tile ({c.drivers_per_tile}) must divide evenly into "
            f"sites_per_tile ({c.sites_per_tile}) sites"
        )
    if c.driver_fabric_footprint_ratio <= 1.0:
        raise FloorplanConfigError("driver footprint must exceed the fabric register footprint")
    for p in c.ro_blocks:
        if ":" in p.block_id or not p.block_id:
            raise FloorplanConfigError(f"bad RO block id {p.block_id!r} (non-empty, no ':')")


def _validate_ro_blocks(plan: FloorPlan, c: FloorPlanConfig) -> None:
    seen: list[tuple[str, tuple[float, float, float, float]]] = []
    ids = set()
    for p in c.ro_blocks:
        if p.block_id in ids:
            raise PlacementError(f"duplicate RO block id {p.block_id!r}")
        ids.add(p.block_id)
        if not (0 <= p.chiplet < c.chiplet_count):
            raise PlacementError(f"RO block {p.block_id!r}: chiplet {p.chiplet} out of range")
        rect = plan.ro_block_rect(p.block_id)
        die = plan.chiplet_rects[p.chiplet]
        if not (die[0] <= rect[0] and rect[2] <= die[2] and die[1] <= rect[1] and rect[3] <= die[3]):
            raise PlacementError(f"RO block {p.block_id!r} extends outside chiplet {p.chiplet}")
        for other_id, other in seen:
            if rects_overlap(rect, other):
                raise PlacementError(f"RO blocks {p.block_id!r} and {other_id!r} overlap")
        seen.append((p.block_id, rect))


def build_floorplan(config: FloorPlanConfig) -> FloorPlan:
    """Build the immutable plan; deterministic for a fixed config."""
    return FloorPlan(config)


def nodes_in_spot(plan: FloorPlan, center: tuple[float, float], radius: float):
    return plan.nodes_in_spot(center, radius)


def locate_laguna(plan: FloorPlan, tile: int, site: int, lane: int, boundary: int = 0):
    return plan.locate_laguna(tile, site, lane, boundary=boundary)
