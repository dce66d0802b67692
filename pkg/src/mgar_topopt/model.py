"""Discretized thermal problem on a structured grid of unit elements.

Node and element numbering is lexicographic with x varying fastest:
node ``(i, j[, k])`` has index ``i + (nx + 1) * (j + (ny + 1) * k)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from mgar_topopt.config import ParsedConfig


class ModelError(ValueError):
    """Raised when a model cannot be built from the given parameters."""


# Local corner offsets, counter-clockwise in 2D; bottom face then top face in 3D.
CORNERS_2D = np.array([[0, 0], [1, 0], [1, 1], [0, 1]])
CORNERS_3D = np.array(
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
     [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]]
)


def corner_offsets(dim: int) -> np.ndarray:
    return CORNERS_2D if dim == 2 else CORNERS_3D


@dataclass(frozen=True, eq=False)
class Grid:
    """Structured grid bookkeeping: node counts, connectivity, coordinates."""

    nel: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.nel)

    @property
    def nodes_per_axis(self) -> tuple[int, ...]:
        return tuple(n + 1 for n in self.nel)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.nodes_per_axis))

    @property
    def n_elem(self) -> int:
        return int(np.prod(self.nel))

    def node_index(self, *ijk) -> np.ndarray:
        """Flat node index for per-axis node coordinates (broadcastable)."""
        idx = np.asarray(ijk[-1])
        for axis in range(self.dim - 2, -1, -1):
            idx = idx * self.nodes_per_axis[axis] + np.asarray(ijk[axis])
        return idx

    @cached_property
    def element_ijk(self) -> np.ndarray:
        """(n_elem, dim) integer lower-corner coordinates of every element."""
        axes = [np.arange(n) for n in self.nel]
        mesh = np.meshgrid(*axes, indexing="ij")
        # x fastest: ravel in Fortran order
        return np.stack([m.ravel(order="F") for m in mesh], axis=1)

    @cached_property
    def node_coords(self) -> np.ndarray:
        axes = [np.arange(n) for n in self.nodes_per_axis]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel(order="F") for m in mesh], axis=1).astype(float)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.element_ijk + 0.5

    @cached_property
    def edof(self) -> np.ndarray:
        """(n_elem, 2**dim) element-to-node connectivity."""
        corners = corner_offsets(self.dim)
        ijk = self.element_ijk[:, None, :] + corners[None, :, :]
        return self.node_index(*(ijk[..., a] for a in range(self.dim))).astype(np.int64)

    def element_field(self, values: np.ndarray) -> np.ndarray:
        """View a flat element vector as an array indexed ``[k, j, i]``."""
        return np.asarray(values).reshape(self.nel[::-1])


@dataclass(frozen=True, eq=False)
class ThermalModel:
    dim: int
    nel: tuple[int, ...]
    source: np.ndarray
    dirichlet: np.ndarray
    k0: float = 1.0
    kmin: float = 1e-3
    penal: float = 3.0
    element_size: float = 1.0
    grid: Grid = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "nel", tuple(int(n) for n in self.nel))
        object.__setattr__(self, "grid", Grid(self.nel))
        src = np.asarray(self.source, dtype=float).ravel()
        object.__setattr__(self, "source", src)
        bc = np.unique(np.asarray(self.dirichlet, dtype=np.int64))
        object.__setattr__(self, "dirichlet", bc)
        self.validate()

    def validate(self, nl: int = 1) -> None:
        if self.dim not in (2, 3) or len(self.nel) != self.dim:
            raise ModelError(f"nel must have {self.dim} entries for dim={self.dim}")
        if not self.k0 > self.kmin > 0:
            raise ModelError("require k0 > kmin > 0")
        check_divisibility(self.nel, nl)
        if self.source.shape != (self.grid.n_elem,):
            raise ModelError(f"source must have {self.grid.n_elem} entries")
        if np.any(self.source < 0) or not np.any(self.source > 0):
            raise ModelError("source values must be >= 0 with at least one > 0")
        if self.dirichlet.size == 0:
            raise ModelError("Dirichlet node set is empty")
        if self.dirichlet[0] < 0 or self.dirichlet[-1] >= self.grid.n_nodes:
            raise ModelError("Dirichlet node index out of range")

    @property
    def n_nodes(self) -> int:
        return self.grid.n_nodes

    @property
    def n_elem(self) -> int:
        return self.grid.n_elem

    @cached_property
    def free_mask(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.dirichlet] = False
        return mask

    @property
    def side_length(self) -> int:
        """Domain side length L in elements (axial length for 3D quarter models)."""
        return max(self.nel)


def check_divisibility(nel, nl: int) -> None:
    factor = 2 ** (nl - 1)
    for axis, n in enumerate(nel):
        if n <= 0 or n % factor:
            raise ModelError(
                f"mesh.nel[{axis}] = {n} must be a positive multiple of "
                f"2^(nl-1) = {factor} for nl = {nl}"
            )


def _nearest_span(target: float, parity: int, minimum: int) -> int:
    """Nearest integer to ``target`` with the given parity, at least ``minimum``."""
    lo = int(np.floor(target))
    candidates = [c for c in range(lo - 2, lo + 4) if c % 2 == parity % 2 and c >= minimum]
    return min(candidates, key=lambda c: (abs(c - target), c))


def mid_left_nodes(nel) -> np.ndarray:
    """Nodes on x = 0 within the centered segment of length L/10."""
    nx, ny = nel
    span = _nearest_span(ny / 10, ny, 2 if ny % 2 == 0 else 1)
    lo = (ny - span) // 2
    j = np.arange(lo, lo + span + 1)
    return j * (nx + 1)


def back_center_nodes(nel, quarter: bool) -> np.ndarray:
    """Nodes on the back face (z = 0) inside the centered square of side L/8.

    For a quarter model the symmetry planes are x = nx and y = ny, so the
    patch sits in that corner of the back face.
    """
    nx, ny, nz = nel
    grid = Grid(tuple(nel))
    if quarter:
        half = max(1, int(round(nz / 16)))
        xs = np.arange(nx - half, nx + 1)
        ys = np.arange(ny - half, ny + 1)
    else:
        side_x = _nearest_span(nx / 8, nx, 2 if nx % 2 == 0 else 1)
        side_y = _nearest_span(ny / 8, ny, 2 if ny % 2 == 0 else 1)
        xs = np.arange((nx - side_x) // 2, (nx - side_x) // 2 + side_x + 1)
        ys = np.arange((ny - side_y) // 2, (ny - side_y) // 2 + side_y + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    return np.sort(grid.node_index(xx.ravel(), yy.ravel(), np.zeros(xx.size, dtype=int)))


def is_quarter_geometry(nel) -> bool:
    return len(nel) == 3 and 2 * nel[0] == nel[2] and 2 * nel[1] == nel[2]


def dirichlet_from_preset(name: str, nel) -> np.ndarray:
    dim = len(nel)
    if name == "auto":
        name = "mid-left" if dim == 2 else (
            "back-center-quarter" if is_quarter_geometry(nel) else "back-center")
    if name == "mid-left" and dim == 2:
        return mid_left_nodes(nel)
    if name == "back-center" and dim == 3:
        return back_center_nodes(nel, quarter=False)
    if name == "back-center-quarter" and dim == 3:
        return back_center_nodes(nel, quarter=True)
    raise ModelError(f"unknown boundary preset {name!r} for dim={dim}")


def quadrant_source(nel, values) -> np.ndarray:
    """Per-element source from four values: top-left, top-right, bottom-left, bottom-right."""
    grid = Grid(tuple(nel))
    c = grid.centroids
    right = c[:, 0] > nel[0] / 2
    top = c[:, 1] > nel[1] / 2
    q1, q2, q3, q4 = values
    return np.where(top, np.where(right, q2, q1), np.where(right, q4, q3)).astype(float)


def read_vector_file(path, dtype=float) -> np.ndarray:
    """Whitespace- or comma-separated numbers, ``#`` comments allowed."""
    with open(path) as fh:
        text = " ".join(line.split("#", 1)[0] for line in fh)
    tokens = text.replace(",", " ").split()
    return np.array(tokens, dtype=float).astype(dtype)


def build_model(config: "ParsedConfig") -> ThermalModel:
    nel = tuple(config.nel)
    check_divisibility(nel, config.nl)
    n_elem = int(np.prod(nel))
    if config.source_file:
        source = read_vector_file(config.source_file)
        if source.size != n_elem:
            raise ModelError(f"source file has {source.size} values, expected {n_elem}")
    elif config.source_quadrants:
        source = quadrant_source(nel, config.source_quadrants)
    else:
        source = np.full(n_elem, config.source_uniform)
    if config.boundary_file:
        dirichlet = read_vector_file(config.boundary_file, dtype=int)
    else:
        dirichlet = dirichlet_from_preset(config.boundary_preset, nel)
    model = ThermalModel(
        dim=config.dim, nel=nel, source=source, dirichlet=dirichlet,
        k0=config.k0, kmin=config.kmin, penal=config.penal,
    )
    model.validate(config.nl)
    return model


def heat_load(model: ThermalModel) -> np.ndarray:
    """Consistent nodal load: each element spreads Q_e V_e equally to its corners."""
    grid = model.grid
    n_corner = 2 ** model.dim
    share = model.source * model.element_size ** model.dim / n_corner
    q = np.bincount(grid.edof.ravel(), weights=np.repeat(share, n_corner),
                    minlength=grid.n_nodes)
    q[model.dirichlet] = 0.0
    return q
