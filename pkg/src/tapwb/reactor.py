"""Three-zone reactor geometry, Knudsen diffusivities and the refined 1D mesh."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

INERT_1, CATALYST, INERT_2 = 0, 1, 2


class ReactorError(ValueError):
    pass


@dataclass(frozen=True)
class ReactorSpec:
    """Reactor geometry and diffusion reference data.

    Lengths in cm, temperatures in K, diffusivities in cm^2/s, masses in amu.
    """

    zone_lengths: tuple[float, float, float] = (3.0, 0.1, 2.9)
    zone_voids: tuple[float, float, float] = (0.4, 0.4, 0.4)
    radius: float = 1.0
    temperature: float = 400.0
    ref_diffusion_inert: float = 13.5
    ref_diffusion_catalyst: float = 13.5
    ref_temperature: float = 400.0
    ref_mass: float = 40.0

    def __post_init__(self):
        if len(self.zone_lengths) != 3 or len(self.zone_voids) != 3:
            raise ReactorError("three zone lengths and three void fractions are required")
        if any(not l > 0 for l in self.zone_lengths):
            raise ReactorError(f"zone lengths must be positive: {self.zone_lengths}")
        if any(not 0 < e < 1 for e in self.zone_voids):
            raise ReactorError(f"void fractions must lie in (0, 1): {self.zone_voids}")
        for name in ("radius", "temperature", "ref_diffusion_inert", "ref_diffusion_catalyst",
                     "ref_temperature", "ref_mass"):
            if not getattr(self, name) > 0:
                raise ReactorError(f"{name} must be positive")
        if self.length < 3.5 * self.radius:
            warnings.warn(
                f"reactor length {self.length} cm is below 3.5 x radius; the 1D model may be inaccurate",
                stacklevel=2,
            )

    @property
    def length(self) -> float:
        return float(sum(self.zone_lengths))

    @property
    def catalyst_bounds(self) -> tuple[float, float]:
        l1, l2, _ = self.zone_lengths
        return l1, l1 + l2

    @property
    def area(self) -> float:
        return math.pi * self.radius**2

    def diffusion(self, mass: float) -> np.ndarray:
        """Per-zone diffusivity of a gas of the given mass."""
        inert = knudsen_diffusion(self.ref_diffusion_inert, self.ref_mass, self.ref_temperature,
                                  mass, self.temperature)
        cat = knudsen_diffusion(self.ref_diffusion_catalyst, self.ref_mass, self.ref_temperature,
                                mass, self.temperature)
        return np.array([inert, cat, inert])


def knudsen_diffusion(d_ref, m_ref, t_ref, m_gas, temperature):
    """Scale a reference Knudsen diffusivity to another gas and temperature (D ~ sqrt(T/m))."""
    for v in (d_ref, m_ref, t_ref, m_gas, temperature):
        if not v > 0:
            raise ReactorError("diffusion scaling inputs must be positive")
    return d_ref * math.sqrt((m_ref * temperature) / (m_gas * t_ref))


def diffusion_table(spec: ReactorSpec, masses) -> np.ndarray:
    """``D[i, j]`` for gas ``i`` (in the order of ``masses``) and zone ``j``."""
    return np.array([spec.diffusion(m) for m in masses]).reshape(len(masses), 3)


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray
    base_size: int
    catalyst_density: int
    zones: np.ndarray = field(repr=False)  # zone tag per cell
    base_catalyst_cells: int = 0

    @property
    def n_cells(self) -> int:
        return len(self.nodes) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def catalyst_cells(self) -> int:
        return int(np.sum(self.zones == CATALYST))

    @property
    def catalyst_nodes(self) -> np.ndarray:
        """Indices of nodes touching at least one catalyst cell (boundaries included)."""
        cells = np.flatnonzero(self.zones == CATALYST)
        return np.arange(cells[0], cells[-1] + 2)


def _zone_counts(spec: ReactorSpec, base_size: int) -> tuple[int, int, int]:
    L = spec.length
    raw = [base_size * l / L for l in spec.zone_lengths]
    counts = [max(1, int(round(r))) for r in raw]
    # keep the total at base_size by adjusting the largest zone
    big = int(np.argmax(spec.zone_lengths))
    counts[big] += base_size - sum(counts)
    if counts[big] < 1:
        raise ReactorError(f"mesh size {base_size} is too small for zone lengths {spec.zone_lengths}")
    if raw[CATALYST] < 1:
        warnings.warn(
            f"catalyst zone is narrower than one base cell; using {counts} cells per zone",
            stacklevel=3,
        )
    return tuple(counts)


def build_mesh(spec: ReactorSpec, base_size: int = 200, catalyst_density: int = 0) -> Mesh:
    """Base mesh with every catalyst cell bisected ``catalyst_density`` times.

    Each zone gets ``round(base_size * L_j / L)`` equal cells so that the zone
    boundaries are always mesh nodes.
    """
    if base_size < 10:
        raise ReactorError("mesh size must be at least 10")
    if catalyst_density < 0:
        raise ReactorError("catalyst mesh density must be >= 0")
    counts = _zone_counts(spec, base_size)
    edges = [0.0, spec.zone_lengths[0], spec.zone_lengths[0] + spec.zone_lengths[1], spec.length]
    pieces, zones = [], []
    for j in range(3):
        n = counts[j] * (2**catalyst_density if j == CATALYST else 1)
        pts = np.linspace(edges[j], edges[j + 1], n + 1)
        pieces.append(pts if j == 0 else pts[1:])
        zones.append(np.full(n, j))
    nodes = np.concatenate(pieces)
    nodes[-1] = spec.length
    widths = np.diff(nodes)
    if np.any(widths <= 0):
        bad = int(np.argmin(widths))
        raise ReactorError(f"degenerate mesh cell {bad} (width {widths[bad]})")
    nodes.setflags(write=False)
    return Mesh(nodes, base_size, catalyst_density, np.concatenate(zones), counts[CATALYST])
