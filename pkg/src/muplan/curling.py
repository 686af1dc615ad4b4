"""Curling-like sheet: friction, curl, elastic stone collisions, scoring.

One decision per state: the hammer team (team 0) throws the final stone from
the origin toward a house centered down-sheet. Normalized actions map onto
physical (velocity, aim angle) ranges; the turn picks the curl direction.
Stones decelerate under constant friction, drift sideways in proportion to
speed, collide elastically (equal masses), and are removed when their center
crosses a sheet boundary.

Integration is symplectic Euler at a fixed timestep inside a numba-compiled
loop. Between near-contact phases the loop skips pair checks for a window of
steps bounded by current gaps and speeds, which cannot miss a contact because
speeds never increase while stones coast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

__all__ = [
    "HAMMER",
    "OPPONENT",
    "Stone",
    "CurlingState",
    "SheetConfig",
    "validate_state",
    "physical_shot",
    "simulate_shot",
    "score",
    "sample_hammer_state",
    "encode_state",
    "encoded_size",
]

HAMMER = 0
OPPONENT = 1


@dataclass(frozen=True)
class Stone:
    x: float
    y: float
    team: int

    def __post_init__(self) -> None:
        if self.team not in (HAMMER, OPPONENT):
            raise ValueError(f"team must be {HAMMER} or {OPPONENT}, got {self.team}")


@dataclass(frozen=True)
class CurlingState:
    """Stones at rest on the sheet, before or after the hammer throw."""

    stones: tuple[Stone, ...] = ()


@dataclass(frozen=True)
class SheetConfig:
    """Sheet geometry, physical constants, and action ranges.

    Distances in meters, speeds in m/s. The sheet spans x in
    [-width/2, width/2] and y in [0, length]; throws start at the origin
    aimed up-sheet (+y), and the house is centered on the centerline.
    """

    width: float = 4.75
    length: float = 23.0
    house_y: float = 20.0
    house_radii: tuple[float, ...] = (0.15, 0.61, 1.22, 1.83)
    stone_radius: float = 0.145
    friction: float = 0.0735
    curl: float = 0.003
    restitution: float = 1.0
    timestep: float = 0.002
    rest_speed: float = 1e-3
    max_steps: int = 60_000
    velocity_range: tuple[float, float] = (0.8, 2.8)
    angle_range: tuple[float, float] = (-0.1, 0.1)
    encode_y: tuple[float, float] = (13.5, 23.0)
    spawn_x: tuple[float, float] = (-2.2, 2.2)
    spawn_y: tuple[float, float] = (14.0, 22.5)
    max_spawn_per_team: int = 6

    def __post_init__(self) -> None:
        for name in ("width", "length", "house_y", "stone_radius", "friction",
                     "curl", "restitution", "timestep", "rest_speed"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.timestep > 0.01:
            raise ValueError("timestep above 0.01 s is too coarse for contacts")
        if self.restitution > 1.0:
            raise ValueError("restitution above 1 would create energy")
        if not all(r > 0 for r in self.house_radii) or list(self.house_radii) != sorted(
            self.house_radii
        ):
            raise ValueError("house radii must be positive and increasing")
        for lo, hi in (self.velocity_range, self.angle_range, self.encode_y,
                       self.spawn_x, self.spawn_y):
            if not lo < hi:
                raise ValueError("ranges must be increasing")
        if self.velocity_range[0] <= 0.0:
            raise ValueError("velocity range must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    @property
    def half_width(self) -> float:
        return self.width / 2.0

    @property
    def house_score_radius(self) -> float:
        """A stone counts as in the house if its center is within this."""
        return self.house_radii[-1] + self.stone_radius


def validate_state(state: CurlingState, cfg: SheetConfig) -> None:
    """Reject stones off the sheet or overlapping (touching is allowed)."""
    stones = state.stones
    for s in stones:
        if not (-cfg.half_width <= s.x <= cfg.half_width and 0.0 <= s.y <= cfg.length):
            raise ValueError(f"stone at ({s.x}, {s.y}) is off the sheet")
    min_d = 2.0 * cfg.stone_radius - 1e-9
    for i in range(len(stones)):
        for j in range(i + 1, len(stones)):
            d = math.hypot(stones[i].x - stones[j].x, stones[i].y - stones[j].y)
            if d < min_d:
                raise ValueError(f"stones {i} and {j} overlap (distance {d})")


def physical_shot(cfg: SheetConfig, velocity: float, angle: float) -> tuple[float, float, float]:
    """Map normalized (velocity, angle) to physical speed and launch velocity."""
    lo, hi = cfg.velocity_range
    speed = lo + velocity * (hi - lo)
    alo, ahi = cfg.angle_range
    phi = alo + angle * (ahi - alo)
    return speed, speed * math.sin(phi), speed * math.cos(phi)


@njit(cache=True, nogil=True)
def _integrate(pos, vel, spin, alive, radius, friction, curl, restitution, dt,
               xmin, xmax, ymin, ymax, rest_speed, max_steps):  # pragma: no cover
    n = pos.shape[0]
    rest2 = rest_speed * rest_speed
    diam = 2.0 * radius
    diam2 = diam * diam
    steps = 0
    while steps < max_steps:
        vmax2 = 0.0
        for i in range(n):
            if alive[i] == 0:
                continue
            s2 = vel[i, 0] * vel[i, 0] + vel[i, 1] * vel[i, 1]
            if s2 < rest2:
                vel[i, 0] = 0.0
                vel[i, 1] = 0.0
            elif s2 > vmax2:
                vmax2 = s2
        if vmax2 == 0.0:
            break
        vmax = math.sqrt(vmax2)

        # Largest gap-limited stretch of steps that cannot produce a contact:
        # any two stones close at most 2*vmax*dt per step and coasting never
        # speeds a stone up.
        min_gap = 1e18
        for i in range(n - 1):
            if alive[i] == 0:
                continue
            for j in range(i + 1, n):
                if alive[j] == 0:
                    continue
                if (vel[i, 0] == 0.0 and vel[i, 1] == 0.0
                        and vel[j, 0] == 0.0 and vel[j, 1] == 0.0):
                    continue
                dx = pos[j, 0] - pos[i, 0]
                dy = pos[j, 1] - pos[i, 1]
                gap = math.sqrt(dx * dx + dy * dy) - diam
                if gap < min_gap:
                    min_gap = gap
        window = int(min_gap / (2.0 * vmax * dt))
        if window < 1:
            window = 1
        elif window > 2000:
            window = 2000
        if steps + window > max_steps:
            window = max_steps - steps
        check_pairs = window == 1

        for _ in range(window):
            for i in range(n):
                if alive[i] == 0:
                    continue
                vx = vel[i, 0]
                vy = vel[i, 1]
                s2 = vx * vx + vy * vy
                if s2 == 0.0:
                    continue
                if s2 < rest2:
                    vel[i, 0] = 0.0
                    vel[i, 1] = 0.0
                    continue
                s = math.sqrt(s2)
                c = curl * spin[i]
                vel[i, 0] = vx + (-friction * vx / s + c * vy) * dt
                vel[i, 1] = vy + (-friction * vy / s - c * vx) * dt
                pos[i, 0] += vel[i, 0] * dt
                pos[i, 1] += vel[i, 1] * dt
                if pos[i, 0] < xmin or pos[i, 0] > xmax or pos[i, 1] < ymin or pos[i, 1] > ymax:
                    alive[i] = 0
            if check_pairs:
                for i in range(n - 1):
                    if alive[i] == 0:
                        continue
                    for j in range(i + 1, n):
                        if alive[j] == 0:
                            continue
                        dx = pos[j, 0] - pos[i, 0]
                        dy = pos[j, 1] - pos[i, 1]
                        d2 = dx * dx + dy * dy
                        if d2 >= diam2:
                            continue
                        d = math.sqrt(d2)
                        if d > 0.0:
                            nx = dx / d
                            ny = dy / d
                        else:
                            nx = 1.0
                            ny = 0.0
                        push = 0.5 * (diam - d)
                        pos[i, 0] -= nx * push
                        pos[i, 1] -= ny * push
                        pos[j, 0] += nx * push
                        pos[j, 1] += ny * push
                        rvn = (vel[i, 0] - vel[j, 0]) * nx + (vel[i, 1] - vel[j, 1]) * ny
                        if rvn > 0.0:
                            imp = 0.5 * (1.0 + restitution) * rvn
                            vel[i, 0] -= imp * nx
                            vel[i, 1] -= imp * ny
                            vel[j, 0] += imp * nx
                            vel[j, 1] += imp * ny
            steps += 1
    if steps >= max_steps:
        for i in range(n):
            vel[i, 0] = 0.0
            vel[i, 1] = 0.0
    return steps


def _simulate_arrays(pos, vel, spin, alive, cfg: SheetConfig) -> int:
    """Run the compiled loop on prepared arrays (mutated in place)."""
    return _integrate(
        pos, vel, spin, alive,
        cfg.stone_radius, cfg.friction, cfg.curl, cfg.restitution, cfg.timestep,
        -cfg.half_width, cfg.half_width, 0.0, cfg.length,
        cfg.rest_speed, cfg.max_steps,
    )


def simulate_shot(state: CurlingState, action, cfg: SheetConfig) -> CurlingState:
    """Throw the hammer stone per `action` and return the settled sheet.

    The thrown stone (team 0) starts at the origin; only it curls. Stones
    whose centers cross a boundary are removed. The returned state keeps
    surviving stones in their original order, thrown stone last.
    """
    validate_state(state, cfg)
    n = len(state.stones) + 1
    pos = np.zeros((n, 2), dtype=np.float64)
    vel = np.zeros((n, 2), dtype=np.float64)
    spin = np.zeros(n, dtype=np.float64)
    alive = np.ones(n, dtype=np.uint8)
    team = np.empty(n, dtype=np.int64)
    for i, s in enumerate(state.stones):
        pos[i, 0] = s.x
        pos[i, 1] = s.y
        team[i] = s.team
    _, vx, vy = physical_shot(cfg, action.velocity, action.angle)
    vel[n - 1, 0] = vx
    vel[n - 1, 1] = vy
    spin[n - 1] = float(action.turn)
    team[n - 1] = HAMMER
    _simulate_arrays(pos, vel, spin, alive, cfg)
    stones = tuple(
        Stone(float(pos[i, 0]), float(pos[i, 1]), int(team[i]))
        for i in range(n)
        if alive[i]
    )
    return CurlingState(stones)


def score(state: CurlingState, cfg: SheetConfig) -> int:
    """Hammer-team score: their stones in the house strictly closer than the
    opponent's best, minus the symmetric count. Exactly one side can score;
    a tied closest distance blanks the end."""
    r = cfg.house_score_radius
    best = [math.inf, math.inf]
    dists: tuple[list[float], list[float]] = ([], [])
    for s in state.stones:
        d = math.hypot(s.x, s.y - cfg.house_y)
        if d <= r:
            dists[s.team].append(d)
            if d < best[s.team]:
                best[s.team] = d
    hammer = sum(1 for d in dists[HAMMER] if d < best[OPPONENT])
    opponent = sum(1 for d in dists[OPPONENT] if d < best[HAMMER])
    return hammer - opponent


def sample_hammer_state(cfg: SheetConfig, rng: np.random.Generator) -> CurlingState:
    """Random pre-throw sheet: uniform stone counts per team, uniform
    non-overlapping positions in the spawn region."""
    counts = [
        int(rng.integers(0, cfg.max_spawn_per_team + 1)),
        int(rng.integers(0, cfg.max_spawn_per_team + 1)),
    ]
    min_d = 2.0 * cfg.stone_radius + 1e-6
    placed: list[tuple[float, float]] = []
    stones: list[Stone] = []
    for team, count in zip((HAMMER, OPPONENT), counts):
        for _ in range(count):
            for _attempt in range(1000):
                x = rng.uniform(cfg.spawn_x[0], cfg.spawn_x[1])
                y = rng.uniform(cfg.spawn_y[0], cfg.spawn_y[1])
                if all(math.hypot(x - px, y - py) >= min_d for px, py in placed):
                    placed.append((x, y))
                    stones.append(Stone(x, y, team))
                    break
            else:
                raise RuntimeError("could not place stones without overlap")
    return CurlingState(tuple(stones))


def _resolution_cells(cfg: SheetConfig, resolution: tuple[int, int]) -> tuple[float, float]:
    nx, ny = resolution
    if nx < 1 or ny < 1:
        raise ValueError("resolution must be positive")
    cell_x = cfg.width / nx
    cell_y = (cfg.encode_y[1] - cfg.encode_y[0]) / ny
    if abs(cell_x - cell_y) > 1e-9:
        raise ValueError(
            f"resolution {resolution} does not tile the encoded region in "
            f"square cells ({cell_x} vs {cell_y})"
        )
    return cell_x, cell_y


def encoded_size(resolution: tuple[int, int]) -> int:
    nx, ny = resolution
    return 3 * nx * ny


def encode_state(
    state: CurlingState, cfg: SheetConfig, resolution: tuple[int, int] = (25, 50)
) -> np.ndarray:
    """(3, ny, nx) planes over the scoring end: hammer stones, opponent
    stones, house mask. Row 0 is the down-sheet edge of the encoded region;
    stones outside it are omitted."""
    validate_state(state, cfg)
    nx, ny = resolution
    cell_x, cell_y = _resolution_cells(cfg, resolution)
    planes = np.zeros((3, ny, nx), dtype=np.float64)
    y0, y1 = cfg.encode_y
    for s in state.stones:
        if not (y0 <= s.y <= y1):
            continue
        ix = min(int((s.x + cfg.half_width) / cell_x), nx - 1)
        iy = min(int((s.y - y0) / cell_y), ny - 1)
        planes[s.team, iy, ix] += 1.0
    r = cfg.house_score_radius
    xc = (np.arange(nx) + 0.5) * cell_x - cfg.half_width
    yc = (np.arange(ny) + 0.5) * cell_y + y0
    in_house = (xc[None, :] ** 2 + (yc[:, None] - cfg.house_y) ** 2) <= r * r
    planes[2][in_house] = 1.0
    return planes
