"""Desk-scale environments: a discrete gridworld, a sparse-reward point maze,
and a uniform random-walk baseline.

Layouts are plain text grids: ``#`` wall, ``.`` free, ``S`` start, ``G`` goal.
The gridworld can emit either a one-hot vector over all cells or normalized
(x, y) coordinates; the maze emits the agent's pose.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

Array = np.ndarray

GRID_ACTIONS = ((-1, 0), (0, 1), (1, 0), (0, -1))  # up, right, down, left

U_MAZE_LAYOUT = [
    "########",
    "#G.....#",
    "######.#",
    "######.#",
    "######.#",
    "######.#",
    "#S.....#",
    "########",
]


def parse_grid_map(lines: list[str]) -> dict:
    """Validate and decode a text layout into walls/start/goal."""
    if not lines:
        raise ValueError("empty layout")
    width = len(lines[0])
    if any(len(row) != width for row in lines):
        raise ValueError("layout rows must share one width")
    height = len(lines)
    walls = np.zeros((height, width), dtype=bool)
    start = goal = None
    for r, row in enumerate(lines):
        for c, ch in enumerate(row):
            if ch == "#":
                walls[r, c] = True
            elif ch == "S":
                start = (r, c)
            elif ch == "G":
                goal = (r, c)
            elif ch != ".":
                raise ValueError(f"unknown map character {ch!r} at ({r},{c})")
    return {"walls": walls, "start": start, "goal": goal,
            "width": width, "height": height}


def load_grid_map(path: str) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return [ln.rstrip("\n") for ln in fh if ln.strip()]


def open_room(width: int, height: int) -> list[str]:
    rows = ["#" * width]
    rows += ["#" + "." * (width - 2) + "#" for _ in range(height - 2)]
    rows.append("#" * width)
    return rows


def four_rooms(size: int) -> list[str]:
    """Square four-room layout with one doorway per dividing half-wall."""
    if size < 7 or size % 2 == 0:
        raise ValueError("four_rooms needs an odd size >= 7")
    mid = size // 2
    q1 = (1 + mid) // 2          # doorway positions at the quarter points
    q3 = (mid + size - 1) // 2
    grid = [["." for _ in range(size)] for _ in range(size)]
    for i in range(size):
        grid[0][i] = grid[size - 1][i] = "#"
        grid[i][0] = grid[i][size - 1] = "#"
        grid[mid][i] = "#"
        grid[i][mid] = "#"
    for r, c in ((mid, q1), (mid, q3), (q1, mid), (q3, mid)):
        grid[r][c] = "."
    grid[2][2] = "S"
    return ["".join(row) for row in grid]


class GridWorld:
    """Cell-based world with four cardinal actions; bumps leave the agent put."""

    discrete_states = True

    def __init__(self, layout: list[str], obs_mode: str = "one_hot_binary",
                 horizon: int = 50, random_start: bool = True, seed: int = 0):
        if obs_mode not in ("one_hot_binary", "xy_coords"):
            raise ValueError(f"unknown observation mode {obs_mode!r}")
        parsed = parse_grid_map(layout)
        self.layout = list(layout)
        self.walls = parsed["walls"]
        self.width = parsed["width"]
        self.height = parsed["height"]
        self.start_cell = parsed["start"]
        self.goal_cell = parsed["goal"]
        self.obs_mode = obs_mode
        self.horizon = horizon
        self.random_start = random_start
        self.free_cells = [(r, c) for r in range(self.height)
                           for c in range(self.width) if not self.walls[r, c]]
        if not self.free_cells:
            raise ValueError("layout has no free cells")
        if self.start_cell is None:
            self.start_cell = self.free_cells[0]
        self.n_cells = self.width * self.height
        self.obs_dim = self.n_cells if obs_mode == "one_hot_binary" else 2
        self.n_actions = 4
        self._rng = np.random.default_rng(seed)
        self._seed = seed
        self.agent_cell = self.start_cell
        self._steps = 0

    def clone(self, seed: int | None = None) -> "GridWorld":
        return GridWorld(self.layout, self.obs_mode, self.horizon,
                         self.random_start, self._seed if seed is None else seed)

    # ------------------------------------------------------------- helpers

    def cell_index(self, cell: tuple[int, int]) -> int:
        return cell[0] * self.width + cell[1]

    def observation_for(self, cell: tuple[int, int]) -> Array:
        if self.obs_mode == "one_hot_binary":
            obs = np.zeros(self.n_cells, dtype=np.float64)
            obs[self.cell_index(cell)] = 1.0
            return obs
        r, c = cell
        return np.array([c / max(1, self.width - 1),
                         r / max(1, self.height - 1)], dtype=np.float64)

    def observe(self) -> Array:
        return self.observation_for(self.agent_cell)

    def goal_observation(self) -> Array | None:
        if self.goal_cell is None:
            return None
        return self.observation_for(self.goal_cell)

    # ------------------------------------------------------------ dynamics

    def reset(self, seed: int | None = None) -> Array:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
            self._seed = seed
        if self.random_start:
            self.agent_cell = self.free_cells[
                int(self._rng.integers(len(self.free_cells)))]
        else:
            self.agent_cell = self.start_cell
        self._steps = 0
        return self.observe()

    def step(self, action: int) -> tuple[Array, float, bool]:
        action = int(action)
        if not 0 <= action < 4:
            raise ValueError(f"action must be in 0..3, got {action}")
        dr, dc = GRID_ACTIONS[action]
        r, c = self.agent_cell
        nr, nc = r + dr, c + dc
        if 0 <= nr < self.height and 0 <= nc < self.width and not self.walls[nr, nc]:
            self.agent_cell = (nr, nc)
        self._steps += 1
        if self.goal_cell is None:
            reward = 0.0
        else:
            reward = 0.0 if self.agent_cell == self.goal_cell else -1.0
        return self.observe(), reward, self._steps >= self.horizon

    def distance_to_goal(self) -> float | None:
        if self.goal_cell is None:
            return None
        dr = self.agent_cell[0] - self.goal_cell[0]
        dc = self.agent_cell[1] - self.goal_cell[1]
        return math.hypot(dr, dc)

    # ------------------------------------------------------------- oracles

    def adjacent_free_pairs(self) -> list[tuple[tuple[int, int], tuple[int, int]]]:
        """All one-step reachable free-cell pairs (each once)."""
        pairs = []
        for (r, c) in self.free_cells:
            for dr, dc in ((0, 1), (1, 0)):
                nb = (r + dr, c + dc)
                if nb in self._free_set():
                    pairs.append(((r, c), nb))
        return pairs

    def _free_set(self):
        if not hasattr(self, "_free_cache"):
            self._free_cache = set(self.free_cells)
        return self._free_cache

    def bfs_distances(self) -> Array:
        """(n_free, n_free) matrix of shortest step counts between free cells;
        unreachable pairs get -1."""
        index = {cell: i for i, cell in enumerate(self.free_cells)}
        n = len(self.free_cells)
        out = np.full((n, n), -1, dtype=np.int64)
        for src in self.free_cells:
            si = index[src]
            out[si, si] = 0
            queue = deque([src])
            while queue:
                cell = queue.popleft()
                base = out[si, index[cell]]
                for dr, dc in GRID_ACTIONS:
                    nb = (cell[0] + dr, cell[1] + dc)
                    if nb in index and out[si, index[nb]] < 0:
                        out[si, index[nb]] = base + 1
                        queue.append(nb)
        return out


class SparsePointMaze:
    """Kinematic point agent in a corridor maze with an all-or-nothing reward.

    Actions are (forward/backward in [-1, 1], rotation in [-0.25, 0.25]);
    reward is 0 within ``goal_radius`` of the target and -1 elsewhere.
    """

    discrete_states = False

    def __init__(self, layout: list[str] | None = None, horizon: int = 200,
                 speed: float = 0.5, goal_radius: float = 1.5,
                 margin: float = 0.1, seed: int = 0):
        parsed = parse_grid_map(layout or U_MAZE_LAYOUT)
        self.layout = list(layout or U_MAZE_LAYOUT)
        self.walls = parsed["walls"]
        self.width = parsed["width"]
        self.height = parsed["height"]
        if parsed["start"] is None or parsed["goal"] is None:
            raise ValueError("maze layout needs S and G cells")
        self.start_xy = (parsed["start"][1] + 0.5, parsed["start"][0] + 0.5)
        self.goal_xy = (parsed["goal"][1] + 0.5, parsed["goal"][0] + 0.5)
        self.horizon = horizon
        self.speed = speed
        self.goal_radius = goal_radius
        self.margin = margin
        self.action_low = np.array([-1.0, -0.25])
        self.action_high = np.array([1.0, 0.25])
        self.obs_dim = 4
        self._seed = seed
        self.clipped_actions = 0
        self.x, self.y = self.start_xy
        self.theta = 0.0
        self._steps = 0

    def clone(self, seed: int | None = None) -> "SparsePointMaze":
        return SparsePointMaze(self.layout, self.horizon, self.speed,
                               self.goal_radius, self.margin,
                               self._seed if seed is None else seed)

    def observe(self) -> Array:
        return np.array([self.x / self.width, self.y / self.height,
                         math.cos(self.theta), math.sin(self.theta)],
                        dtype=np.float64)

    def goal_observation(self) -> Array:
        gx, gy = self.goal_xy
        return np.array([gx / self.width, gy / self.height, 1.0, 0.0],
                        dtype=np.float64)

    def reset(self, seed: int | None = None) -> Array:
        if seed is not None:
            self._seed = seed
        self.x, self.y = self.start_xy
        self.theta = 0.0
        self._steps = 0
        return self.observe()

    def _position_free(self, x: float, y: float) -> bool:
        for dx in (-self.margin, self.margin):
            for dy in (-self.margin, self.margin):
                r, c = int(y + dy), int(x + dx)
                if not (0 <= r < self.height and 0 <= c < self.width):
                    return False
                if self.walls[r, c]:
                    return False
        return True

    def step(self, action) -> tuple[Array, float, bool]:
        a = np.asarray(action, dtype=np.float64)
        clipped = np.clip(a, self.action_low, self.action_high)
        if not np.array_equal(a, clipped):
            self.clipped_actions += 1
        self.theta = math.atan2(math.sin(self.theta + clipped[1]),
                                math.cos(self.theta + clipped[1]))
        dx = clipped[0] * self.speed * math.cos(self.theta)
        dy = clipped[0] * self.speed * math.sin(self.theta)
        if self._position_free(self.x + dx, self.y):
            self.x += dx
        if self._position_free(self.x, self.y + dy):
            self.y += dy
        self._steps += 1
        reward = 0.0 if self.distance_to_goal() < self.goal_radius else -1.0
        return self.observe(), reward, self._steps >= self.horizon

    def distance_to_goal(self) -> float:
        return math.hypot(self.x - self.goal_xy[0], self.y - self.goal_xy[1])

    @property
    def agent_cell(self) -> tuple[int, int]:
        return (int(self.y), int(self.x))


def random_action(env, rng: np.random.Generator):
    if getattr(env, "n_actions", None) is not None:
        return int(rng.integers(env.n_actions))
    return rng.uniform(env.action_low, env.action_high)


def random_walk_rollout(env, n_episodes: int, seed: int) -> Array:
    """Uniform-random policy; returns per-cell visit counts (height, width)."""
    rng = np.random.default_rng(seed)
    counts = np.zeros((env.height, env.width), dtype=np.int64)
    env.reset(seed=seed)
    for _ in range(n_episodes):
        env.reset()
        done = False
        while not done:
            _, _, done = env.step(random_action(env, rng))
            r, c = env.agent_cell
            counts[r, c] += 1
    return counts
