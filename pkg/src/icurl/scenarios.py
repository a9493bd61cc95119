"""Instance generators: random MDPs, deterministic-policy enumeration and the
maritime pilot gridworld."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .mdp import TabularMdp, solve_mdp

MAX_ENUMERATION = 10**6

# action order: north, east, south, west
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))
ACTION_NAMES = ("N", "E", "S", "W")

OPEN, SHARK, START = ".", "#", "S"
PORTS = ("A", "B", "C")
CELL_CHARS = {OPEN, SHARK, START, *PORTS}


class LayoutError(ValueError):
    pass


def random_mdp(num_states: int, num_actions: int, branching: int, gamma: float, seed: int) -> TabularMdp:
    """Garnet-style MDP: each (s, a) moves to ``branching`` distinct successors
    with Dirichlet(1) weights; the initial distribution is Dirichlet(1)."""
    if not 1 <= branching <= num_states:
        raise ValueError("branching must lie in [1, num_states]")
    rng = np.random.default_rng(seed)
    T = np.zeros((num_states, num_actions, num_states))
    for s in range(num_states):
        for a in range(num_actions):
            succ = rng.choice(num_states, size=branching, replace=False)
            T[s, a, succ] = rng.dirichlet(np.ones(branching))
    T /= T.sum(axis=2, keepdims=True)
    mu0 = rng.dirichlet(np.ones(num_states))
    mu0 /= mu0.sum()
    return TabularMdp(T, mu0, gamma)


def enumerate_deterministic_policies(mdp: TabularMdp):
    """All A**S deterministic policies as one-hot (S, A) arrays, in lexicographic
    order of the action tuple. Returns an iterator."""
    S, A = mdp.shape
    if A**S > MAX_ENUMERATION:
        raise ValueError(f"{A}**{S} policies exceeds the enumeration limit {MAX_ENUMERATION}")

    def gen():
        eye = np.eye(A)
        for actions in itertools.product(range(A), repeat=S):
            yield eye[list(actions)]

    return gen()


@dataclass(frozen=True)
class GridworldSpec:
    grid: tuple[str, ...]
    step_cost: float = -0.1
    port_rewards: dict = field(default_factory=lambda: {"A": 10.0, "B": 5.0, "C": 1.0})
    shark_penalty: float = -100.0
    slip: float = 0.0
    gamma: float = 0.9

    def __post_init__(self):
        rows = tuple(self.grid)
        if not rows or any(len(r) != len(rows[0]) for r in rows):
            raise LayoutError("grid rows must be non-empty and of equal width")
        chars = set("".join(rows))
        if not chars <= CELL_CHARS:
            raise LayoutError(f"unknown cell characters {sorted(chars - CELL_CHARS)}")
        if "".join(rows).count(START) != 1:
            raise LayoutError("layout needs exactly one start cell")
        if self.step_cost > 0:
            raise LayoutError("step_cost must be nonpositive")
        if not 0.0 <= self.slip < 1.0:
            raise LayoutError("slip must lie in [0, 1)")
        if not 0.0 < self.gamma < 1.0:
            raise LayoutError("gamma must lie in (0, 1)")
        object.__setattr__(self, "grid", rows)

    @property
    def height(self) -> int:
        return len(self.grid)

    @property
    def width(self) -> int:
        return len(self.grid[0])

    def state(self, row: int, col: int) -> int:
        return row * self.width + col

    def cell(self, state: int) -> str:
        return self.grid[state // self.width][state % self.width]

    def cells(self, label: str) -> list[int]:
        return [s for s in range(self.height * self.width) if self.cell(s) == label]

    @property
    def start(self) -> int:
        return self.cells(START)[0]

    def is_terminal(self, state: int) -> bool:
        return self.cell(state) in (SHARK, *PORTS)

    def cell_reward(self, state: int) -> float:
        c = self.cell(state)
        if c == SHARK:
            return self.shark_penalty
        if c in PORTS:
            return float(self.port_rewards[c])
        return self.step_cost


HEADER_KEYS = {
    "step_cost", "reward_a", "reward_b", "reward_c", "shark_penalty", "slip", "gamma",
}


def parse_layout(text: str) -> GridworldSpec:
    """Parse a layout document: ``key: value`` header lines, then ASCII grid rows.
    Lines starting with ``;`` are comments."""
    header: dict[str, float] = {}
    grid = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith(";"):
            continue
        if ":" in line:
            key, _, val = line.partition(":")
            key = key.strip().lower()
            if key not in HEADER_KEYS:
                raise LayoutError(f"line {lineno}: unknown header key {key!r}")
            try:
                header[key] = float(val)
            except ValueError:
                raise LayoutError(f"line {lineno}: bad number {val.strip()!r}") from None
        else:
            grid.append(line)
    if not grid:
        raise LayoutError("layout has no grid rows")
    ports = {"A": 10.0, "B": 5.0, "C": 1.0}
    for p in PORTS:
        ports[p] = header.pop(f"reward_{p.lower()}", ports[p])
    return GridworldSpec(grid=tuple(grid), port_rewards=ports, **header)


def load_layout(path: str | Path | None = None) -> GridworldSpec:
    """Load a layout file; ``None`` gives the shipped default."""
    if path is None:
        text = resources.files("icurl").joinpath("data/maritime.txt").read_text()
    else:
        text = Path(path).read_text()
    return parse_layout(text)


def default_maritime_spec(**overrides) -> GridworldSpec:
    spec = load_layout()
    return replace(spec, **overrides) if overrides else spec


def build_maritime(spec: GridworldSpec | None = None) -> tuple[TabularMdp, np.ndarray]:
    """Gridworld MDP with N/E/S/W moves and the true reward table.

    Entering a cell pays that cell's reward (port value, shark penalty, or the
    step cost for open water). Ports and sharks are absorbing with zero reward.
    Bumping into the border leaves the captain in place. With ``slip > 0`` a
    move deviates to each perpendicular direction with probability slip/2.
    """
    spec = default_maritime_spec() if spec is None else spec
    H, W = spec.height, spec.width
    S, A = H * W, len(MOVES)
    T = np.zeros((S, A, S))
    R = np.zeros((S, A))

    def target(s, move):
        r, c = divmod(s, W)
        nr, nc = r + move[0], c + move[1]
        return spec.state(nr, nc) if 0 <= nr < H and 0 <= nc < W else s

    for s in range(S):
        if spec.is_terminal(s):
            T[s, :, s] = 1.0
            continue
        for a, move in enumerate(MOVES):
            outcomes = [(1.0 - spec.slip, move)]
            if spec.slip > 0:
                lateral = (MOVES[(a + 1) % 4], MOVES[(a + 3) % 4])
                outcomes += [(spec.slip / 2, m) for m in lateral]
            for p, m in outcomes:
                s2 = target(s, m)
                T[s, a, s2] += p
                R[s, a] += p * spec.cell_reward(s2)
    mu0 = np.zeros(S)
    mu0[spec.start] = 1.0
    return TabularMdp(T, mu0, spec.gamma), R


def render_policy(spec: GridworldSpec, policy) -> str:
    """ASCII rendering of the most likely action in each open cell."""
    arrows = {0: "^", 1: ">", 2: "v", 3: "<"}
    policy = np.asarray(policy)
    lines = []
    for r in range(spec.height):
        row = []
        for c in range(spec.width):
            s = spec.state(r, c)
            ch = spec.cell(s)
            row.append(ch if spec.is_terminal(s) else arrows[int(np.argmax(policy[s]))])
        lines.append("".join(row))
    return "\n".join(lines)


def port_arrival_probabilities(spec: GridworldSpec, mdp: TabularMdp, policy, horizon: int = 2000) -> dict[str, float]:
    """Probability of eventually being absorbed in each port (or any shark),
    ignoring discounting, when rolling out ``policy`` from the start cell."""
    P = np.einsum("sa,sat->st", policy, mdp.transition)
    dist = mdp.mu0.copy()
    for _ in range(horizon):
        dist = dist @ P
    out = {p: float(sum(dist[s] for s in spec.cells(p))) for p in PORTS}
    out["shark"] = float(sum(dist[s] for s in spec.cells(SHARK)))
    return out


@dataclass(frozen=True, eq=False)
class PlantedReward:
    """An expert that is exactly optimal for a known tabular reward."""

    mdp: TabularMdp
    theta_star: np.ndarray
    expert_policy: np.ndarray
    anchor_index: int
    bound: float


def planted_reward_instance(seed: int = 1, num_states: int = 4, num_actions: int = 3) -> PlantedReward:
    """Random garnet MDP plus a reward theta* drawn from U(-1, 1) per (s, a).

    theta* is rescaled so that the anchored coordinate has magnitude 1. That
    coordinate is a non-expert action in the expert's most visited state, so
    pinning it removes the zero reward without pinning the expert's own choice.
    The box bound is the smallest of {2, 3, ...} containing theta*.
    """
    mdp = random_mdp(num_states, num_actions, 2, 0.9, seed)
    rng = np.random.default_rng(100 + seed)
    theta = rng.uniform(-1, 1, size=num_states * num_actions)
    pi, _, d = solve_mdp(mdp, theta.reshape(mdp.shape), 1e-12)
    s = int(np.argmax(d.sum(axis=1)))
    j = s * num_actions + (int(np.argmax(pi[s])) + 1) % num_actions
    theta = theta / abs(theta[j])
    pi, _, _ = solve_mdp(mdp, theta.reshape(mdp.shape), 1e-12)
    bound = float(max(2, int(np.ceil(np.abs(theta).max()))))
    return PlantedReward(mdp, theta, pi, j, bound)
