"""Procedurally generated, seeded key-door-apple gridworld.

Each layout is two rooms split by a full wall with a single door. The key and
the agent start in one room, the apple in the other, so the apple is
unreachable until the key has been picked up and the door opened. The only
reward is 1.0 on entering the apple cell.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

FLOOR, WALL, KEY, DOOR_CLOSED, DOOR_OPEN, APPLE = range(6)
AGENT_CHANNEL = 6
N_CHANNELS = 7  # floor, wall, key, closed door, open door, apple, agent

NOOP, UP, DOWN, LEFT, RIGHT = range(5)
N_ACTIONS = 5
_DELTAS = {NOOP: (0, 0), UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}

_CELL_CHARS = {FLOOR: ".", WALL: "#", KEY: "k", DOOR_CLOSED: "D", DOOR_OPEN: "d", APPLE: "a"}
_CHAR_CELLS = {v: k for k, v in _CELL_CHARS.items()}


@dataclass(frozen=True)
class EnvConfig:
    width: int = 9
    height: int = 9
    step_limit: int = 200
    view_radius: int = 2
    action_repeat: int = 1

    def __post_init__(self):
        if self.width < 5 or self.height < 5:
            raise ValueError(f"grid too small: {self.width}x{self.height} (min 5x5)")
        if self.step_limit < 1:
            raise ValueError("step limit must be >= 1")

    @property
    def window_cells(self) -> int:
        side = 2 * self.view_radius + 1
        return side * side

    @property
    def obs_dim(self) -> int:
        return self.window_cells * N_CHANNELS + 1 + N_ACTIONS


@dataclass(frozen=True)
class GridState:
    cells: np.ndarray  # int8 [height, width]
    agent: tuple[int, int]
    has_key: bool
    steps: int
    seed: int
    prev_action: int | None = None
    terminated: bool = False

    def cell(self, r: int, c: int) -> int:
        h, w = self.cells.shape
        if 0 <= r < h and 0 <= c < w:
            return int(self.cells[r, c])
        return WALL


@dataclass(frozen=True)
class Observation:
    window: np.ndarray  # [side, side, N_CHANNELS] one-hot
    inventory: float
    prev_action: np.ndarray  # [N_ACTIONS] one-hot, zeros before the first action

    def vector(self) -> np.ndarray:
        return np.concatenate(
            [self.window.reshape(-1), [self.inventory], self.prev_action]
        ).astype(np.float32)


def core_slice(config: EnvConfig) -> slice:
    """Observation vector slice excluding the previous-action one-hot."""
    return slice(0, config.window_cells * N_CHANNELS + 1)


def generate(seed: int, config: EnvConfig = EnvConfig()) -> GridState:
    """Deterministic two-room layout for a seed; raises if objects cannot fit."""
    rng = np.random.default_rng(seed)
    h, w = config.height, config.width
    cells = np.full((h, w), FLOOR, dtype=np.int8)

    vertical = bool(rng.integers(0, 2))
    if vertical:
        split = int(rng.integers(2, w - 2))
        cells[:, split] = WALL
        door = (int(rng.integers(0, h)), split)
        rooms = [
            [(r, c) for r in range(h) for c in range(split)],
            [(r, c) for r in range(h) for c in range(split + 1, w)],
        ]
    else:
        split = int(rng.integers(2, h - 2))
        cells[split, :] = WALL
        door = (split, int(rng.integers(0, w)))
        rooms = [
            [(r, c) for r in range(split) for c in range(w)],
            [(r, c) for r in range(split + 1, h) for c in range(w)],
        ]
    cells[door] = DOOR_CLOSED

    start_room, apple_room = rooms if rng.integers(0, 2) == 0 else rooms[::-1]
    if len(start_room) < 2 or len(apple_room) < 1:
        raise ValueError("config too small to place agent, key and apple")

    picks = rng.choice(len(start_room), size=2, replace=False)
    agent = start_room[picks[0]]
    key = start_room[picks[1]]
    apple = apple_room[int(rng.integers(0, len(apple_room)))]
    cells[key] = KEY
    cells[apple] = APPLE

    state = GridState(cells=cells, agent=agent, has_key=False, steps=0, seed=seed)
    plan = solve_bfs(state)
    if plan is None or len(plan) > config.step_limit:
        raise ValueError(f"layout for seed {seed} not solvable within the step limit")
    return state


def step(
    state: GridState, action: int, config: EnvConfig = EnvConfig()
) -> tuple[GridState, Observation, float, bool]:
    if not 0 <= action < N_ACTIONS:
        raise ValueError(f"action id {action} out of range [0, {N_ACTIONS})")
    if state.terminated:
        raise ValueError("cannot step a terminated episode")

    dr, dc = _DELTAS[action]
    tr, tc = state.agent[0] + dr, state.agent[1] + dc
    target = state.cell(tr, tc)

    cells = state.cells
    agent = state.agent
    has_key = state.has_key
    reward = 0.0
    done = False

    if action != NOOP and target != WALL:
        if target == DOOR_CLOSED:
            if has_key:
                cells = cells.copy()
                cells[tr, tc] = DOOR_OPEN
                agent = (tr, tc)
        elif target == KEY:
            cells = cells.copy()
            cells[tr, tc] = FLOOR
            has_key = True
            agent = (tr, tc)
        elif target == APPLE:
            cells = cells.copy()
            cells[tr, tc] = FLOOR
            agent = (tr, tc)
            reward = 1.0
            done = True
        else:  # floor or open door
            agent = (tr, tc)

    steps = state.steps + 1
    if steps >= config.step_limit:
        done = True

    new_state = GridState(
        cells=cells,
        agent=agent,
        has_key=has_key,
        steps=steps,
        seed=state.seed,
        prev_action=action,
        terminated=done,
    )
    return new_state, observe(new_state, config), reward, done


_EYE = np.eye(N_CHANNELS, dtype=np.float32)


def observe(state: GridState, config: EnvConfig = EnvConfig()) -> Observation:
    """Egocentric one-hot window; cells outside the grid render as wall."""
    r0, c0 = state.agent
    rad = config.view_radius
    side = 2 * rad + 1
    padded = np.pad(state.cells, rad, constant_values=WALL)
    patch = padded[r0 : r0 + side, c0 : c0 + side]
    window = _EYE[patch]
    window[rad, rad] = _EYE[AGENT_CHANNEL]
    prev = np.zeros(N_ACTIONS, dtype=np.float32)
    if state.prev_action is not None:
        prev[state.prev_action] = 1.0
    return Observation(window=window, inventory=float(state.has_key), prev_action=prev)


def _search_nodes(state: GridState):
    """Transitions of the (position, has_key, door_open) abstraction."""
    h, w = state.cells.shape
    door = None
    for r in range(h):
        for c in range(w):
            if state.cells[r, c] in (DOOR_CLOSED, DOOR_OPEN):
                door = (r, c)
    base_open = door is None or state.cells[door] == DOOR_OPEN

    def neighbors(node):
        (r, c), has_key, door_open = node
        door_open = door_open or base_open
        for action in (UP, DOWN, LEFT, RIGHT):
            dr, dc = _DELTAS[action]
            nr, nc = r + dr, c + dc
            if not (0 <= nr < h and 0 <= nc < w):
                continue
            cell = int(state.cells[nr, nc])
            if cell == WALL:
                continue
            nk, nd = has_key, door_open
            if cell == DOOR_CLOSED and not door_open:
                if not has_key:
                    continue
                nd = True
            if cell == KEY:
                nk = True
            yield action, ((nr, nc), nk, nd)

    return neighbors


def solve_bfs(state: GridState) -> list[int] | None:
    """Shortest action sequence to the apple, or None when unreachable."""
    apple = None
    h, w = state.cells.shape
    for r in range(h):
        for c in range(w):
            if state.cells[r, c] == APPLE:
                apple = (r, c)
    if apple is None:
        return None
    neighbors = _search_nodes(state)
    start = (state.agent, state.has_key, False)
    queue = deque([start])
    parent: dict = {start: None}
    while queue:
        node = queue.popleft()
        if node[0] == apple:
            actions = []
            while parent[node] is not None:
                prev, action = parent[node]
                actions.append(action)
                node = prev
            return actions[::-1]
        for action, nxt in neighbors(node):
            if nxt not in parent:
                parent[nxt] = (node, action)
                queue.append(nxt)
    return None


def dump_layout(state: GridState) -> str:
    """Layout as UTF-8 JSON (cells as strings, agent position, inventory)."""
    rows = ["".join(_CELL_CHARS[int(x)] for x in row) for row in state.cells]
    return json.dumps(
        {
            "cells": rows,
            "agent": list(state.agent),
            "has_key": state.has_key,
            "steps": state.steps,
            "seed": state.seed,
            "prev_action": state.prev_action,
        }
    )


def load_layout(text: str) -> GridState:
    obj = json.loads(text)
    rows = obj["cells"]
    cells = np.array([[_CHAR_CELLS[ch] for ch in row] for row in rows], dtype=np.int8)
    return GridState(
        cells=cells,
        agent=tuple(obj["agent"]),
        has_key=bool(obj["has_key"]),
        steps=int(obj.get("steps", 0)),
        seed=int(obj.get("seed", 0)),
        prev_action=obj.get("prev_action"),
    )
