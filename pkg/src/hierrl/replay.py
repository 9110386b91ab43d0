"""Trajectory storage: FIFO replay with uniform sampling and online mixing."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "Trajectory",
    "ReplayBuffer",
    "OnlineDataUnavailable",
    "insert",
    "sample_uniform",
    "mix_batch",
    "cut_unroll",
    "write_trajectory_log",
    "read_trajectory_log",
]


class OnlineDataUnavailable(RuntimeError):
    """The online queue cannot cover its share of the batch yet.

    Single-threaded stand-in for the blocking producer/consumer contract:
    the caller collects more online data and retries.
    """


@dataclass
class Trajectory:
    """Primitive-level episode slice: parallel (observation, action, reward, done)."""

    observations: np.ndarray  # [T, obs_dim] float32
    actions: np.ndarray  # [T] int
    rewards: np.ndarray  # [T] float32
    dones: np.ndarray  # [T] bool
    generator: str = "unknown"
    seed: int = 0

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=np.float32)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.rewards = np.asarray(self.rewards, dtype=np.float32)
        self.dones = np.asarray(self.dones, dtype=bool)
        n = len(self)
        if n == 0:
            raise ValueError("trajectory must be nonempty")
        if not (len(self.actions) == len(self.rewards) == len(self.dones) == n):
            raise ValueError("trajectory field lengths differ")
        if self.dones[:-1].any():
            raise ValueError("done may be true only at the final element")

    def __len__(self) -> int:
        return self.observations.shape[0]


class ReplayBuffer:
    """Bounded FIFO of trajectories; eviction is strictly oldest-first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: deque[Trajectory] = deque()
        self.insert_count = 0

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, i: int) -> Trajectory:
        return self._items[i]


def insert(buffer: ReplayBuffer, trajectory: Trajectory) -> ReplayBuffer:
    if len(trajectory) == 0:
        raise ValueError("cannot insert an empty trajectory")
    buffer._items.append(trajectory)
    buffer.insert_count += 1
    while len(buffer._items) > buffer.capacity:
        buffer._items.popleft()
    return buffer


def sample_uniform(
    buffer: ReplayBuffer, count: int, rng: np.random.Generator
) -> list[Trajectory]:
    """I.i.d. uniform sample with replacement over stored trajectories."""
    if len(buffer) == 0:
        raise ValueError("cannot sample from an empty buffer")
    idx = rng.integers(0, len(buffer), size=count)
    return [buffer._items[i] for i in idx]


def mix_batch(
    online: Sequence,
    buffer: ReplayBuffer,
    replay_proportion: float,
    batch_size: int,
    rng: np.random.Generator,
) -> list:
    """round(p * B) items sampled from replay, the rest taken FIFO from online."""
    if not 0.0 <= replay_proportion <= 1.0:
        raise ValueError("replay proportion must be in [0, 1]")
    n_replay = round(replay_proportion * batch_size)
    n_online = batch_size - n_replay
    if n_online > len(online):
        raise OnlineDataUnavailable(
            f"need {n_online} online items, queue holds {len(online)}"
        )
    batch = list(online[:n_online])
    if n_replay > 0:
        batch.extend(sample_uniform(buffer, n_replay, rng))
    return batch


def cut_unroll(
    trajectory: Trajectory, length: int, rng: np.random.Generator
) -> tuple[int, int]:
    """Uniform window [start, stop) of at most `length` steps."""
    t = len(trajectory)
    if t <= length:
        return 0, t
    start = int(rng.integers(0, t - length + 1))
    return start, start + length


def write_trajectory_log(path: str, trajectories: Sequence[Trajectory]) -> None:
    """One UTF-8 JSON record per trajectory (offline reruns and fixtures)."""
    with open(path, "w", encoding="utf-8") as f:
        for traj in trajectories:
            rec = {
                "generator": traj.generator,
                "seed": traj.seed,
                "observations": traj.observations.tolist(),
                "actions": traj.actions.tolist(),
                "rewards": traj.rewards.tolist(),
                "dones": traj.dones.tolist(),
            }
            f.write(json.dumps(rec) + "\n")


def read_trajectory_log(path: str) -> list[Trajectory]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            out.append(
                Trajectory(
                    observations=np.array(rec["observations"], dtype=np.float32),
                    actions=np.array(rec["actions"]),
                    rewards=np.array(rec["rewards"], dtype=np.float32),
                    dones=np.array(rec["dones"]),
                    generator=rec.get("generator", "unknown"),
                    seed=int(rec.get("seed", 0)),
                )
            )
    return out
