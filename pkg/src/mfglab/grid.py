"""Uniform time grids on [0, T]."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpec


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``0 = t_0 < ... < t_n = T``.

    The last node is set to ``T`` exactly so rounding in ``k * dt`` never
    shifts the terminal time.
    """

    T: float
    n_steps: int
    times: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.T > 0 and np.isfinite(self.T)):
            raise InvalidSpec(f"horizon must be positive, got {self.T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise InvalidSpec(f"n_steps must be a positive integer, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        t = np.arange(self.n_steps + 1, dtype=float) * (float(self.T) / self.n_steps)
        t[-1] = float(self.T)
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @property
    def dt(self) -> float:
        return float(self.T) / self.n_steps

    def __len__(self):
        return self.n_steps + 1

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.T, self.n_steps * factor)

    def index_of(self, t: float) -> int:
        """Index of the grid node nearest to ``t``."""
        if t < -1e-12 or t > self.T + 1e-12:
            raise ValueError(f"time {t} outside [0, {self.T}]")
        return int(np.argmin(np.abs(self.times - t)))
