"""The two-phase release mechanism: age, then add noise.

Phase 1 slides each sequence back by its age-of-information lag, reading
one possibly-stale state per sequence.  Phase 2 evaluates the query on the
aged snapshot and adds Laplace noise with scale s_1(f)/eps_c.  Correlation
amplification is accounted for in the certified budget (via d(k) in the
bounds), not by inflating the noise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import ModelError, StateSpace
from .queries import QuerySpec
from .rng import generator, laplace


@dataclass(frozen=True)
class SequenceDatabase:
    """T x s array of states; row t-1 holds the snapshot at (1-based) time t."""

    space: StateSpace
    snapshots: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.snapshots, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[1] != self.space.num_sequences:
            raise ModelError(
                f"database shape {arr.shape} does not match s={self.space.num_sequences}"
            )
        if arr.shape[0] < 1:
            raise ModelError("database needs at least one time step")
        if arr.min() < 0 or arr.max() >= self.space.num_states:
            raise ModelError(
                f"state values must lie in [0, {self.space.num_states - 1}]"
            )
        object.__setattr__(self, "snapshots", arr)

    @property
    def horizon(self) -> int:
        return self.snapshots.shape[0]

    @classmethod
    def from_csv(cls, path, space: StateSpace) -> "SequenceDatabase":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[int(v) for v in row] for row in reader if row]
        if len(header) != space.num_sequences:
            raise ModelError(
                f"database file has {len(header)} columns, expected {space.num_sequences}"
            )
        return cls(space, np.array(rows, dtype=np.int64))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"seq{i}" for i in range(self.space.num_sequences)])
            writer.writerows(self.snapshots.tolist())


@dataclass(frozen=True)
class MechanismOutput:
    value: float
    aged_snapshot: tuple
    noise_scale: float
    seed: int


def age_data(db: SequenceDatabase, t: int, age) -> tuple:
    """Phase 1: the aged snapshot (x^(i) at time t - age[i], 1-based times)."""
    from .kernel import validate_ages

    ages = validate_ages(age, db.space)
    if not 1 <= t <= db.horizon:
        raise ModelError(f"time index {t} outside the recorded horizon [1, {db.horizon}]")
    snapshot = []
    for i, a in enumerate(ages):
        idx = t - int(a)
        if idx < 1:
            raise ModelError(
                f"sequence {i}: age {a} reaches before the start of the record at t={t}"
            )
        snapshot.append(int(db.snapshots[idx - 1, i]))
    return tuple(snapshot)


def laplace_sample(scale: float, dim: int, seed: int) -> np.ndarray:
    """dim i.i.d. Laplace(0, scale) draws, deterministic given seed."""
    if scale <= 0:
        raise ModelError(f"noise scale must be positive, got {scale}")
    return laplace(generator(seed), scale, dim)


def release(
    db: SequenceDatabase, t: int, age, query: QuerySpec, eps_c: float, seed: int
) -> MechanismOutput:
    """Phase 1 + Phase 2: noisy query answer on the aged snapshot."""
    if eps_c <= 0:
        raise ModelError(f"eps_c must be positive, got {eps_c}")
    snapshot = age_data(db, t, age)
    scale = query.sensitivity(1) / eps_c
    noise = laplace_sample(scale, 1, seed)[0]
    return MechanismOutput(
        value=query.evaluate(snapshot) + noise,
        aged_snapshot=snapshot,
        noise_scale=scale,
        seed=seed,
    )
