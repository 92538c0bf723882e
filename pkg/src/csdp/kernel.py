"""Exact joint dynamics on the product state space.

The marginal evolution alone does not determine a joint law over
snapshots.  We use the minimal joint chain consistent with it: given the
current snapshot a = (a_1, ..., a_s), next-step states are conditionally
independent, with sequence j drawn from the mixture

    sum_k  lam[j, k] * P[j][k][. , a_k]

Backward (aged) conditionals are always evaluated at stationarity.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .model import DEFAULT_ENUMERATION_CAP, CmcModel, ModelError, StateSpace
from .rng import generator

STATIONARY = "stationary"


@dataclass(frozen=True)
class JointKernel:
    """Column-stochastic kernel over joint snapshots plus its stationary law.

    ``states[i]`` is the tuple of per-sequence states encoded by index i
    (big-endian: the last sequence varies fastest).
    """

    space: StateSpace
    matrix: np.ndarray  # (m^s, m^s), column-stochastic
    states: tuple
    stationary: np.ndarray  # (m^s,)

    def index(self, state) -> int:
        m, s = self.space.num_states, self.space.num_sequences
        state = tuple(int(v) for v in state)
        if len(state) != s or any(not 0 <= v < m for v in state):
            raise ModelError(f"{state} is not a valid joint state for s={s}, m={m}")
        idx = 0
        for v in state:
            idx = idx * m + v
        return idx


def _joint_stationary(K: np.ndarray, tol: float = 1e-13, max_iter: int = 10**6) -> np.ndarray:
    n = K.shape[0]
    pi = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = K @ pi
        if np.abs(nxt - pi).sum() <= tol:
            return nxt
        pi = nxt
    raise ModelError("joint stationary distribution did not converge")


def joint_kernel(model: CmcModel, cap: int = DEFAULT_ENUMERATION_CAP) -> JointKernel:
    """Build the exact product-space kernel of a model.

    Refuses spaces larger than `cap` joint states; callers with big models
    should fall back to trajectory sampling.
    """
    from .model import validate_model

    report = validate_model(model)
    if not report.ok:
        raise ModelError("invalid model: " + "; ".join(report.violations))
    model.space.check_cap(cap)
    s, m = model.space.num_sequences, model.space.num_states
    states = tuple(itertools.product(range(m), repeat=s))
    n = len(states)
    K = np.empty((n, n))
    for ai, a in enumerate(states):
        laws = []
        for j in range(s):
            v = np.zeros(m)
            for k in range(s):
                if model.weights[j, k]:
                    v += model.weights[j, k] * model.transitions[j, k][:, a[k]]
            laws.append(v)
        for bi, b in enumerate(states):
            p = 1.0
            for j in range(s):
                p *= laws[j][b[j]]
            K[bi, ai] = p
    return JointKernel(model.space, K, states, _joint_stationary(K))


def validate_ages(age, space: StateSpace) -> np.ndarray:
    ages = np.atleast_1d(np.asarray(age, int))
    if ages.shape == (1,) and space.num_sequences > 1:
        ages = np.full(space.num_sequences, ages[0])
    if ages.shape != (space.num_sequences,):
        raise ModelError(
            f"age vector has shape {ages.shape}, expected ({space.num_sequences},)"
        )
    if np.any(ages < 0):
        raise ModelError(f"ages must be nonnegative, got {ages.tolist()}")
    return ages


def aged_joint(kernel: JointKernel, age) -> np.ndarray:
    """Joint law J[z, x] of (aged snapshot z, current snapshot x) at stationarity.

    z_i is the state of sequence i at `age[i]` steps before x.  With a
    uniform age the law is pi[z] * K^t[x, z]; heterogeneous ages are
    handled by forward dynamic programming over the trajectory, recording
    each coordinate when its lag is reached.
    """
    ages = validate_ages(age, kernel.space)
    n = kernel.matrix.shape[0]
    T = int(ages.max())
    if np.all(ages == ages[0]):
        Kt = np.linalg.matrix_power(kernel.matrix, T)
        return (Kt * kernel.stationary[None, :]).T

    s, m = kernel.space.num_sequences, kernel.space.num_states
    # dist[w, r] = Pr[current joint state w, recorded coordinates r], where r
    # enumerates the already-recorded aged coordinates (in sequence order).
    record_at = {}  # step -> list of sequences recorded after that step's state
    for i in range(s):
        record_at.setdefault(T - int(ages[i]), []).append(i)
    dist = kernel.stationary[:, None].copy()  # (n, 1): nothing recorded yet
    recorded = []

    def record(dist, seqs):
        reps = m ** len(seqs)
        out = np.zeros((n, dist.shape[1] * reps))
        for w, state in enumerate(kernel.states):
            vals = tuple(state[i] for i in seqs)
            offset = 0
            for v in vals:
                offset = offset * m + v
            out[w, offset::reps] = dist[w]
        return out

    for step in range(T + 1):
        if step in record_at:
            dist = record(dist, record_at[step])
            recorded.extend(record_at[step])
        if step < T:
            dist = kernel.matrix @ dist
    # reorder recorded coordinates into sequence order and assemble J[z, x]
    J = np.zeros((n, n))
    digits = list(itertools.product(range(m), repeat=s))
    for r, rec_vals in enumerate(digits):
        z = [0] * s
        for pos, i in enumerate(recorded):
            z[i] = rec_vals[pos]
        zi = 0
        for v in z:
            zi = zi * m + v
        J[zi, :] += dist[:, r]
    return J


def backward_conditional(kernel: JointKernel, age) -> np.ndarray:
    """Conditional table B[z, x] = Pr[aged snapshot z | current snapshot x].

    Columns are probability vectors.  Conditioning states with zero mass
    under the stationary law are rejected by name.
    """
    J = aged_joint(kernel, age)
    px = J.sum(axis=0)
    dead = np.nonzero(px <= 0)[0]
    if dead.size:
        raise ModelError(
            f"cannot condition on state {kernel.states[dead[0]]}: "
            "zero probability under the stationary law"
        )
    return J / px[None, :]


def sample_trajectory(kernel: JointKernel, initial, horizon: int, seed: int) -> np.ndarray:
    """Sample `horizon` joint snapshots; returns an array of shape (T, s).

    `initial` is a joint state tuple/index, or the string "stationary" to
    draw the start from the stationary law.  Deterministic given seed.
    """
    if horizon < 1:
        raise ModelError(f"horizon must be >= 1, got {horizon}")
    rng = generator(seed)
    n = kernel.matrix.shape[0]
    if isinstance(initial, str):
        if initial != STATIONARY:
            raise ModelError(f"unknown initial distribution '{initial}'")
        cur = int(np.searchsorted(np.cumsum(kernel.stationary), rng.random()))
    elif np.isscalar(initial):
        cur = int(initial)
        if not 0 <= cur < n:
            raise ModelError(f"initial state index {cur} out of range")
    else:
        cur = kernel.index(initial)
    cum = np.cumsum(kernel.matrix, axis=0)
    out = np.empty((horizon, kernel.space.num_sequences), dtype=np.int64)
    out[0] = kernel.states[cur]
    for t in range(1, horizon):
        cur = int(np.searchsorted(cum[:, cur], rng.random(), side="right"))
        cur = min(cur, n - 1)
        out[t] = kernel.states[cur]
    return out


def sample_states(kernel: JointKernel, dist: np.ndarray, steps: int, count: int,
                  rng) -> np.ndarray:
    """Vectorized helper: draw `count` starts from `dist`, run `steps` kernel
    steps each, return (start_index, end_index) pairs of shape (count, 2)."""
    cum0 = np.cumsum(dist)
    cur = np.searchsorted(cum0, rng.random(count), side="right")
    np.clip(cur, 0, len(dist) - 1, out=cur)
    start = cur.copy()
    cum = np.cumsum(kernel.matrix, axis=0)
    n = kernel.matrix.shape[0]
    for _ in range(steps):
        u = rng.random(count)
        # next state: count of cumulative columns below u, per current state
        cur = (u[:, None] > cum[:, cur].T).sum(axis=1)
        np.clip(cur, 0, n - 1, out=cur)
    return np.stack([start, cur], axis=1)


def kernel_marginals(kernel: JointKernel, blocks: np.ndarray) -> np.ndarray:
    """One joint step from a product distribution, marginalized per sequence.

    Used in tests to confirm consistency with evolve_distribution.
    """
    s, m = kernel.space.num_sequences, kernel.space.num_states
    joint = np.ones(len(kernel.states))
    for idx, state in enumerate(kernel.states):
        for j in range(s):
            joint[idx] *= blocks[j][state[j]]
    nxt = kernel.matrix @ joint
    out = np.zeros((s, m))
    for idx, state in enumerate(kernel.states):
        for j in range(s):
            out[j, state[j]] += nxt[idx]
    return out
