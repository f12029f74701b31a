"""Low-energy solutions of Ising instances and their ensemble average.

Three solvers return a :class:`SolutionPool`:

* :func:`simulated_anneal`: Metropolis single-spin flips, beta ramped linearly.
* :func:`simulated_quantum_anneal`: path-integral Monte Carlo over Trotter
  replicas with a decreasing transverse field.
* :func:`brute_force_solve`: exhaustive enumeration for small instances.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels, _rng
from .model import ising_energy, spins_to_binary

MAX_EXACT_DIM = 24
MAX_ENSEMBLE = 20


@dataclass(frozen=True)
class AnnealSchedule:
    sweeps: int = 10000
    beta_initial: float = 0.1
    beta_final: float = 3.0
    reads: int = 1000
    gamma_initial: float = 3.0
    gamma_final: float = 0.01
    trotter_slices: int = 20

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.reads < 1:
            raise ValueError("reads must be >= 1")
        if not 0 < self.beta_initial <= self.beta_final:
            raise ValueError("need 0 < beta_initial <= beta_final")

    def check_sqa(self):
        if not 0 < self.gamma_final <= self.gamma_initial:
            raise ValueError("need 0 < gamma_final <= gamma_initial")
        if self.trotter_slices < 2:
            raise ValueError("trotter_slices must be >= 2")


@dataclass(frozen=True)
class SampleRecord:
    spins: np.ndarray
    energy: float
    multiplicity: int


class SolutionPool:
    """Distinct states sorted by energy, ties broken by lexicographic spin order.

    Stored column-wise: ``spins`` is ``(m, dim)`` int8, ``energies`` and
    ``multiplicities`` have length ``m``. ``energies`` exclude the instance offset.
    """

    def __init__(self, spins, energies, multiplicities, instance_digest=""):
        self.spins = np.asarray(spins, dtype=np.int8)
        self.energies = np.asarray(energies, dtype=np.float64)
        self.multiplicities = np.asarray(multiplicities, dtype=np.int64)
        self.instance_digest = instance_digest
        for arr in (self.spins, self.energies, self.multiplicities):
            arr.setflags(write=False)

    @classmethod
    def from_states(cls, m, states):
        """Aggregate raw sampler states (one row per read) into a pool."""
        uniq, counts = np.unique(np.asarray(states, dtype=np.int8), axis=0, return_counts=True)
        energies = np.atleast_1d(ising_energy(m, uniq))
        order = _energy_order(uniq, energies)
        return cls(uniq[order], energies[order], counts[order], m.digest())

    def __len__(self):
        return self.energies.size

    @property
    def reads(self):
        return int(self.multiplicities.sum())

    @property
    def records(self):
        return [SampleRecord(s, float(e), int(c))
                for s, e, c in zip(self.spins, self.energies, self.multiplicities)]

    @property
    def ground_energy(self):
        return float(self.energies[0])

    def to_tsv(self, fh):
        fh.write("energy\tmultiplicity\tspins\n")
        for s, e, c in zip(self.spins, self.energies, self.multiplicities):
            fh.write(f"{float(e)!r}\t{c}\t{''.join('+' if v > 0 else '-' for v in s)}\n")

    def __eq__(self, other):
        return (isinstance(other, SolutionPool)
                and self.instance_digest == other.instance_digest
                and np.array_equal(self.spins, other.spins)
                and np.array_equal(self.energies, other.energies)
                and np.array_equal(self.multiplicities, other.multiplicities))

    def __repr__(self):
        return f"SolutionPool({len(self)} states, {self.reads} reads, ground={self.ground_energy:.6g})"


def _energy_order(spins, energies):
    # np.lexsort sorts by the last key first
    keys = [spins[:, j] for j in range(spins.shape[1] - 1, -1, -1)] + [energies]
    return np.lexsort(keys)


def _dense(m):
    return np.ascontiguousarray(m.h, dtype=np.float64), m.coupling_matrix()


def simulated_anneal(m, schedule, seed):
    """Classical annealing; one independent random start per read."""
    h, J = _dense(m)
    seeds = _rng.read_seeds(seed, schedule.reads)
    states = _kernels.sa_batch(h, J, schedule.sweeps, schedule.beta_initial,
                               schedule.beta_final, seeds)
    return SolutionPool.from_states(m, states)


def simulated_quantum_anneal(m, schedule, seed):
    """Path-integral annealing over ``trotter_slices`` periodic replicas.

    Per sweep, Gamma falls and beta rises linearly. Replicas are coupled
    by ``-(P / 2 beta) ln tanh(beta Gamma / P)``. Each replica sees the problem
    at inverse temperature ``beta / P``. The read's result is the replica with the
    lowest problem energy.
    """
    schedule.check_sqa()
    h, J = _dense(m)
    seeds = _rng.read_seeds(seed, schedule.reads)
    states = _kernels.sqa_batch(
        h, J, schedule.sweeps, schedule.beta_initial, schedule.beta_final,
        schedule.gamma_initial, schedule.gamma_final, schedule.trotter_slices, seeds)
    return SolutionPool.from_states(m, states)


def brute_force_solve(m, keep=None):
    """Enumerate all ``2**dim`` states.

    ``keep`` truncates the pool to the lowest ``keep`` states; energies of the
    returned states are recomputed directly rather than taken from the
    incremental enumeration.
    """
    n = m.dim
    if n > MAX_EXACT_DIM:
        raise ValueError(f"exhaustive search limited to dim <= {MAX_EXACT_DIM}, got {n}")
    h, J = _dense(m)
    approx = _kernels.enumerate_energies(h, J)
    total = approx.size
    if keep is None or keep >= total:
        idx = np.arange(total)
    else:
        # small margin so floating error in the walk cannot drop a true member
        margin = min(total, keep + 64)
        idx = np.argpartition(approx, margin - 1)[:margin]
    bits = (idx[:, None] >> np.arange(n)) & 1
    spins = (2 * bits - 1).astype(np.int8)
    energies = np.atleast_1d(ising_energy(m, spins))
    order = _energy_order(spins, energies)
    if keep is not None:
        order = order[:keep]
    return SolutionPool(spins[order], energies[order],
                        np.ones(order.size, dtype=np.int64), m.digest())


def ensemble_average(pool, K):
    """Mean binary weight vector of the ``min(K, len(pool))`` lowest states."""
    if not 1 <= K <= MAX_ENSEMBLE:
        raise ValueError(f"K must be in 1..{MAX_ENSEMBLE}, got {K}")
    if len(pool) == 0:
        raise ValueError("empty pool")
    top = spins_to_binary(pool.spins[:K]).astype(np.float64)
    return top.mean(axis=0)


def ensemble_prefix_means(pool, k_max=MAX_ENSEMBLE):
    """Row ``K-1`` is ``ensemble_average(pool, K)`` for ``K = 1..k_max``."""
    top = spins_to_binary(pool.spins[:k_max]).astype(np.float64)
    sums = np.cumsum(top, axis=0)
    counts = np.arange(1, top.shape[0] + 1)[:, None]
    means = sums / counts
    if means.shape[0] < k_max:
        means = np.vstack([means, np.repeat(means[-1:], k_max - means.shape[0], axis=0)])
    return means


SAMPLERS = {
    "sa": simulated_anneal,
    "sqa": simulated_quantum_anneal,
}
