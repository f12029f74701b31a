"""Compiled inner loops.

Every sampler read reseeds the (thread-local) numba generator from its own
seed before drawing anything, which makes the output independent of how reads
are distributed over threads.
"""
import math
import os
import warnings

import numba
import numpy as np
from numba import njit, prange

# prefer a layer that tolerates concurrent callers (the workqueue fallback
# does not).
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "threadsafe"
warnings.filterwarnings("ignore", message="The TBB threading layer requires")


@njit(cache=True)
def _linear_ramp(start, stop, step, steps):
    if steps <= 1:
        return stop
    return start + (stop - start) * step / (steps - 1)


@njit(cache=True)
def log_tanh(x):
    # log(tanh(x)) for x > 0 without overflow/underflow; tiny x is clamped so the
    # result stays finite.
    if x < 1e-300:
        x = 1e-300
    if x < 1.0:
        return math.log(math.tanh(x))
    e = math.exp(-2.0 * x)
    return math.log1p(-e) - math.log1p(e)


@njit(cache=True)
def trotter_coupling(beta, gamma, slices):
    """Ferromagnetic inter-slice coupling -(P / (2 beta)) ln tanh(beta Gamma / P)."""
    return -(slices / (2.0 * beta)) * log_tanh(beta * gamma / slices)


@njit(cache=True)
def _sa_read(h, J, sweeps, beta0, beta1, seed, out):
    np.random.seed(seed)
    n = h.size
    for i in range(n):
        out[i] = 1 if np.random.random() < 0.5 else -1
    field = np.empty(n)
    for i in range(n):
        f = h[i]
        for j in range(n):
            f += J[i, j] * out[j]
        field[i] = f
    for sweep in range(sweeps):
        beta = _linear_ramp(beta0, beta1, sweep, sweeps)
        for i in range(n):
            delta = -2.0 * out[i] * field[i]
            if delta <= 0.0 or np.random.random() < math.exp(-beta * delta):
                s_new = -out[i]
                diff = 2.0 * s_new
                for j in range(n):
                    field[j] += J[j, i] * diff
                out[i] = s_new


@njit(cache=True, parallel=True)
def sa_batch(h, J, sweeps, beta0, beta1, seeds):
    reads = seeds.size
    out = np.empty((reads, h.size), dtype=np.int8)
    for r in prange(reads):
        _sa_read(h, J, sweeps, beta0, beta1, seeds[r], out[r])
    return out


@njit(cache=True)
def _sqa_read(h, J, sweeps, beta0, beta1, gamma0, gamma1, slices, seed, out):
    np.random.seed(seed)
    n = h.size
    P = slices
    spins = np.empty((P, n), dtype=np.int8)
    for k in range(P):
        for i in range(n):
            spins[k, i] = 1 if np.random.random() < 0.5 else -1
    field = np.empty((P, n))
    for k in range(P):
        for i in range(n):
            f = h[i]
            for j in range(n):
                f += J[i, j] * spins[k, j]
            field[k, i] = f
    for sweep in range(sweeps):
        beta = _linear_ramp(beta0, beta1, sweep, sweeps)
        gamma = _linear_ramp(gamma0, gamma1, sweep, sweeps)
        j_perp = trotter_coupling(beta, gamma, P)
        beta_slice = beta / P
        for k in range(P):
            up = k + 1 if k + 1 < P else 0
            down = k - 1 if k > 0 else P - 1
            for i in range(n):
                s = spins[k, i]
                delta = -2.0 * s * field[k, i]
                delta += 2.0 * j_perp * s * (spins[up, i] + spins[down, i])
                if delta <= 0.0 or np.random.random() < math.exp(-beta_slice * delta):
                    s_new = -s
                    diff = 2.0 * s_new
                    for j in range(n):
                        field[k, j] += J[j, i] * diff
                    spins[k, i] = s_new
    # replica with the lowest classical energy; first one on ties
    best_k = 0
    best_e = np.inf
    for k in range(P):
        e = 0.0
        for i in range(n):
            e += spins[k, i] * (h[i] + 0.5 * (field[k, i] - h[i]))
        if e < best_e:
            best_e = e
            best_k = k
    for i in range(n):
        out[i] = spins[best_k, i]


@njit(cache=True, parallel=True)
def sqa_batch(h, J, sweeps, beta0, beta1, gamma0, gamma1, slices, seeds):
    reads = seeds.size
    out = np.empty((reads, h.size), dtype=np.int8)
    for r in prange(reads):
        _sqa_read(h, J, sweeps, beta0, beta1, gamma0, gamma1, slices, seeds[r], out[r])
    return out


@njit(cache=True)
def enumerate_energies(h, J):
    """Energies of all 2**n states; bit i of the state index set means spin i = +1.

    Walks the states in Gray-code order so each step flips one spin.
    """
    n = h.size
    total = 1 << n
    energies = np.empty(total)
    spins = -np.ones(n)
    field = np.empty(n)
    e = 0.0
    for i in range(n):
        f = h[i]
        for j in range(n):
            f += J[i, j] * spins[j]
        field[i] = f
        e += spins[i] * (h[i] + 0.5 * (f - h[i]))
    index = 0
    energies[0] = e
    for step in range(1, total):
        # bit to flip: lowest set bit of step
        i = 0
        while not (step >> i) & 1:
            i += 1
        e += -2.0 * spins[i] * field[i]
        spins[i] = -spins[i]
        diff = 2.0 * spins[i]
        for j in range(n):
            field[j] += J[j, i] * diff
        index ^= 1 << i
        energies[index] = e
    return energies


@njit(cache=True)
def lasso_cd(gram, xty, yty, lam, w, tol, max_sweeps):
    """Cyclic coordinate descent on ``||y - X w||^2 + lam * ||w||_1``.

    Works from the Gram matrix. Returns ``(sweeps_done, converged, history)``
    where ``history[s]`` is the objective after sweep ``s`` (index 0 = start).
    """
    n = w.size
    grad_part = gram @ w  # G w
    history = np.empty(max_sweeps + 1)
    obj = yty - 2.0 * (xty @ w) + w @ grad_part + lam * np.sum(np.abs(w))
    history[0] = obj
    half = 0.5 * lam
    for sweep in range(max_sweeps):
        max_change = 0.0
        for j in range(n):
            a = gram[j, j]
            old = w[j]
            if a == 0.0:
                new = 0.0
            else:
                rho = xty[j] - grad_part[j] + a * old
                if rho > half:
                    new = (rho - half) / a
                elif rho < -half:
                    new = (rho + half) / a
                else:
                    new = 0.0
            if new != old:
                d = new - old
                for i in range(n):
                    grad_part[i] += gram[i, j] * d
                w[j] = new
                if abs(d) > max_change:
                    max_change = abs(d)
        history[sweep + 1] = yty - 2.0 * (xty @ w) + w @ grad_part + lam * np.sum(np.abs(w))
        if max_change < tol:
            return sweep + 1, True, history[: sweep + 2]
    return max_sweeps, False, history


@njit(cache=True)
def count_inversions(a):
    """Sort ``a`` in place (merge sort) and return the number of strict inversions."""
    n = a.size
    buf = np.empty_like(a)
    swaps = 0
    width = 1
    src = a
    dst = buf
    passes = 0
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if src[j] < src[i]:
                    dst[k] = src[j]
                    swaps += mid - i
                    j += 1
                else:
                    dst[k] = src[i]
                    i += 1
                k += 1
            while i < mid:
                dst[k] = src[i]
                i += 1
                k += 1
            while j < hi:
                dst[k] = src[j]
                j += 1
                k += 1
        src, dst = dst, src
        width *= 2
        passes += 1
    if passes % 2 == 1:
        a[:] = src
    return swaps


@njit(cache=True)
def tie_pairs(sorted_values):
    """Number of tied pairs in an already sorted array."""
    total = 0
    run = 1
    for i in range(1, sorted_values.size):
        if sorted_values[i] == sorted_values[i - 1]:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    total += run * (run - 1) // 2
    return total
