"""Regression QUBO, Ising conversion, parameter scaling and prediction.

QUBO energy over binary ``w``::

    E(w) = w^T Q w + w^T k          (objective minus sum_n y_n^2)

Ising energy over spins ``s`` in {-1, +1}::

    H(s) = sum_i h_i s_i + sum_{i<j} J_ij s_i s_j

With ``w = (s + 1) / 2`` the two agree up to the instance offset:
``H(s) + offset == E(w(s))``.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class QuboInstance:
    Q: np.ndarray
    k: np.ndarray
    dropped_constant: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        Q = np.array(self.Q, dtype=np.float64)
        k = np.array(self.k, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] == 0:
            raise ValueError(f"Q must be a non-empty square matrix, got shape {Q.shape}")
        if k.shape != (Q.shape[0],):
            raise ValueError(f"k must have length {Q.shape[0]}, got {k.shape}")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12):
            raise ValueError("Q must be symmetric")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(k))):
            raise ValueError("QUBO entries must be finite")
        Q.setflags(write=False)
        k.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "k", k)

    @property
    def dim(self):
        return self.Q.shape[0]


@dataclass(frozen=True)
class IsingInstance:
    """Local fields ``h``, upper-triangular couplings ``J`` and a constant offset.

    ``scale`` is the product of all divisors applied by :func:`scale_ising`;
    multiplying an energy of the scaled instance by it recovers the original.
    """

    h: np.ndarray
    J: dict = field(default_factory=dict)
    offset: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        h = np.array(self.h, dtype=np.float64)
        if h.ndim != 1 or h.size == 0:
            raise ValueError("h must be a non-empty vector")
        n = h.size
        J = {}
        for (i, j), v in sorted(self.J.items()):
            i, j, v = int(i), int(j), float(v)
            if i == j:
                raise ValueError(f"self-coupling J[{i},{i}] not allowed")
            if i > j:
                i, j = j, i
            if not 0 <= i < j < n:
                raise ValueError(f"coupling ({i}, {j}) outside 0..{n - 1}")
            if not math.isfinite(v):
                raise ValueError(f"non-finite coupling at ({i}, {j})")
            if v != 0.0:
                J[(i, j)] = J.get((i, j), 0.0) + v
        if not (np.all(np.isfinite(h)) and math.isfinite(self.offset)):
            raise ValueError("fields and offset must be finite")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError("scale must be positive")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "J", dict(sorted(J.items())))
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self):
        return self.h.size

    def coupling_matrix(self):
        """Dense symmetric couplings with a zero diagonal."""
        M = np.zeros((self.dim, self.dim))
        for (i, j), v in self.J.items():
            M[i, j] = M[j, i] = v
        return M

    def digest(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.h).tobytes())
        for (i, j), v in self.J.items():
            h.update(f"{i},{j},{v!r};".encode())
        h.update(f"{float(self.offset)!r},{float(self.scale)!r}".encode())
        return h.hexdigest()


def build_qubo(data, lam):
    """QUBO for ``sum_n (y_n - w.phi_n)^2 + lam * sum(w)`` with ``sum y^2`` dropped."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if len(data) == 0:
        raise ValueError("empty dataset")
    phi = data.features.astype(np.float64)
    y = data.targets
    Q = phi.T @ phi
    k = lam - 2.0 * (phi.T @ y)
    return QuboInstance(Q, k, float(y @ y), float(lam))


def _as_binary(q_dim, w):
    w = np.asarray(w)
    if w.shape != (q_dim,):
        raise ValueError(f"expected {q_dim} entries, got shape {w.shape}")
    if not np.all((w == 0) | (w == 1)):
        raise ValueError("weights must be binary")
    return w.astype(np.float64)


def qubo_energy(q, w):
    w = _as_binary(q.dim, w)
    return float(w @ q.Q @ w + w @ q.k)


def qubo_to_ising(q):
    """Map a QUBO to spins via ``w = (s + 1) / 2``.

    Diagonal entries fold into the linear term first (``w_i^2 = w_i``), and
    each off-diagonal pair contributes ``2 Q_ij w_i w_j``.
    """
    Q = q.Q
    linear = q.k + np.diag(Q)
    upper = 2.0 * np.triu(Q, 1)
    h = linear / 2.0 + (upper.sum(axis=0) + upper.sum(axis=1)) / 4.0
    offset = linear.sum() / 2.0 + upper.sum() / 4.0
    ii, jj = np.nonzero(upper)
    J = {(int(i), int(j)): upper[i, j] / 4.0 for i, j in zip(ii, jj)}
    return IsingInstance(h, J, float(offset))


def ising_energy(m, spins):
    """Ising energy without the offset; accepts one spin vector or a stack of them."""
    s = np.asarray(spins, dtype=np.float64)
    if s.shape[-1] != m.dim:
        raise ValueError(f"expected {m.dim} spins, got {s.shape[-1]}")
    if not np.all(np.abs(s) == 1):
        raise ValueError("spins must be +1/-1")
    e = s @ m.h
    if m.J:
        keys = np.array(list(m.J.keys()))
        vals = np.array(list(m.J.values()))
        e = e + (s[..., keys[:, 0]] * s[..., keys[:, 1]]) @ vals
    return float(e) if np.ndim(e) == 0 else e


def spins_to_binary(spins):
    return ((np.asarray(spins) + 1) // 2).astype(np.int8)


def binary_to_spins(w):
    return (2 * np.asarray(w) - 1).astype(np.int8)


def scale_ising(m):
    """Divide fields, couplings and offset by the largest |h_i| or |J_ij|."""
    peak = max(np.max(np.abs(m.h)), max((abs(v) for v in m.J.values()), default=0.0))
    if peak == 0:
        raise ValueError("cannot scale an all-zero instance")
    if peak == 1.0:
        return m
    return IsingInstance(
        m.h / peak, {key: v / peak for key, v in m.J.items()},
        m.offset / peak, m.scale * peak)


def predict(w, phi):
    w = np.asarray(w, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if w.shape[-1] != phi.shape[-1]:
        raise ValueError(f"dimension mismatch: {w.shape[-1]} weights, {phi.shape[-1]} features")
    out = phi @ w
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class TargetScaler:
    """Affine map of targets onto ``[0, L]``, the range of a binary-weight prediction."""

    y_min: float
    y_max: float
    length: int

    @classmethod
    def fit(cls, y, length):
        y = np.asarray(y, dtype=float)
        lo, hi = float(y.min()), float(y.max())
        if hi == lo:
            raise ValueError("cannot normalize constant targets")
        return cls(lo, hi, int(length))

    def transform(self, y):
        return (np.asarray(y, dtype=float) - self.y_min) * (self.length / (self.y_max - self.y_min))

    def inverse(self, z):
        return self.y_min + np.asarray(z, dtype=float) * ((self.y_max - self.y_min) / self.length)

    def apply(self, data):
        return data.with_targets(self.transform(data.targets))


# -- text format -------------------------------------------------------------
#
#   # vartype spin|binary        (optional, default spin)
#   # lambda <value>             (optional, binary only)
#   n <dim> offset <value>
#   i i <linear>
#   i j <quadratic>              (i < j)
#
# For binary files the linear term is k_i + Q_ii, the quadratic term is the
# coefficient of w_i w_j (2 Q_ij) and the offset is the dropped constant.

def write_model(path_or_file, m):
    lines = []
    if isinstance(m, QuboInstance):
        lines += ["# vartype binary", f"# lambda {float(m.lam)!r}",
                  f"n {m.dim} offset {float(m.dropped_constant)!r}"]
        linear = m.k + np.diag(m.Q)
        lines += [f"{i} {i} {float(linear[i])!r}" for i in range(m.dim)]
        for i in range(m.dim):
            for j in range(i + 1, m.dim):
                if m.Q[i, j] != 0:
                    lines.append(f"{i} {j} {float(2.0 * m.Q[i, j])!r}")
    else:
        lines += ["# vartype spin", f"n {m.dim} offset {float(m.offset)!r}"]
        lines += [f"{i} {i} {float(m.h[i])!r}" for i in range(m.dim)]
        lines += [f"{i} {j} {float(v)!r}" for (i, j), v in m.J.items()]
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def read_model(path_or_file, vartype=None):
    """Parse the text format into an :class:`IsingInstance` or :class:`QuboInstance`."""
    if hasattr(path_or_file, "read"):
        text = path_or_file.read()
    else:
        with open(path_or_file, encoding="utf-8") as fh:
            text = fh.read()
    declared, lam = None, 0.0
    dim = offset = None
    linear, quad = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "vartype":
                declared = parts[1]
            elif len(parts) == 2 and parts[0] == "lambda":
                lam = float(parts[1])
            continue
        parts = line.split()
        if dim is None:
            if len(parts) != 4 or parts[0] != "n" or parts[2] != "offset":
                raise ValueError(f"line {lineno}: expected header 'n <dim> offset <value>'")
            dim, offset = int(parts[1]), float(parts[3])
            continue
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 'i j value'")
        i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        if not (0 <= i < dim and 0 <= j < dim):
            raise ValueError(f"line {lineno}: index out of range for n={dim}")
        if i == j:
            linear[i] = linear.get(i, 0.0) + v
        else:
            if i > j:
                raise ValueError(f"line {lineno}: quadratic terms need i < j")
            quad[(i, j)] = quad.get((i, j), 0.0) + v
    if dim is None:
        raise ValueError("missing header line")
    vartype = vartype or declared or "spin"
    lin = np.zeros(dim)
    for i, v in linear.items():
        lin[i] = v
    if vartype == "spin":
        return IsingInstance(lin, quad, offset)
    if vartype == "binary":
        Q = np.zeros((dim, dim))
        for (i, j), v in quad.items():
            Q[i, j] = Q[j, i] = v / 2.0
        return QuboInstance(Q, lin, offset, lam)
    raise ValueError(f"unknown vartype {vartype!r}")
