"""Sequence ingestion, preprocessing, one-hot encoding, splits and bags."""
from __future__ import annotations

import hashlib
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import _rng

ALPHABET = "ACGT"
_INDEX = {c: i for i, c in enumerate(ALPHABET)}


class EncodingError(ValueError):
    """A sequence contains a character outside A/C/G/T."""

    def __init__(self, position, character, sequence=None):
        self.position = position
        self.character = character
        self.sequence = sequence
        super().__init__(f"invalid nucleotide {character!r} at position {position}")


class DatasetError(ValueError):
    pass


def _check_sequence(seq):
    if not seq:
        raise EncodingError(0, "", seq)
    for pos, ch in enumerate(seq):
        if ch not in _INDEX:
            raise EncodingError(pos, ch, seq)


@dataclass(frozen=True)
class RawRecord:
    sequence: str
    value: float

    def __post_init__(self):
        _check_sequence(self.sequence)
        if not math.isfinite(self.value):
            raise DatasetError(f"non-finite value for {self.sequence}: {self.value}")


def encode_one_hot(sequence):
    """One-hot encode a DNA string as ``4 * len(sequence)`` 0/1 entries.

    Block ``j`` holds nucleotide ``j`` in A, C, G, T order, so ``"ACGT"``
    becomes ``1000 0100 0010 0001``.
    """
    _check_sequence(sequence)
    out = np.zeros(4 * len(sequence), dtype=np.uint8)
    for j, ch in enumerate(sequence):
        out[4 * j + _INDEX[ch]] = 1
    return out


def decode_one_hot(phi):
    phi = np.asarray(phi).reshape(-1, 4)
    return "".join(ALPHABET[int(np.argmax(row))] for row in phi)


def sequence_digest(sequence):
    return hashlib.sha256(sequence.encode("ascii")).hexdigest()


@dataclass(frozen=True)
class EncodedDataset:
    """N one-hot rows of width ``4 * seq_length`` paired with targets.

    Rows produced by :func:`preprocess` are unique; bags drawn by
    :func:`bag_sample` may repeat rows.
    """

    features: np.ndarray
    targets: np.ndarray
    seq_length: int
    sequence_labels: tuple = field(default=())

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.uint8)
        targets = np.ascontiguousarray(self.targets, dtype=np.float64)
        labels = tuple(self.sequence_labels)
        n = features.shape[0]
        if features.ndim != 2 or features.shape[1] != 4 * self.seq_length:
            raise DatasetError(
                f"features must be N x {4 * self.seq_length}, got {features.shape}")
        if targets.shape != (n,):
            raise DatasetError(f"{n} feature rows but {targets.shape[0]} targets")
        if not labels:
            labels = tuple(decode_one_hot(row) for row in features)
        if len(labels) != n:
            raise DatasetError("one sequence label per row required")
        blocks = features.reshape(n, self.seq_length, 4)
        if n and not np.all(blocks.sum(axis=2) == 1):
            raise DatasetError("every 4-column block must hold exactly one 1")
        if not np.all(np.isfinite(targets)):
            raise DatasetError("targets must be finite")
        features.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "sequence_labels", labels)

    @classmethod
    def from_sequences(cls, sequences, targets):
        sequences = list(sequences)
        if not sequences:
            raise DatasetError("empty dataset")
        length = len(sequences[0])
        if any(len(s) != length for s in sequences):
            raise DatasetError("sequences must share one length")
        features = np.stack([encode_one_hot(s) for s in sequences])
        return cls(features, np.asarray(targets, dtype=float), length, tuple(sequences))

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def take(self, indices):
        idx = np.asarray(indices, dtype=np.intp)
        return EncodedDataset(
            self.features[idx], self.targets[idx], self.seq_length,
            tuple(self.sequence_labels[i] for i in idx))

    def with_targets(self, targets):
        return EncodedDataset(self.features, targets, self.seq_length, self.sequence_labels)

    def digests(self):
        """Set of per-sequence SHA-256 digests, used for leakage checks."""
        return {sequence_digest(s) for s in self.sequence_labels}

    @property
    def digest(self):
        h = hashlib.sha256()
        for s, y in zip(self.sequence_labels, self.targets):
            h.update(f"{s}\t{float(y)!r}\n".encode("ascii"))
        return h.hexdigest()


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.10
    bag_fraction: float = 0.02
    bag_count: int = 50
    seed: int = 0

    def __post_init__(self):
        for name in ("test_fraction", "bag_fraction"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.bag_count < 1:
            raise ValueError("bag_count must be >= 1")
        _rng.check_seed(self.seed)


def round_half_up(x):
    return int(math.floor(x + 0.5))


def read_tsv(path):
    """Read ``sequence<TAB>value`` records.

    Lines starting with ``#`` and blank lines are skipped. The first data line
    is taken as a header when its second field is not numeric.
    """
    records = []
    with open(path, encoding="utf-8") as fh:
        first = True
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise DatasetError(f"{path}:{lineno}: expected sequence<TAB>value")
            try:
                value = float(parts[1])
            except ValueError:
                if first:
                    first = False
                    continue
                raise DatasetError(f"{path}:{lineno}: non-numeric value {parts[1]!r}") from None
            first = False
            try:
                records.append(RawRecord(parts[0].strip().upper(), value))
            except EncodingError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from exc
    return records


def write_tsv(path, records):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sequence\tvalue\n")
        for r in records:
            fh.write(f"{r.sequence}\t{float(r.value)!r}\n")


def write_encoded_tsv(path_or_file, data):
    """Audit dump: ``sequence``, ``y`` and the feature vector as a 0/1 string."""
    if not hasattr(path_or_file, "write"):
        with open(path_or_file, "w", encoding="utf-8", newline="\n") as fh:
            return write_encoded_tsv(fh, data)
    path_or_file.write("sequence\ty\tphi\n")
    for s, y, row in zip(data.sequence_labels, data.targets, data.features):
        path_or_file.write(f"{s}\t{float(y)!r}\t{''.join('1' if v else '0' for v in row)}\n")


def read_encoded_tsv(path):
    seqs, ys, rows = [], [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[:3] != ["sequence", "y", "phi"]:
            raise DatasetError(f"{path}: not an encoded dataset (header {header})")
        for line in fh:
            if not line.strip():
                continue
            s, y, phi = line.rstrip("\n").split("\t")
            seqs.append(s)
            ys.append(float(y))
            rows.append(np.frombuffer(phi.encode("ascii"), dtype=np.uint8) - ord("0"))
    if not seqs:
        raise DatasetError(f"{path}: empty dataset")
    data = EncodedDataset(np.stack(rows), np.array(ys), len(seqs[0]), tuple(seqs))
    if any(decode_one_hot(r) != s for r, s in zip(data.features, seqs)):
        raise DatasetError(f"{path}: phi column disagrees with sequence column")
    return data


def preprocess(records, keep_window=None, log2_transform=False):
    """Truncate to the central window, merge duplicates by mean, optionally log2.

    With an odd overhang the extra base is dropped from the right flank.
    Values are averaged on the raw scale; log2 is applied to the averages.
    """
    records = list(records)
    if not records:
        raise DatasetError("empty input")
    length = len(records[0].sequence)
    if any(len(r.sequence) != length for r in records):
        raise DatasetError("inconsistent sequence lengths")
    if keep_window is None:
        keep_window = length
    if keep_window <= 0 or keep_window > length:
        raise DatasetError(f"keep_window must be in 1..{length}, got {keep_window}")
    left = (length - keep_window) // 2

    groups = OrderedDict()
    for r in records:
        core = r.sequence[left:left + keep_window]
        groups.setdefault(core, []).append(r.value)
    seqs = list(groups)
    means = np.array([math.fsum(v) / len(v) for v in groups.values()])
    if log2_transform:
        if np.any(means <= 0) or any(r.value <= 0 for r in records):
            raise DatasetError("log2 transform needs strictly positive values")
        means = np.log2(means)
    return EncodedDataset.from_sequences(seqs, means)


def train_test_split(data, spec):
    """Hold out ``round(test_fraction * N)`` rows; both parts keep input order."""
    n = len(data)
    if n < 10:
        raise DatasetError(f"need at least 10 sequences to split, got {n}")
    n_test = round_half_up(spec.test_fraction * n)
    if n_test < 1 or n_test >= n:
        raise DatasetError(f"split of {n} rows at {spec.test_fraction} leaves an empty side")
    perm = _rng.substream(spec.seed, _rng.SPLIT).permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return data.take(train_idx), data.take(test_idx)


def bag_size(n, fraction):
    return round_half_up(fraction * n)


def bag_sample(train, spec, instance_index):
    """Bootstrap bag ``instance_index``: rows drawn with replacement.

    The draw depends only on ``(spec.seed, instance_index)``.
    """
    if not 0 <= instance_index < spec.bag_count:
        raise IndexError(f"instance_index {instance_index} outside 0..{spec.bag_count - 1}")
    size = bag_size(len(train), spec.bag_fraction)
    if size < 1:
        raise DatasetError(f"bag of {spec.bag_fraction} x {len(train)} rows is empty")
    idx = _rng.substream(spec.seed, _rng.BAG, instance_index).integers(0, len(train), size)
    return train.take(idx)
