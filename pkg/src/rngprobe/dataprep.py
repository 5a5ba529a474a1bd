"""Turn symbol streams into (window, next symbol) supervised datasets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stream import SampleStream


def _values(stream):
    if isinstance(stream, SampleStream):
        return stream.values
    return np.asarray(stream)


def window_count(length, N, S):
    return (length - 1 - N) // S + 1


def make_windows(stream, N, S):
    """Overlapping windows and their next-symbol labels.

    Window ``k`` is ``values[k*S : k*S + N]`` and its label is
    ``values[k*S + N]``.  Returns ``(windows, labels)`` as arrays of shape
    ``(count, N)`` and ``(count,)``; the windows are a read-only strided
    view of the stream.
    """
    values = _values(stream)
    if N < 1 or S < 1:
        raise ValueError("N and S must be >= 1")
    length = len(values)
    if length < N + 1:
        raise ValueError(f"stream of length {length} is shorter than N+1={N + 1}")
    count = window_count(length, N, S)
    windows = np.lib.stride_tricks.sliding_window_view(values, N)[:count * S:S]
    labels = values[N:N + count * S:S]
    return windows, labels


def build_alphabet(stream):
    """Sorted distinct values of the (training) stream."""
    values = _values(stream)
    if len(values) == 0:
        raise ValueError("empty stream")
    return np.unique(values)


def to_indices(values, alphabet):
    """Map raw values to alphabet positions; values not in the alphabet map to -1."""
    values = np.asarray(values)
    pos = np.searchsorted(alphabet, values)
    pos = np.minimum(pos, len(alphabet) - 1)
    return np.where(alphabet[pos] == values, pos, -1)


def encode_one_hot(window, alphabet):
    """``[N, n]`` one-hot rows; symbols outside the alphabet give a zero row."""
    idx = to_indices(window, alphabet)
    out = np.zeros((len(idx), len(alphabet)))
    known = idx >= 0
    out[np.flatnonzero(known), idx[known]] = 1.0
    return out


def split_train_test(stream, train_count, test_count, n_testsets):
    """Contiguous partition into a training block and ``n_testsets`` test blocks."""
    values = _values(stream)
    need = train_count + n_testsets * test_count
    if len(values) < need:
        raise ValueError(f"need {need} samples for the split, have {len(values)}")
    train = values[:train_count]
    tests = [values[train_count + k * test_count: train_count + (k + 1) * test_count]
             for k in range(n_testsets)]
    return train, tests


@dataclass(frozen=True)
class WindowedDataset:
    """Windows as alphabet indices plus next-symbol labels.

    ``inputs`` holds alphabet positions (``-1`` for symbols outside the
    alphabet, which the model sees as an all-zero one-hot row); ``labels``
    likewise, where ``-1`` marks a label the model can never predict.
    """
    inputs: np.ndarray
    labels: np.ndarray
    alphabet: np.ndarray
    N: int
    S: int

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs and labels differ in length")

    def __len__(self):
        return len(self.labels)

    @property
    def n(self):
        return len(self.alphabet)

    def one_hot(self, k):
        out = np.zeros((self.N, self.n))
        row = self.inputs[k]
        known = row >= 0
        out[np.flatnonzero(known), row[known]] = 1.0
        return out


def windowed_dataset(values, alphabet, N, S):
    """Index-encode a stream once, then window it."""
    idx = to_indices(_values(values), alphabet).astype(np.int32)
    windows, labels = make_windows(idx, N, S)
    return WindowedDataset(inputs=windows, labels=labels, alphabet=alphabet, N=N, S=S)


@dataclass(frozen=True)
class Splits:
    train: WindowedDataset
    tests: list[WindowedDataset]
    train_values: np.ndarray


def prepare(stream, N, S, train_count, test_count, n_testsets):
    """Split, build the alphabet from training data only, and window every part."""
    train, tests = split_train_test(stream, train_count, test_count, n_testsets)
    alphabet = build_alphabet(train)
    return Splits(
        train=windowed_dataset(train, alphabet, N, S),
        tests=[windowed_dataset(t, alphabet, N, S) for t in tests],
        train_values=np.asarray(train),
    )
