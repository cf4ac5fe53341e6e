"""Measured input/output records: CSV ingestion, z-score normalization, splits.

A record is a time-aligned pair of matrices (inputs K x n_u, outputs K x n_y).
Normalization statistics are always fit on the training split only and applied
to both splits; channels with zero variance fall back to std = 1.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    HeaderMismatchError,
    InsufficientSamplesError,
    MissingFileError,
    NonFiniteValueError,
)


@dataclass
class RawDataset:
    """Time-aligned measurement record.

    inputs:  (K, n_u) array
    outputs: (K, n_y) array
    """

    inputs: np.ndarray
    outputs: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.outputs = np.atleast_2d(np.asarray(self.outputs, dtype=float))
        if self.inputs.shape[0] != self.outputs.shape[0]:
            raise DimensionMismatchError(
                f"inputs have {self.inputs.shape[0]} rows, "
                f"outputs have {self.outputs.shape[0]}"
            )
        if self.inputs.shape[0] < 2:
            raise InsufficientSamplesError("a dataset needs at least 2 samples")
        if not (np.isfinite(self.inputs).all() and np.isfinite(self.outputs).all()):
            raise NonFiniteValueError("dataset contains NaN or Inf entries")

    @property
    def K(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_u(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_y(self) -> int:
        return self.outputs.shape[1]

    def channels(self) -> np.ndarray:
        """All channels as one (K, n_u + n_y) matrix, inputs first."""
        return np.hstack([self.inputs, self.outputs])


@dataclass
class NormStats:
    """Per-channel mean/std, channel order = inputs then outputs."""

    mean: np.ndarray
    std: np.ndarray
    n_u: int = 0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).ravel()
        self.std = np.asarray(self.std, dtype=float).ravel()
        if self.mean.shape != self.std.shape:
            raise DimensionMismatchError("mean and std lengths differ")
        if np.any(self.std <= 0):
            raise ValueError("std components must be strictly positive")

    @property
    def output_mean(self) -> np.ndarray:
        return self.mean[self.n_u:]

    @property
    def output_std(self) -> np.ndarray:
        return self.std[self.n_u:]


def load_csv(path: str, n_u: int, n_y: int) -> RawDataset:
    """Read a record from a comma-separated file.

    The file must have one header row with exactly n_u + n_y column names
    (inputs first), then rows of finite decimal numbers. Row order is
    preserved: file row i becomes sample index i.
    """
    if not os.path.isfile(path):
        raise MissingFileError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise HeaderMismatchError(f"{path}: empty file") from None
        if len(header) != n_u + n_y:
            raise HeaderMismatchError(
                f"{path}: header has {len(header)} columns, expected {n_u + n_y}"
            )
        rows = []
        for i, row in enumerate(reader):
            if not row:
                continue
            if len(row) != n_u + n_y:
                raise HeaderMismatchError(
                    f"{path}: row {i} has {len(row)} cells, expected {n_u + n_y}"
                )
            try:
                vals = [float(cell) for cell in row]
            except ValueError:
                raise NonFiniteValueError(
                    f"{path}: row {i} contains a non-numeric cell"
                ) from None
            if not all(np.isfinite(vals)):
                raise NonFiniteValueError(f"{path}: row {i} contains NaN or Inf")
            rows.append(vals)
    if len(rows) < 2:
        raise InsufficientSamplesError(f"{path}: fewer than 2 data rows")
    data = np.asarray(rows, dtype=float)
    name = os.path.splitext(os.path.basename(path))[0]
    return RawDataset(inputs=data[:, :n_u], outputs=data[:, n_u:], name=name)


def save_csv(ds: RawDataset, path: str) -> None:
    """Write a record in the format load_csv accepts."""
    header = [f"u{i + 1}" for i in range(ds.n_u)] + [f"y{j + 1}" for j in range(ds.n_y)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in ds.channels():
            writer.writerow([repr(float(v)) for v in row])


def split_rows(ds: RawDataset, n_train: int) -> tuple[RawDataset, RawDataset]:
    """First n_train rows become the training record, the rest the test record."""
    if not 2 <= n_train <= ds.K - 2:
        raise InsufficientSamplesError(
            f"train split of {n_train} rows leaves no usable test split (K={ds.K})"
        )
    train = RawDataset(ds.inputs[:n_train], ds.outputs[:n_train], name=ds.name + "-train")
    test = RawDataset(ds.inputs[n_train:], ds.outputs[n_train:], name=ds.name + "-test")
    return train, test


def fit_normalizer(train: RawDataset) -> NormStats:
    """Per-channel mean and population std (divisor K) of the training split.

    Channels with zero variance get std = 1 so normalization stays defined.
    """
    chans = train.channels()
    mean = chans.mean(axis=0)
    std = chans.std(axis=0)  # population convention, ddof=0
    std = np.where(std == 0.0, 1.0, std)
    return NormStats(mean=mean, std=std, n_u=train.n_u)


def normalize(ds: RawDataset, stats: NormStats) -> RawDataset:
    """Replace every channel by (value - mean) / std."""
    _check_channels(ds, stats)
    nu = ds.n_u
    return RawDataset(
        inputs=(ds.inputs - stats.mean[:nu]) / stats.std[:nu],
        outputs=(ds.outputs - stats.mean[nu:]) / stats.std[nu:],
        name=ds.name,
    )


def denormalize(ds: RawDataset, stats: NormStats) -> RawDataset:
    """Inverse of normalize."""
    _check_channels(ds, stats)
    nu = ds.n_u
    return RawDataset(
        inputs=ds.inputs * stats.std[:nu] + stats.mean[:nu],
        outputs=ds.outputs * stats.std[nu:] + stats.mean[nu:],
        name=ds.name,
    )


def _check_channels(ds: RawDataset, stats: NormStats) -> None:
    if ds.n_u + ds.n_y != stats.mean.size:
        raise DimensionMismatchError(
            f"dataset has {ds.n_u + ds.n_y} channels, stats describe {stats.mean.size}"
        )
