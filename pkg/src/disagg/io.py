"""CSV and JSON formats used by the command line.

Floats are written with ``repr``, the shortest string that round-trips, so
rerunning a fit reproduces files byte for byte.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .model import AggregatedDataset, BucketRecord, ChainOutput, DomainError, LatentState

DATASET_HEADER = ["bucket_id", "n", "y"]


class DataError(ValueError):
    """Malformed or invalid input file."""


def fmt(v) -> str:
    return repr(float(v))


def write_dataset(data: AggregatedDataset, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(DATASET_HEADER)
        for b in data.buckets:
            w.writerow([b.id, b.n, fmt(b.y)])


def read_dataset(path) -> AggregatedDataset:
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}") from e
    if not rows or [c.strip() for c in rows[0]] != DATASET_HEADER:
        raise DataError(f"{path}: header must be {','.join(DATASET_HEADER)}")
    buckets = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
        try:
            bid, n, y = int(row[0]), int(row[1]), float(row[2])
        except ValueError as e:
            raise DataError(f"{path}:{lineno}: {e}") from e
        try:
            buckets.append(BucketRecord(bid, n, y))
        except DomainError as e:
            raise DataError(f"{path}:{lineno}: {e}") from e
    try:
        return AggregatedDataset(buckets)
    except DomainError as e:
        raise DataError(f"{path}: {e}") from e


def write_truth(truth: LatentState, data: AggregatedDataset, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["bucket_id", "j", "x"])
        for i, bid in enumerate(data.ids):
            for j, v in enumerate(truth.bucket(i)):
                w.writerow([int(bid), j, fmt(v)])


def dataset_digest(data: AggregatedDataset) -> str:
    h = hashlib.sha256()
    for b in data.buckets:
        h.update(f"{b.id},{b.n},{fmt(b.y)}\n".encode())
    return h.hexdigest()


def draws_header(coords) -> list:
    return ["chain", "iter", "mu", "tau", "sigma"] + [f"x_{i}_{j}" for i, j in coords]


def write_draws(chains, path):
    coords = chains[0].latent_coords
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(draws_header(coords))
        for c, out in enumerate(chains):
            sigma = out.sigma
            for k in range(out.n_draws):
                row = [c, int(out.iterations[k]), fmt(out.mu[k]), fmt(out.tau[k]), fmt(sigma[k])]
                row += [fmt(v) for v in out.latent[k]]
                w.writerow(row)


def read_draws(path) -> list:
    """Parse a draws CSV back into one ``ChainOutput`` per chain."""
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}") from e
    if not rows or rows[0][:5] != ["chain", "iter", "mu", "tau", "sigma"]:
        raise DataError(f"{path}: not a draws file")
    coords = []
    for name in rows[0][5:]:
        parts = name.split("_")
        if len(parts) != 3 or parts[0] != "x":
            raise DataError(f"{path}: bad latent column {name!r}")
        coords.append((int(parts[1]), int(parts[2])))
    try:
        arr = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as e:
        raise DataError(f"{path}: {e}") from e
    if arr.size == 0:
        raise DataError(f"{path}: no draws")
    chains = []
    for c in np.unique(arr[:, 0]).astype(int):
        sub = arr[arr[:, 0] == c]
        chains.append(ChainOutput(
            mu=sub[:, 2].copy(),
            tau=sub[:, 3].copy(),
            iterations=sub[:, 1].astype(np.int64),
            latent=sub[:, 5:].copy(),
            latent_coords=tuple(coords),
            stream=int(c),
        ))
    return chains


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True, allow_nan=True)
        f.write("\n")


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid JSON ({e})") from e


@dataclass
class RunManifest:
    """Everything needed to repeat a fit exactly."""

    command: str
    config: dict
    dataset_digest: str
    version: str
    backend: str
    chains: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(**d)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, s: str) -> "RunManifest":
        return cls.from_dict(json.loads(s))


def write_acceptance(chains, data: AggregatedDataset, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["chain", "bucket_id", "acceptance", "delta"])
        for c, out in enumerate(chains):
            for i, bid in enumerate(data.ids):
                w.writerow([c, int(bid), fmt(out.acceptance[i]), fmt(out.delta[i])])


def histogram_rows(values, bins=50):
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0 or math.isclose(values.min(), values.max()):
        lo = values.min() if values.size else 0.0
        return [(lo, lo, 1.0)]
    dens, edges = np.histogram(values, bins=bins, density=True)
    return list(zip(edges[:-1], edges[1:], dens))


def write_histogram(values, path, bins=50):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["lo", "hi", "density"])
        for lo, hi, d in histogram_rows(values, bins):
            w.writerow([fmt(lo), fmt(hi), fmt(d)])
