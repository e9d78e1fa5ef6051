"""Synthetic RSSI generation via the log-distance shadowed path-loss model.

Received power decays linearly in log10(distance) around a reference power
at 1 m, with i.i.d. zero-mean Gaussian shadowing (in dB) on every sample.
Generation is deterministic given a seed: the generator is numpy's PCG64,
and child seeds are derived with ``numpy.random.SeedSequence`` so golden
files are stable across platforms.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .scenario import ChannelParams, Scenario, distance

# Distances are clamped below at this value inside the simulator so a target
# coinciding with an anchor cannot produce log10(0).
DISTANCE_FLOOR_M = 0.1

MEASUREMENT_CSV_COLUMNS = ("round", "anchor_id", "sample_index", "rssi_dbm")


def derive_seed(base_seed: int, *path: int) -> np.random.SeedSequence:
    """Deterministic child seed for a labeled sub-stream of ``base_seed``.

    Uses ``SeedSequence(base, spawn_key=path)``; distinct paths give
    statistically independent streams.
    """
    return np.random.SeedSequence(entropy=int(base_seed), spawn_key=tuple(int(p) for p in path))


@dataclass(frozen=True)
class MeasurementBatch:
    """Per-anchor RSSI sample arrays for one estimation round."""

    rssi: dict[int, np.ndarray]
    round_index: int = 0

    def __post_init__(self) -> None:
        clean: dict[int, np.ndarray] = {}
        for anchor_id, samples in self.rssi.items():
            arr = np.asarray(samples, dtype=float)
            if arr.ndim != 1:
                raise ValueError(f"anchor {anchor_id}: samples must be a 1-D array")
            if arr.size and not np.all(np.isfinite(arr)):
                raise ValueError(f"anchor {anchor_id}: samples contain non-finite values")
            clean[int(anchor_id)] = arr
        object.__setattr__(self, "rssi", clean)
        if self.round_index < 0:
            raise ValueError(f"round_index must be non-negative, got {self.round_index}")

    @property
    def samples_per_anchor(self) -> int:
        """Common per-anchor sample count; raises if anchors differ."""
        counts = {arr.size for arr in self.rssi.values()}
        if len(counts) != 1:
            raise ValueError(f"per-anchor sample counts differ: { {k: v.size for k, v in self.rssi.items()} }")
        return counts.pop()

    @property
    def anchor_ids(self) -> tuple[int, ...]:
        return tuple(self.rssi.keys())


def mean_rss(channel: ChannelParams, d: float) -> float:
    """Mean received power in dBm at distance ``d`` meters (no shadowing).

    Strictly decreasing in ``d``; the reference distance is 1 m.
    """
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")
    return channel.rho0 - channel.eta * math.log10(d)


def sample_batch(
    scenario: Scenario,
    samples_per_anchor: int,
    seed: int | np.random.SeedSequence,
    round_index: int = 0,
) -> MeasurementBatch:
    """Draw one round of shadowed RSSI samples for every anchor.

    Samples are independent across anchors and across draws, each equal to
    the path-loss mean at the true target distance plus a zero-mean Gaussian
    with std ``sigma_shadow``. Identical seeds reproduce bit-identical
    batches.
    """
    if samples_per_anchor < 1:
        raise ValueError(f"samples_per_anchor must be >= 1, got {samples_per_anchor}")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    rng = np.random.default_rng(ss)
    ch = scenario.channel
    rssi: dict[int, np.ndarray] = {}
    for anchor in scenario.anchors:
        d = max(distance(scenario.target, anchor), DISTANCE_FLOOR_M)
        mu = mean_rss(ch, d)
        noise = rng.normal(0.0, ch.sigma_shadow, size=samples_per_anchor) if ch.sigma_shadow > 0 else 0.0
        rssi[anchor.id] = mu + np.zeros(samples_per_anchor) + noise
    return MeasurementBatch(rssi=rssi, round_index=round_index)


def write_measurements_csv(path: str | Path, batches: Iterable[MeasurementBatch]) -> None:
    """Dump batches as rows of (round, anchor_id, sample_index, rssi_dbm)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MEASUREMENT_CSV_COLUMNS)
        for batch in batches:
            for anchor_id in sorted(batch.rssi):
                for k, value in enumerate(batch.rssi[anchor_id]):
                    writer.writerow([batch.round_index, anchor_id, k, repr(float(value))])


def read_measurements_csv(path: str | Path) -> list[MeasurementBatch]:
    """Parse a measurement dump back into per-round batches.

    The schema is strict: exactly the four known columns, in order. Schema
    violations raise ``ValueError`` with a row/column diagnostic.
    """
    rounds: dict[int, dict[int, list[float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != MEASUREMENT_CSV_COLUMNS:
            raise ValueError(
                f"{path}: header must be exactly {','.join(MEASUREMENT_CSV_COLUMNS)}, got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MEASUREMENT_CSV_COLUMNS):
                raise ValueError(f"{path}:{lineno}: expected {len(MEASUREMENT_CSV_COLUMNS)} columns, got {len(row)}")
            try:
                rnd, anchor_id, sample_index = int(row[0]), int(row[1]), int(row[2])
                value = float(row[3])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            rounds.setdefault(rnd, {}).setdefault(anchor_id, [])
            samples = rounds[rnd][anchor_id]
            if sample_index != len(samples):
                raise ValueError(
                    f"{path}:{lineno}: sample_index {sample_index} out of order for anchor {anchor_id}"
                )
            samples.append(value)
    return [
        MeasurementBatch(rssi={a: np.array(v) for a, v in per_anchor.items()}, round_index=rnd)
        for rnd, per_anchor in sorted(rounds.items())
    ]


def empirical_stats(batch: MeasurementBatch) -> Mapping[int, tuple[float, float]]:
    """Per-anchor (mean, std) of the samples, mostly for inspection and tests."""
    return {
        anchor_id: (float(np.mean(arr)), float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0)
        for anchor_id, arr in batch.rssi.items()
    }
