"""Split a broadband control filter into perfect-reconstruction sub-band filters.

The DFT of the filter is partitioned into ``M`` disjoint, conjugate-symmetric
bin sets of half-width ``I = N // (2M)``; each sub filter is the inverse DFT
of the spectrum masked to one set. Bin 0 (DC) goes to band 1 so the sets
cover every bin and the sub filters sum back to the source exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gfanc import io
from gfanc.errors import InvalidArgument
from gfanc.signal_core import as_filter, dft, idft

PLAN_FORMAT_VERSION = 1


@dataclass(frozen=True)
class BandPlan:
    n_taps: int
    n_bands: int
    bandwidth_bins: int
    ranges: tuple[np.ndarray, ...] = field(repr=False)

    def band_of_bin(self) -> np.ndarray:
        """Band number (1-based) of every DFT bin."""
        owner = np.zeros(self.n_taps, dtype=int)
        for m, r in enumerate(self.ranges, start=1):
            owner[r] = m
        return owner

    def to_json(self) -> dict:
        return {
            "format_version": PLAN_FORMAT_VERSION,
            "N": self.n_taps,
            "M": self.n_bands,
            "I": self.bandwidth_bins,
            "ranges": [r.tolist() for r in self.ranges],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BandPlan":
        plan = band_ranges(int(obj["N"]), int(obj["M"]))
        stored = [np.asarray(r, dtype=int) for r in obj["ranges"]]
        if len(stored) != plan.n_bands or any(
            not np.array_equal(a, b) for a, b in zip(stored, plan.ranges)
        ):
            raise InvalidArgument("plan.json ranges disagree with N and M")
        return plan


@dataclass(frozen=True)
class SubFilterBank:
    plan: BandPlan
    filters: np.ndarray  # (M, N)

    @property
    def n_bands(self) -> int:
        return self.plan.n_bands

    @property
    def n_taps(self) -> int:
        return self.plan.n_taps

    def __len__(self) -> int:
        return self.n_bands

    def __getitem__(self, m: int) -> np.ndarray:
        return self.filters[m]


def band_ranges(n_taps: int, n_bands: int) -> BandPlan:
    if n_bands < 1:
        raise InvalidArgument("need at least one band")
    if n_taps < 2 * n_bands:
        raise InvalidArgument(f"n_taps={n_taps} < 2*n_bands={2 * n_bands}: bandwidth would be 0")
    N, M = n_taps, n_bands
    I = N // (2 * M)
    ranges = []
    for m in range(1, M + 1):
        if m < M:
            r = np.concatenate(
                [np.arange((m - 1) * I + 1, m * I + 1), np.arange(N - m * I, N - (m - 1) * I)]
            )
        else:
            r = np.arange((M - 1) * I + 1, N - (M - 1) * I)
        if m == 1:
            r = np.concatenate([[0], r])
        ranges.append(r.astype(int))
    return BandPlan(N, M, I, tuple(ranges))


def decompose(c, n_bands: int) -> SubFilterBank:
    c = as_filter(c)
    plan = band_ranges(c.size, n_bands)
    spectrum = dft(c)
    filters = np.empty((n_bands, c.size))
    for m, r in enumerate(plan.ranges):
        masked = np.zeros_like(spectrum)
        masked[r] = spectrum[r]
        filters[m] = idft(masked)
    return SubFilterBank(plan, filters)


def reconstruct(bank: SubFilterBank) -> np.ndarray:
    return bank.filters.sum(axis=0)


def save_bank(bank: SubFilterBank, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for m, h in enumerate(bank.filters, start=1):
        io.write_f32(directory / f"band_{m}.f32", h)
    io.write_json(directory / "plan.json", bank.plan.to_json())


def load_bank(directory) -> SubFilterBank:
    directory = Path(directory)
    plan = BandPlan.from_json(io.read_json(directory / "plan.json"))
    filters = np.stack([io.read_f32(directory / f"band_{m}.f32") for m in range(1, plan.n_bands + 1)])
    if filters.shape != (plan.n_bands, plan.n_taps):
        raise InvalidArgument("band files do not match plan.json")
    return SubFilterBank(plan, filters)
