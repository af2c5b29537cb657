"""Frequency-domain receiver data for a set of sources, plus archive I/O.

Trace files store complex128 samples, i.e. little-endian interleaved
real/imag float64 pairs, receivers fastest then sources.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fileio
from .grid import GridError
from .helmholtz import Acquisition


@dataclass(frozen=True)
class FrequencyDataset:
    """Per (frequency, source) complex receiver traces."""

    acquisition: Acquisition
    frequencies: tuple[float, ...]
    data: np.ndarray = field(repr=False)  # (n_freq, n_src, n_rec) complex
    snr_db: float | None = None

    def __post_init__(self):
        freqs = tuple(float(f) for f in self.frequencies)
        arr = np.asarray(self.data, dtype=np.complex128)
        shape = (len(freqs), self.acquisition.n_sources, self.acquisition.n_receivers)
        if arr.shape != shape:
            raise GridError(f"data must have shape {shape}, got {arr.shape}")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "data", arr)

    @property
    def n_frequencies(self) -> int:
        return len(self.frequencies)

    def frequency_index(self, freq_hz: float) -> int:
        for i, f in enumerate(self.frequencies):
            if np.isclose(f, freq_hz, rtol=1e-12, atol=0.0):
                return i
        raise GridError(f"frequency {freq_hz} Hz not in dataset {self.frequencies}")


MANIFEST_NAME = "dataset_manifest.txt"
ACQ_NAME = "acquisition.txt"


def save_dataset(directory: str | os.PathLike, ds: FrequencyDataset) -> Path:
    out = fileio.ensure_dir(directory)
    acq = ds.acquisition
    lines = [f"sources = {acq.n_sources}"]
    lines += [f"  {x!r} {z!r} {a.real!r} {a.imag!r}" for x, z, a in acq.sources]
    lines.append(f"receivers = {acq.n_receivers}")
    lines += [f"  {x!r} {z!r}" for x, z in acq.receivers]
    (out / ACQ_NAME).write_text("\n".join(lines) + "\n", encoding="ascii")

    man = [
        f"n_frequencies = {ds.n_frequencies}",
        f"n_sources = {acq.n_sources}",
        f"n_receivers = {acq.n_receivers}",
        f"snr_db = {'none' if ds.snr_db is None else repr(ds.snr_db)}",
    ]
    for i, f in enumerate(ds.frequencies):
        name = f"traces_{i + 1:04d}.dat"
        man.append(f"frequency = {f!r} file = {name}")
        (out / name).write_bytes(ds.data[i].astype("<c16").tobytes())
    (out / MANIFEST_NAME).write_text("\n".join(man) + "\n", encoding="ascii")
    return out


def load_dataset(directory: str | os.PathLike) -> FrequencyDataset:
    root = Path(directory)
    acq_lines = (root / ACQ_NAME).read_text(encoding="ascii").splitlines()
    pos = 0

    def read_count(tag: str) -> int:
        nonlocal pos
        key, _, value = acq_lines[pos].partition("=")
        if key.strip() != tag:
            raise fileio.FieldFileError(f"expected '{tag} =' line, got {acq_lines[pos]!r}")
        pos += 1
        return int(value)

    n_src = read_count("sources")
    sources = []
    for _ in range(n_src):
        x, z, re_a, im_a = (float(t) for t in acq_lines[pos].split())
        sources.append((x, z, complex(re_a, im_a)))
        pos += 1
    n_rec = read_count("receivers")
    receivers = []
    for _ in range(n_rec):
        x, z = (float(t) for t in acq_lines[pos].split())
        receivers.append((x, z))
        pos += 1
    acq = Acquisition(sources=tuple(sources), receivers=tuple(receivers))

    frequencies: list[float] = []
    files: list[str] = []
    snr_db: float | None = None
    for line in (root / MANIFEST_NAME).read_text(encoding="ascii").splitlines():
        line = line.strip()
        if line.startswith("snr_db"):
            _, _, value = line.partition("=")
            value = value.strip()
            snr_db = None if value == "none" else float(value)
        elif line.startswith("frequency"):
            parts = line.split()
            frequencies.append(float(parts[2]))
            files.append(parts[5])
    data = np.empty((len(frequencies), n_src, n_rec), dtype=np.complex128)
    for i, name in enumerate(files):
        raw = np.frombuffer((root / name).read_bytes(), dtype="<c16")
        if raw.size != n_src * n_rec:
            raise fileio.FieldFileError(
                f"trace file {name}: expected {n_src * n_rec} samples, found {raw.size}"
            )
        data[i] = raw.reshape(n_src, n_rec)
    return FrequencyDataset(
        acquisition=acq, frequencies=tuple(frequencies), data=data, snr_db=snr_db
    )
