"""Sampled transfer functions on the uniform unit-circle grid."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def check_grid_size(N: int) -> int:
    N = int(N)
    if not is_power_of_two(N) or N < 2:
        raise InputError(f"grid size must be a power of two >= 2, got {N}")
    return N


def unit_circle(N: int) -> np.ndarray:
    """Grid points z_k = exp(j 2 pi k / N), k = 0..N-1."""
    N = check_grid_size(N)
    return np.exp(2j * np.pi * np.arange(N) / N)


@dataclass
class GridSamples:
    """Values of a matrix-valued function at the N points of :func:`unit_circle`.

    ``values`` has shape ``(N, rows, cols)``.
    """

    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None, None]
        if v.ndim != 3:
            raise InputError(f"grid values must have shape (N, rows, cols), got {v.shape}")
        check_grid_size(v.shape[0])
        self.values = v

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]

    @property
    def z(self) -> np.ndarray:
        return unit_circle(self.N)

    @property
    def omega(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.N) / self.N

    def scalar(self) -> np.ndarray:
        """The (N,) sample vector of a 1x1 function."""
        if self.shape != (1, 1):
            raise InputError(f"{self.label or 'samples'} is {self.shape}, not scalar")
        return self.values[:, 0, 0]

    def conj_symmetry_error(self) -> float:
        """max_k |v(N-k) - conj(v(k))|, zero for real-coefficient functions."""
        v = self.values
        mirrored = v[(-np.arange(self.N)) % self.N]
        return float(np.max(np.abs(mirrored - v.conj()), initial=0.0))

    def sup_norm(self) -> float:
        """Grid-infinity norm: max over samples of the spectral norm."""
        return float(np.max(np.linalg.norm(self.values, ord=2, axis=(1, 2))))

    def __sub__(self, other: GridSamples) -> GridSamples:
        same_grid(self, other)
        return GridSamples(self.values - other.values, self.label)

    def to_csv(self, path) -> None:
        rows, cols = self.shape
        header = ["k", "omega"]
        for i in range(rows):
            for j in range(cols):
                header += [f"re_v{i + 1}{j + 1}", f"im_v{i + 1}{j + 1}"]
        flat = self.values.reshape(self.N, rows * cols)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for k in range(self.N):
                row = [str(k), repr(float(self.omega[k]))]
                for v in flat[k]:
                    row += [repr(float(v.real)), repr(float(v.imag))]
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path, shape: tuple[int, int] | None = None, label: str = "") -> GridSamples:
        path = Path(path)
        if not path.exists():
            raise InputError(f"no such file: {path}")
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise InputError(f"{path}: empty file") from None
            data = [row for row in reader if row]
        if header[:2] != ["k", "omega"] or (len(header) - 2) % 2:
            raise InputError(f"{path}: unexpected grid CSV header {header[:4]}")
        try:
            arr = np.array([[float(x) for x in row[2:]] for row in data])
        except ValueError as exc:
            raise InputError(f"{path}: {exc}") from None
        entries = (len(header) - 2) // 2
        if shape is None:
            side = int(round(np.sqrt(entries)))
            shape = (side, side) if side * side == entries else (entries, 1)
        vals = (arr[:, 0::2] + 1j * arr[:, 1::2]).reshape(len(data), *shape)
        return cls(vals, label or path.stem)


def same_grid(*samples: GridSamples) -> int:
    sizes = {s.N for s in samples}
    if len(sizes) != 1:
        raise InputError(f"grid mismatch: sizes {sorted(sizes)}")
    return sizes.pop()


def hermitian(values: np.ndarray) -> np.ndarray:
    return np.swapaxes(values, -1, -2).conj()
