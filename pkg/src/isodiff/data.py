"""Ragged observation table, experimental design metadata and file I/O.

Indices are 1-based in files and in user-facing coordinates, 0-based in the
arrays held by :class:`Dataset`. Missing reporter ions are simply absent rows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

HEADER = ("experiment", "group", "sample", "protein", "spectrum", "log_intensity")


class DataFormatError(ValueError):
    """Raised for malformed data files; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class ValidationError(ValueError):
    def __init__(self, violations: Sequence["Violation"]):
        self.violations = list(violations)
        shown = "; ".join(str(v) for v in self.violations[:10])
        more = len(self.violations) - 10
        if more > 0:
            shown += f"; ... ({more} more)"
        super().__init__(shown)


class Observation(NamedTuple):
    """One reporter-ion log intensity, 1-based coordinates."""

    experiment: int
    group: int
    sample: int
    protein: int
    spectrum: int
    log_intensity: float


@dataclass(frozen=True)
class DesignInfo:
    """Experimental design: E experiments, G groups, P proteins.

    ``samples_per_cell[e][g]`` is n_eg, ``reference_group[e]`` is the 1-based
    group whose first sample is the reference in experiment ``e``.
    """

    num_experiments: int
    num_groups: int
    num_proteins: int
    spectra_per_protein: tuple[int, ...]
    samples_per_cell: tuple[tuple[int, ...], ...]
    reference_group: tuple[int, ...]
    tags_per_experiment: int

    def __post_init__(self):
        object.__setattr__(self, "spectra_per_protein", tuple(int(v) for v in self.spectra_per_protein))
        object.__setattr__(
            self, "samples_per_cell", tuple(tuple(int(v) for v in row) for row in self.samples_per_cell)
        )
        object.__setattr__(self, "reference_group", tuple(int(v) for v in self.reference_group))

    # Flat layouts used by the sampler: samples ordered (e, g, i), spectra (j, k).

    @cached_property
    def n_table(self) -> np.ndarray:
        return np.asarray(self.samples_per_cell, dtype=np.int64).reshape(self.num_experiments, self.num_groups)

    @cached_property
    def sample_offsets(self) -> np.ndarray:
        """(E, G) offsets of the first sample of each cell in the flat sample vector."""
        counts = self.n_table.ravel()
        return (np.cumsum(counts) - counts).reshape(self.n_table.shape)

    @property
    def num_samples(self) -> int:
        return int(self.n_table.sum())

    @cached_property
    def spectrum_offsets(self) -> np.ndarray:
        m = np.asarray(self.spectra_per_protein, dtype=np.int64)
        return np.cumsum(m) - m

    @property
    def num_spectra(self) -> int:
        return int(sum(self.spectra_per_protein))

    @cached_property
    def reference_samples(self) -> np.ndarray:
        """Flat indices of the pinned reference samples, one per experiment."""
        g = np.asarray(self.reference_group, dtype=np.int64) - 1
        return self.sample_offsets[np.arange(self.num_experiments), g]

    @cached_property
    def sample_coords(self) -> np.ndarray:
        """(S, 3) array of 1-based (e, g, i) for each flat sample."""
        rows = [
            (e + 1, g + 1, i + 1)
            for e in range(self.num_experiments)
            for g in range(self.num_groups)
            for i in range(self.samples_per_cell[e][g])
        ]
        return np.asarray(rows, dtype=np.int64).reshape(-1, 3)

    @cached_property
    def spectrum_coords(self) -> np.ndarray:
        """(K, 2) array of 1-based (j, k) for each flat spectrum."""
        m = np.asarray(self.spectra_per_protein, dtype=np.int64)
        j = np.repeat(np.arange(self.num_proteins), m)
        k = np.arange(self.num_spectra) - self.spectrum_offsets[j]
        return np.column_stack([j + 1, k + 1])

    @cached_property
    def spectrum_protein(self) -> np.ndarray:
        return self.spectrum_coords[:, 0] - 1

    def sample_id(self, experiment: int, group: int, sample: int) -> int:
        """Flat index of 1-based sample coordinate (e, g, i)."""
        if not (1 <= experiment <= self.num_experiments and 1 <= group <= self.num_groups):
            raise KeyError((experiment, group, sample))
        if not 1 <= sample <= self.samples_per_cell[experiment - 1][group - 1]:
            raise KeyError((experiment, group, sample))
        return int(self.sample_offsets[experiment - 1, group - 1]) + sample - 1

    def spectrum_id(self, protein: int, spectrum: int) -> int:
        if not 1 <= protein <= self.num_proteins or not 1 <= spectrum <= self.spectra_per_protein[protein - 1]:
            raise KeyError((protein, spectrum))
        return int(self.spectrum_offsets[protein - 1]) + spectrum - 1

    def to_dict(self) -> dict:
        return {
            "E": self.num_experiments,
            "G": self.num_groups,
            "P": self.num_proteins,
            "m": list(self.spectra_per_protein),
            "n": [list(row) for row in self.samples_per_cell],
            "g_ref": list(self.reference_group),
            "n_I": self.tags_per_experiment,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DesignInfo":
        n = [list(row) for row in d["n"]]
        n_I = d.get("n_I")
        if n_I is None:
            n_I = max(sum(row) for row in n)
        return cls(
            num_experiments=int(d["E"]),
            num_groups=int(d["G"]),
            num_proteins=int(d["P"]),
            spectra_per_protein=tuple(d["m"]),
            samples_per_cell=tuple(tuple(row) for row in n),
            reference_group=tuple(d["g_ref"]),
            tags_per_experiment=int(n_I),
        )


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    row: int | None = None

    def __str__(self):
        where = f" (row {self.row + 1})" if self.row is not None else ""
        return f"{self.kind}: {self.message}{where}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def __bool__(self):
        return self.ok


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed log intensities stored column-wise with 0-based indices.

    The arrays are treated as immutable once constructed; the cached index
    structures below are shared by every chain that reads the dataset.
    """

    design: DesignInfo
    experiment: np.ndarray
    group: np.ndarray
    sample: np.ndarray
    protein: np.ndarray
    spectrum: np.ndarray
    log_intensity: np.ndarray

    def __post_init__(self):
        for name in ("experiment", "group", "sample", "protein", "spectrum"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        y = np.ascontiguousarray(self.log_intensity, dtype=np.float64)
        y.setflags(write=False)
        object.__setattr__(self, "log_intensity", y)
        sizes = {len(getattr(self, name)) for name in HEADER}
        if len(sizes) != 1:
            raise ValueError("observation columns have different lengths")

    @classmethod
    def from_observations(cls, design: DesignInfo, observations: Iterable[Sequence]) -> "Dataset":
        rows = list(observations)
        if not rows:
            empty = np.zeros(0, dtype=np.int64)
            return cls(design, empty, empty, empty, empty, empty, np.zeros(0))
        arr = np.asarray([tuple(r)[:5] for r in rows], dtype=np.int64) - 1
        y = np.asarray([r[5] for r in rows], dtype=np.float64)
        return cls(design, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4], y)

    def __len__(self) -> int:
        return len(self.log_intensity)

    @property
    def y(self) -> np.ndarray:
        return self.log_intensity

    def observations(self) -> Iterator[Observation]:
        for e, g, i, j, k, y in zip(
            self.experiment, self.group, self.sample, self.protein, self.spectrum, self.log_intensity
        ):
            yield Observation(int(e) + 1, int(g) + 1, int(i) + 1, int(j) + 1, int(k) + 1, float(y))

    def subset(self, mask: np.ndarray) -> "Dataset":
        return Dataset(
            self.design,
            self.experiment[mask],
            self.group[mask],
            self.sample[mask],
            self.protein[mask],
            self.spectrum[mask],
            self.log_intensity[mask],
        )

    def with_intensities(self, y: np.ndarray) -> "Dataset":
        return Dataset(self.design, self.experiment, self.group, self.sample, self.protein, self.spectrum, y)

    # Index structures for the sampler; valid only on validated datasets.

    @cached_property
    def sample_index(self) -> np.ndarray:
        """Flat (e, g, i) index per observation."""
        return self.design.sample_offsets[self.experiment, self.group] + self.sample

    @cached_property
    def spectrum_index(self) -> np.ndarray:
        """Flat (j, k) index per observation."""
        return self.design.spectrum_offsets[self.protein] + self.spectrum

    @cached_property
    def cell_index(self) -> np.ndarray:
        """Flat (g, j) index per observation into a (G, P) array."""
        return self.group * self.design.num_proteins + self.protein

    @cached_property
    def count_per_sample(self) -> np.ndarray:
        return np.bincount(self.sample_index, minlength=self.design.num_samples)

    @cached_property
    def count_per_spectrum(self) -> np.ndarray:
        return np.bincount(self.spectrum_index, minlength=self.design.num_spectra)

    @cached_property
    def count_per_cell(self) -> np.ndarray:
        d = self.design
        return np.bincount(self.cell_index, minlength=d.num_groups * d.num_proteins).reshape(
            d.num_groups, d.num_proteins
        )

    def sort_key(self) -> np.ndarray:
        """Lexicographic order over the full coordinate, for canonical output."""
        return np.lexsort((self.sample, self.group, self.experiment, self.spectrum, self.protein))


def _design_violations(design: DesignInfo) -> list[Violation]:
    out = []
    E, G, P = design.num_experiments, design.num_groups, design.num_proteins
    if E < 1 or G < 1 or P < 0:
        out.append(Violation("bad design", f"E={E}, G={G}, P={P}"))
        return out
    if len(design.spectra_per_protein) != P:
        out.append(Violation("bad design", f"m has {len(design.spectra_per_protein)} entries, expected P={P}"))
    for j, mj in enumerate(design.spectra_per_protein):
        if mj < 1:
            out.append(Violation("empty protein", f"m[{j + 1}]={mj} < 1"))
    if len(design.samples_per_cell) != E or any(len(row) != G for row in design.samples_per_cell):
        out.append(Violation("bad design", f"n must be an {E}x{G} table"))
        return out
    if len(design.reference_group) != E:
        out.append(Violation("bad design", f"g_ref has {len(design.reference_group)} entries, expected E={E}"))
        return out
    for e, row in enumerate(design.samples_per_cell):
        if any(v < 0 for v in row):
            out.append(Violation("bad design", f"negative sample count in experiment {e + 1}"))
        if sum(row) != design.tags_per_experiment:
            out.append(
                Violation(
                    "tag count mismatch",
                    f"experiment {e + 1}: samples sum to {sum(row)}, n_I={design.tags_per_experiment}",
                )
            )
        g_ref = design.reference_group[e]
        if not 1 <= g_ref <= G:
            out.append(Violation("missing reference sample", f"experiment {e + 1}: g_ref={g_ref} out of range"))
        elif row[g_ref - 1] < 1:
            out.append(Violation("missing reference sample", f"experiment {e + 1}: group {g_ref} has no samples"))
    return out


def validate(dataset: Dataset) -> ValidationReport:
    """Check design and observation invariants; violations are returned, not raised."""
    design = dataset.design
    violations = _design_violations(design)
    if any(v.kind == "bad design" for v in violations):
        return ValidationReport(violations)

    e, g, i, j, k = dataset.experiment, dataset.group, dataset.sample, dataset.protein, dataset.spectrum
    ok_eg = (e >= 0) & (e < design.num_experiments) & (g >= 0) & (g < design.num_groups)
    ok_j = (j >= 0) & (j < design.num_proteins)
    n_cell = np.zeros(len(dataset), dtype=np.int64)
    n_cell[ok_eg] = design.n_table[e[ok_eg], g[ok_eg]]
    m = np.asarray(design.spectra_per_protein, dtype=np.int64)
    m_obs = np.zeros(len(dataset), dtype=np.int64)
    m_obs[ok_j] = m[j[ok_j]]
    in_bounds = ok_eg & ok_j & (i >= 0) & (i < n_cell) & (k >= 0) & (k < m_obs)
    for row in np.flatnonzero(~in_bounds):
        coord = (int(e[row]) + 1, int(g[row]) + 1, int(i[row]) + 1, int(j[row]) + 1, int(k[row]) + 1)
        violations.append(Violation("index out of bounds", f"coordinate {coord} outside design", int(row)))

    for row in np.flatnonzero(~np.isfinite(dataset.log_intensity)):
        violations.append(Violation("non-finite intensity", f"value {dataset.log_intensity[row]}", int(row)))

    if len(dataset) > 1:
        order = np.lexsort((k, j, i, g, e))
        coords = np.column_stack([e, g, i, j, k])[order]
        repeated = (coords[1:] == coords[:-1]).all(axis=1)
        for row in np.sort(order[1:][repeated]):
            shown = tuple(int(col[row]) + 1 for col in (e, g, i, j, k))
            violations.append(Violation("duplicate coordinate", f"coordinate {shown} repeated", int(row)))
    return ValidationReport(violations)


def infer_design(observations: Sequence[Sequence], reference_group: Sequence[int]) -> DesignInfo:
    """Build a DesignInfo from the maxima of the 1-based indices present in the data."""
    arr = np.asarray([tuple(r)[:5] for r in observations], dtype=np.int64).reshape(-1, 5)
    if len(arr) == 0:
        raise ValueError("cannot infer a design from an empty dataset")
    if (arr < 1).any():
        raise ValueError("indices must be >= 1")
    E, G, P = int(arr[:, 0].max()), int(arr[:, 1].max()), int(arr[:, 3].max())
    if len(reference_group) != E:
        raise ValueError(f"g_ref must list one group per experiment (E={E})")
    n = np.zeros((E, G), dtype=np.int64)
    np.maximum.at(n, (arr[:, 0] - 1, arr[:, 1] - 1), arr[:, 2])
    m = np.ones(P, dtype=np.int64)
    np.maximum.at(m, arr[:, 3] - 1, arr[:, 4])
    return DesignInfo(
        num_experiments=E,
        num_groups=G,
        num_proteins=P,
        spectra_per_protein=tuple(m.tolist()),
        samples_per_cell=tuple(tuple(row) for row in n.tolist()),
        reference_group=tuple(reference_group),
        tags_per_experiment=int(n.sum(axis=1).max()),
    )


def read_observations(path: str | Path, log_transform: bool = False) -> tuple[list[tuple], list[int]]:
    """Parse the delimited observation file; returns rows and their file line numbers."""
    rows, lines = [], []
    header_seen = False
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            fields = next(csv.reader([text]))
            fields = [f.strip() for f in fields]
            if not header_seen:
                if tuple(fields) != HEADER:
                    raise DataFormatError(f"expected header {','.join(HEADER)}", lineno)
                header_seen = True
                continue
            if len(fields) != len(HEADER):
                raise DataFormatError(f"expected {len(HEADER)} fields, got {len(fields)}", lineno)
            try:
                idx = tuple(int(v) for v in fields[:5])
            except ValueError:
                raise DataFormatError(f"non-integer index in {fields[:5]}", lineno) from None
            try:
                value = float(fields[5])
            except ValueError:
                raise DataFormatError(f"non-numeric intensity {fields[5]!r}", lineno) from None
            if log_transform:
                if not value > 0:
                    raise DataFormatError(f"cannot log-transform non-positive intensity {value}", lineno)
                value = float(np.log(value))
            if not np.isfinite(value):
                raise DataFormatError(f"non-finite intensity {fields[5]!r}", lineno)
            if min(idx) < 1:
                raise DataFormatError(f"indices are 1-based, got {idx}", lineno)
            rows.append(idx + (value,))
            lines.append(lineno)
    if not header_seen:
        raise DataFormatError("missing header row")
    return rows, lines


def load_dataset(
    path: str | Path,
    design: DesignInfo | None = None,
    *,
    reference_group: Sequence[int] | None = None,
    log_transform: bool = False,
    require_complete: bool = False,
) -> Dataset:
    """Read and validate a dataset file.

    Either ``design`` or ``reference_group`` must be given; in the latter case
    the design is inferred from the largest indices present. With
    ``require_complete`` spectra lacking any reporter ion within an
    experiment are dropped.
    """
    rows, lines = read_observations(path, log_transform=log_transform)
    if design is None:
        if reference_group is None:
            raise ValueError("g_ref is required when the design is inferred from data")
        design = infer_design(rows, reference_group)
    ds = Dataset.from_observations(design, rows)
    report = validate(ds)
    if not report.ok:
        if any(v.row is None for v in report.violations):
            raise ValidationError(report.violations)
        first = report.violations[0]
        raise DataFormatError(f"{first.kind}: {first.message}", lines[first.row])
    if require_complete:
        ds = drop_incomplete_spectra(ds)
    return ds


def drop_incomplete_spectra(dataset: Dataset) -> Dataset:
    """Keep a spectrum's rows in an experiment only if all n_I reporters were observed."""
    d = dataset.design
    key = dataset.experiment * d.num_spectra + dataset.spectrum_index
    counts = np.bincount(key, minlength=d.num_experiments * d.num_spectra)
    return dataset.subset(counts[key] == d.tags_per_experiment)


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write the dataset in canonical coordinate order, with round-trip-exact floats."""
    order = dataset.sort_key() if len(dataset) else np.zeros(0, dtype=np.int64)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for r in order:
            writer.writerow(
                [
                    dataset.experiment[r] + 1,
                    dataset.group[r] + 1,
                    dataset.sample[r] + 1,
                    dataset.protein[r] + 1,
                    dataset.spectrum[r] + 1,
                    repr(float(dataset.log_intensity[r])),
                ]
            )
