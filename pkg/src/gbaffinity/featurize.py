"""Complex-level features: pairwise element contact counts plus pooled atom features.

A feature row is laid out as ``[interaction | sum | std]``:

* ``inter.<P>.<L>``: number of (protein atom of element P, ligand atom of
  element L) pairs no farther apart than the cutoff.
* ``sum.<f>``: per-atom encoded feature ``f`` summed over every atom.
* ``std.<f>``: population standard deviation of ``f`` over every atom.

Categorical atom features are one-hot encoded, so ``sum.type=N`` is the
number of atoms whose ``type`` is ``N``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Sequence

import numpy as np

from .molio import (
    CATEGORICAL,
    LIGAND,
    PROTEIN,
    AtomRecord,
    ComplexRecord,
    DatasetSchema,
    infer_schema,
)

DEFAULT_PROTEIN_ELEMENTS = ("C", "N", "O", "S")
DEFAULT_LIGAND_ELEMENTS = ("C", "N", "O", "F", "P", "S", "Cl", "Br", "I")
DEFAULT_CUTOFF = 12.0

INTERACTION_PREFIX = "inter."
SUM_PREFIX = "sum."
STD_PREFIX = "std."

BINARY_MAGIC = b"GBFM"
BINARY_VERSION = 1


class FeaturizeError(ValueError):
    pass


class UnseenCategoryWarning(UserWarning):
    pass


@dataclass(frozen=True)
class InteractionConfig:
    protein_elements: tuple[str, ...] = DEFAULT_PROTEIN_ELEMENTS
    ligand_elements: tuple[str, ...] = DEFAULT_LIGAND_ELEMENTS
    d_cutoff: float = DEFAULT_CUTOFF
    boundary_inclusive: bool = True

    def __post_init__(self):
        object.__setattr__(self, "protein_elements", tuple(self.protein_elements))
        object.__setattr__(self, "ligand_elements", tuple(self.ligand_elements))
        for label, elems in (("protein", self.protein_elements), ("ligand", self.ligand_elements)):
            if len(set(elems)) != len(elems):
                raise ValueError(f"{label} element list has duplicates: {elems}")
        if not (self.d_cutoff > 0 and math.isfinite(self.d_cutoff)):
            raise ValueError(f"d_cutoff must be positive and finite, got {self.d_cutoff}")

    @property
    def width(self) -> int:
        return len(self.protein_elements) * len(self.ligand_elements)

    def column_names(self) -> list[str]:
        return [
            f"{INTERACTION_PREFIX}{p}.{l}"
            for p in self.protein_elements
            for l in self.ligand_elements
        ]

    def to_dict(self) -> dict:
        return {
            "protein_elements": list(self.protein_elements),
            "ligand_elements": list(self.ligand_elements),
            "d_cutoff": self.d_cutoff,
            "boundary_inclusive": self.boundary_inclusive,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InteractionConfig":
        return cls(
            protein_elements=tuple(d.get("protein_elements", DEFAULT_PROTEIN_ELEMENTS)),
            ligand_elements=tuple(d.get("ligand_elements", DEFAULT_LIGAND_ELEMENTS)),
            d_cutoff=float(d.get("d_cutoff", DEFAULT_CUTOFF)),
            boundary_inclusive=bool(d.get("boundary_inclusive", True)),
        )


@dataclass
class FeatureMatrix:
    column_names: tuple[str, ...]
    rows: np.ndarray
    labels: np.ndarray
    row_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        self.column_names = tuple(self.column_names)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.float64).reshape(-1)
        rows = np.ascontiguousarray(self.rows, dtype=np.float64)
        shape = (len(self.labels), len(self.column_names))
        if rows.size != shape[0] * shape[1]:
            raise ValueError(f"expected a {shape[0]}x{shape[1]} matrix, got shape {rows.shape}")
        self.rows = rows.reshape(shape)
        if not self.row_ids:
            self.row_ids = tuple(str(i) for i in range(len(self.labels)))
        self.row_ids = tuple(self.row_ids)
        if not (len(self.rows) == len(self.labels) == len(self.row_ids)):
            raise ValueError(
                f"row count mismatch: {len(self.rows)} rows, {len(self.labels)} labels, "
                f"{len(self.row_ids)} ids"
            )
        if not np.isfinite(self.rows).all():
            raise ValueError("feature matrix contains non-finite values")
        if not np.isfinite(self.labels).all():
            raise ValueError("labels contain non-finite values")

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_cols(self) -> int:
        return self.rows.shape[1]

    def take(self, index) -> "FeatureMatrix":
        index = np.asarray(index, dtype=np.int64)
        return FeatureMatrix(
            self.column_names,
            self.rows[index],
            self.labels[index],
            tuple(self.row_ids[i] for i in index),
        )

    # -- CSV

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "affinity", *self.column_names])
        for rid, y, row in zip(self.row_ids, self.labels, self.rows):
            w.writerow([rid, repr(float(y)), *(repr(float(v)) for v in row)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="\n")
        return text

    @classmethod
    def from_csv(cls, path: str | Path) -> "FeatureMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:2] != ["id", "affinity"]:
                raise ValueError(f"{path}: CSV must start with 'id,affinity' columns")
            ids, labels, rows = [], [], []
            for rec in reader:
                ids.append(rec[0])
                labels.append(float(rec[1]))
                rows.append([float(v) for v in rec[2:]])
        cols = header[2:]
        return cls(tuple(cols), np.array(rows, dtype=np.float64).reshape(len(ids), len(cols)), labels, tuple(ids))

    # -- binary cache
    #
    # magic b"GBFM" | u16 version | u16 reserved | u64 n_rows | u64 n_cols |
    # u64 header_len | UTF-8 JSON {"column_names", "row_ids"} |
    # labels f8[n_rows] | rows f8[n_rows * n_cols] (row-major); all little-endian.

    def to_bytes(self) -> bytes:
        header = json.dumps(
            {"column_names": list(self.column_names), "row_ids": list(self.row_ids)},
            separators=(",", ":"),
        ).encode("utf-8")
        prefix = BINARY_MAGIC + struct.pack(
            "<HHQQQ", BINARY_VERSION, 0, self.n_rows, self.n_cols, len(header)
        )
        return (
            prefix
            + header
            + self.labels.astype("<f8").tobytes()
            + self.rows.astype("<f8").tobytes()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "FeatureMatrix":
        fixed = len(BINARY_MAGIC) + struct.calcsize("<HHQQQ")
        if len(data) < fixed or data[:4] != BINARY_MAGIC:
            raise ValueError("not a feature-matrix cache (bad magic)")
        version, _, n, m, hlen = struct.unpack_from("<HHQQQ", data, 4)
        if version != BINARY_VERSION:
            raise ValueError(f"unsupported feature cache version {version}")
        expected = fixed + hlen + 8 * n + 8 * n * m
        if len(data) != expected:
            raise ValueError(f"truncated feature cache: {len(data)} bytes, expected {expected}")
        header = json.loads(data[fixed : fixed + hlen].decode("utf-8"))
        off = fixed + hlen
        labels = np.frombuffer(data, dtype="<f8", count=n, offset=off)
        rows = np.frombuffer(data, dtype="<f8", count=n * m, offset=off + 8 * n).reshape(n, m)
        return cls(tuple(header["column_names"]), rows.copy(), labels.copy(), tuple(header["row_ids"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "FeatureMatrix":
        return cls.from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------- interactions


def _typed_atoms(cx: ComplexRecord, role: str, elements: Sequence[str]):
    lookup = {e: i for i, e in enumerate(elements)}
    xyz, types = [], []
    for a in cx.atoms:
        if a.role != role:
            continue
        t = lookup.get(a.element)
        if t is not None:
            xyz.append(a.xyz)
            types.append(t)
    return np.array(xyz, dtype=np.float64).reshape(-1, 3), np.array(types, dtype=np.int64)


def _pair_counts(p_xyz, p_type, l_xyz, l_type, cfg: InteractionConfig, out: np.ndarray) -> None:
    if len(p_xyz) == 0 or len(l_xyz) == 0:
        return
    dx = p_xyz[:, 0, None] - l_xyz[None, :, 0]
    dy = p_xyz[:, 1, None] - l_xyz[None, :, 1]
    dz = p_xyz[:, 2, None] - l_xyz[None, :, 2]
    d = np.sqrt(dx * dx + dy * dy + dz * dz)
    hit = d <= cfg.d_cutoff if cfg.boundary_inclusive else d < cfg.d_cutoff
    idx = (p_type[:, None] * len(cfg.ligand_elements) + l_type[None, :])[hit]
    out += np.bincount(idx, minlength=out.size)


def _grid_counts(p_xyz, p_type, l_xyz, l_type, cfg: InteractionConfig, out: np.ndarray) -> None:
    if len(p_xyz) == 0 or len(l_xyz) == 0:
        return
    # Slightly oversized cells keep every in-range pair within adjacent cells
    # despite rounding in the division.
    cell = cfg.d_cutoff * (1.0 + 1e-9)
    p_cell = np.floor(p_xyz / cell).astype(np.int64)
    l_cell = np.floor(l_xyz / cell).astype(np.int64)
    buckets: dict[tuple, list[int]] = {}
    for i, key in enumerate(map(tuple, l_cell)):
        buckets.setdefault(key, []).append(i)
    lig_groups = {k: np.array(v, dtype=np.int64) for k, v in buckets.items()}
    prot_groups: dict[tuple, list[int]] = {}
    for i, key in enumerate(map(tuple, p_cell)):
        prot_groups.setdefault(key, []).append(i)
    for key in sorted(prot_groups):
        pi = np.array(prot_groups[key], dtype=np.int64)
        near = [
            lig_groups[nb]
            for off in product((-1, 0, 1), repeat=3)
            if (nb := (key[0] + off[0], key[1] + off[1], key[2] + off[2])) in lig_groups
        ]
        if not near:
            continue
        li = np.concatenate(near)
        _pair_counts(p_xyz[pi], p_type[pi], l_xyz[li], l_type[li], cfg, out)


def interaction_features(
    cx: ComplexRecord, cfg: InteractionConfig | None = None, use_grid: bool = False
) -> np.ndarray:
    """Count protein/ligand element pairs within the cutoff.

    Entry ``j * len(L) + i`` counts pairs of a protein atom of element
    ``P[j]`` and a ligand atom of element ``L[i]``. Elements outside P or L
    (hydrogens, metals, unknowns) never contribute. ``use_grid`` switches to
    a uniform cell index; the counts are identical, only faster for large
    complexes.
    """
    cfg = cfg or InteractionConfig()
    out = np.zeros(cfg.width, dtype=np.int64)
    p_xyz, p_type = _typed_atoms(cx, PROTEIN, cfg.protein_elements)
    l_xyz, l_type = _typed_atoms(cx, LIGAND, cfg.ligand_elements)
    (_grid_counts if use_grid else _pair_counts)(p_xyz, p_type, l_xyz, l_type, cfg, out)
    return out.astype(np.float64)


# ------------------------------------------------------------- pooling


def _encode(atoms: Sequence[AtomRecord], schema: DatasetSchema) -> tuple[np.ndarray, int]:
    n = len(atoms)
    blocks = []
    unseen = 0
    for name in schema.feature_names:
        try:
            values = [a.features[name] for a in atoms]
        except KeyError:
            raise FeaturizeError(f"atom is missing feature {name!r}") from None
        if schema.feature_kinds[name] == CATEGORICAL:
            vocab = schema.categorical_vocab[name]
            lookup = {c: i for i, c in enumerate(vocab)}
            idx = np.array([lookup.get(v, -1) for v in values], dtype=np.int64)
            block = np.zeros((n, len(vocab)))
            seen = idx >= 0
            block[np.nonzero(seen)[0], idx[seen]] = 1.0
            unseen += int(n - seen.sum())
            blocks.append(block)
        else:
            try:
                col = np.array(values, dtype=np.float64)
            except (TypeError, ValueError):
                raise FeaturizeError(f"feature {name!r} has non-numeric values") from None
            if not np.isfinite(col).all():
                raise FeaturizeError(f"feature {name!r} has non-finite values")
            blocks.append(col.reshape(n, 1))
    if not blocks:
        return np.zeros((n, 0)), unseen
    return np.hstack(blocks), unseen


def encode_atoms(atoms: Sequence[AtomRecord], schema: DatasetSchema) -> np.ndarray:
    """Encode atoms into an ``(n_atoms, schema.width)`` matrix.

    Categories missing from the frozen vocabulary encode as an all-zeros
    block and raise an :class:`UnseenCategoryWarning`.
    """
    enc, unseen = _encode(atoms, schema)
    if unseen:
        warnings.warn(
            f"{unseen} categorical value(s) outside the frozen vocabulary encoded as all-zeros",
            UnseenCategoryWarning,
            stacklevel=2,
        )
    return enc


def encode_atom(atom: AtomRecord, schema: DatasetSchema) -> np.ndarray:
    return encode_atoms([atom], schema)[0]


def pool_sum(cx: ComplexRecord, schema: DatasetSchema) -> np.ndarray:
    return encode_atoms(cx.atoms, schema).sum(axis=0)


def pool_std(cx: ComplexRecord, schema: DatasetSchema) -> np.ndarray:
    """Population standard deviation (ddof=0) of encoded atom features."""
    return encode_atoms(cx.atoms, schema).std(axis=0)


def feature_columns(cfg: InteractionConfig, schema: DatasetSchema) -> list[str]:
    atom_cols = schema.encoded_names()
    return (
        cfg.column_names()
        + [SUM_PREFIX + c for c in atom_cols]
        + [STD_PREFIX + c for c in atom_cols]
    )


def _featurize_one(cx, cfg, schema, use_grid) -> tuple[np.ndarray, int]:
    enc, unseen = _encode(cx.atoms, schema)
    row = np.concatenate([interaction_features(cx, cfg, use_grid), enc.sum(axis=0), enc.std(axis=0)])
    return row, unseen


def featurize_complex(
    cx: ComplexRecord, cfg: InteractionConfig, schema: DatasetSchema, use_grid: bool = False
) -> np.ndarray:
    row, unseen = _featurize_one(cx, cfg, schema, use_grid)
    if unseen:
        warnings.warn(
            f"complex {cx.id}: {unseen} unseen categorical value(s)", UnseenCategoryWarning, stacklevel=2
        )
    return row


def featurize_dataset(
    complexes: Sequence[ComplexRecord],
    cfg: InteractionConfig | None = None,
    schema: DatasetSchema | None = None,
    threads: int = 1,
    use_grid: bool = False,
) -> FeatureMatrix:
    """Featurize complexes into a matrix; row order follows the input.

    ``schema`` defaults to one inferred from ``complexes`` themselves; pass
    the training schema when featurizing held-out data.
    """
    cfg = cfg or InteractionConfig()
    if schema is None:
        schema = infer_schema(complexes)
    columns = feature_columns(cfg, schema)

    def one(cx):
        try:
            row, unseen = _featurize_one(cx, cfg, schema, use_grid)
            return row, None, unseen
        except (FeaturizeError, ValueError) as exc:
            return None, f"{cx.id}: {exc}", 0

    if threads > 1 and len(complexes) > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, complexes))
    else:
        results = [one(cx) for cx in complexes]

    errors = [err for _, err, _ in results if err]
    if errors:
        raise FeaturizeError(f"{len(errors)} complex(es) failed to featurize:\n  " + "\n  ".join(errors))
    n_unseen = sum(w for _, _, w in results)
    if n_unseen:
        warnings.warn(
            f"{n_unseen} atom value(s) fall outside the frozen categorical vocabulary; "
            "encoded as all-zeros",
            UnseenCategoryWarning,
            stacklevel=2,
        )
    rows = np.array([r for r, _, _ in results], dtype=np.float64).reshape(len(complexes), len(columns))
    return FeatureMatrix(
        tuple(columns),
        rows,
        np.array([cx.affinity for cx in complexes], dtype=np.float64),
        tuple(cx.id for cx in complexes),
    )
