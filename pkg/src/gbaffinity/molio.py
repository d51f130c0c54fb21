"""Reading, writing and generating protein-ligand complexes.

The canonical on-disk format is JSON Lines, one complex per line::

    {"id": "1abc", "affinity": 6.2, "atoms": [
        {"role": "protein", "element": "C", "x": 0.0, "y": 1.5, "z": -2.0,
         "features": {"charge": -0.3, "type": "C.3"}}, ...]}

A minimal fixed-column PDB reader is provided for ingesting raw structures;
it only yields element and coordinates.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)

PROTEIN = "protein"
LIGAND = "ligand"
ROLES = (PROTEIN, LIGAND)

NUMERIC = "numeric"
CATEGORICAL = "categorical"

FeatureValue = Union[float, str]


class MolIOError(ValueError):
    """Base class for input errors."""


class ParseError(MolIOError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(MolIOError):
    pass


def canonical_element(symbol: str) -> str:
    """Normalize capitalization, e.g. ``"CL"`` -> ``"Cl"``."""
    symbol = symbol.strip()
    if not symbol or not symbol[0].isalpha():
        raise MolIOError(f"invalid element symbol {symbol!r}")
    return symbol[0].upper() + symbol[1:].lower()


@dataclass(frozen=True, slots=True)
class AtomRecord:
    role: str
    element: str
    x: float
    y: float
    z: float
    features: Mapping[str, FeatureValue] = field(default_factory=dict)

    def __post_init__(self):
        if self.role not in ROLES:
            raise MolIOError(f"unknown atom role {self.role!r}")
        if not self.element or not self.element[0].isupper():
            raise MolIOError(f"invalid element symbol {self.element!r}")
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise MolIOError(f"non-finite coordinate ({self.x}, {self.y}, {self.z})")

    @property
    def xyz(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True, slots=True)
class ComplexRecord:
    id: str
    affinity: float
    atoms: tuple[AtomRecord, ...]

    def __post_init__(self):
        if not isinstance(self.atoms, tuple):
            object.__setattr__(self, "atoms", tuple(self.atoms))
        if not math.isfinite(self.affinity):
            raise MolIOError(f"complex {self.id}: non-finite affinity {self.affinity}")
        roles = {a.role for a in self.atoms}
        if PROTEIN not in roles or LIGAND not in roles:
            raise MolIOError(f"complex {self.id}: needs at least one protein and one ligand atom")

    def coords(self, role: str) -> np.ndarray:
        pts = [a.xyz for a in self.atoms if a.role == role]
        return np.array(pts, dtype=np.float64).reshape(-1, 3)

    def elements(self, role: str) -> list[str]:
        return [a.element for a in self.atoms if a.role == role]


@dataclass(frozen=True)
class DatasetSchema:
    """Per-atom feature layout frozen from a training set.

    Numeric features pass through; each categorical feature becomes a
    one-hot block over ``categorical_vocab[name]``.
    """

    feature_names: tuple[str, ...] = ()
    feature_kinds: Mapping[str, str] = field(default_factory=dict)
    categorical_vocab: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        for name in self.feature_names:
            kind = self.feature_kinds.get(name)
            if kind not in (NUMERIC, CATEGORICAL):
                raise SchemaError(f"feature {name!r} has invalid kind {kind!r}")
            if kind == CATEGORICAL:
                vocab = tuple(self.categorical_vocab.get(name, ()))
                if list(vocab) != sorted(set(vocab)):
                    raise SchemaError(f"vocabulary of {name!r} must be sorted and duplicate-free")

    @property
    def width(self) -> int:
        return len(self.encoded_names())

    def encoded_names(self) -> list[str]:
        out = []
        for name in self.feature_names:
            if self.feature_kinds[name] == NUMERIC:
                out.append(name)
            else:
                out.extend(f"{name}={cat}" for cat in self.categorical_vocab[name])
        return out

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "feature_kinds": {n: self.feature_kinds[n] for n in self.feature_names},
            "categorical_vocab": {
                n: list(self.categorical_vocab[n])
                for n in self.feature_names
                if self.feature_kinds[n] == CATEGORICAL
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DatasetSchema":
        return cls(
            feature_names=tuple(d["feature_names"]),
            feature_kinds=dict(d["feature_kinds"]),
            categorical_vocab={k: tuple(v) for k, v in d.get("categorical_vocab", {}).items()},
        )


def infer_schema(complexes: Iterable[ComplexRecord]) -> DatasetSchema:
    """Freeze feature kinds and categorical vocabularies from ``complexes``."""
    names: tuple[str, ...] | None = None
    kinds: dict[str, str] = {}
    vocab: dict[str, set[str]] = {}
    for cx in complexes:
        for atom in cx.atoms:
            if names is None:
                names = tuple(atom.features)
            for name, value in atom.features.items():
                kind = CATEGORICAL if isinstance(value, str) else NUMERIC
                prev = kinds.setdefault(name, kind)
                if prev != kind:
                    raise SchemaError(
                        f"complex {cx.id}: feature {name!r} mixes numeric and categorical values"
                    )
                if kind == CATEGORICAL:
                    vocab.setdefault(name, set()).add(value)
    names = names or ()
    return DatasetSchema(
        feature_names=names,
        feature_kinds={n: kinds[n] for n in names},
        categorical_vocab={n: tuple(sorted(v)) for n, v in vocab.items()},
    )


# ---------------------------------------------------------------- JSONL


def _atom_from_obj(obj: Mapping) -> AtomRecord:
    if not isinstance(obj, Mapping):
        raise MolIOError("atom entry is not an object")
    features = obj.get("features", {})
    if not isinstance(features, Mapping):
        raise MolIOError("atom 'features' is not an object")
    clean: dict[str, FeatureValue] = {}
    for name, value in features.items():
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise MolIOError(f"feature {name!r} must be a number or a string")
        clean[name] = value if isinstance(value, str) else float(value)
    coords = []
    for key in ("x", "y", "z"):
        v = obj.get(key)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise MolIOError(f"coordinate {key!r} missing or not a number")
        coords.append(float(v))
    element = obj.get("element")
    if not isinstance(element, str):
        raise MolIOError("atom 'element' missing or not a string")
    return AtomRecord(obj.get("role"), canonical_element(element), *coords, clean)


def complex_from_obj(obj: Mapping) -> ComplexRecord:
    if not isinstance(obj, Mapping):
        raise MolIOError("record is not a JSON object")
    cid = obj.get("id")
    if not isinstance(cid, str):
        raise MolIOError("record 'id' missing or not a string")
    affinity = obj.get("affinity")
    if isinstance(affinity, bool) or not isinstance(affinity, (int, float)):
        raise MolIOError(f"complex {cid}: 'affinity' missing or not a number")
    atoms = obj.get("atoms")
    if not isinstance(atoms, list):
        raise MolIOError(f"complex {cid}: 'atoms' missing or not a list")
    try:
        parsed = tuple(_atom_from_obj(a) for a in atoms)
    except MolIOError as exc:
        raise MolIOError(f"complex {cid}: {exc}") from None
    return ComplexRecord(cid, float(affinity), parsed)


def complex_to_obj(cx: ComplexRecord) -> dict:
    return {
        "id": cx.id,
        "affinity": cx.affinity,
        "atoms": [
            {
                "role": a.role,
                "element": a.element,
                "x": a.x,
                "y": a.y,
                "z": a.z,
                "features": dict(a.features),
            }
            for a in cx.atoms
        ],
    }


def dumps_dataset(complexes: Iterable[ComplexRecord]) -> str:
    lines = [
        json.dumps(complex_to_obj(cx), separators=(",", ":"), ensure_ascii=False, allow_nan=False)
        for cx in complexes
    ]
    return "".join(line + "\n" for line in lines)


def write_dataset(complexes: Iterable[ComplexRecord], path: str | Path) -> None:
    Path(path).write_text(dumps_dataset(complexes), encoding="utf-8", newline="\n")


def check_schema_consistency(complexes: Sequence[ComplexRecord]) -> None:
    """Every atom in every complex must expose the same feature-name set."""
    reference: frozenset[str] | None = None
    for cx in complexes:
        for atom in cx.atoms:
            names = frozenset(atom.features)
            if reference is None:
                reference = names
            elif names != reference:
                missing = sorted(reference - names)
                extra = sorted(names - reference)
                raise SchemaError(
                    f"complex {cx.id}: feature names differ from dataset schema "
                    f"(missing {missing}, unexpected {extra})"
                )


def loads_dataset(text: str) -> list[ComplexRecord]:
    complexes = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON ({exc.msg})", lineno) from None
        try:
            complexes.append(complex_from_obj(obj))
        except MolIOError as exc:
            raise ParseError(str(exc), lineno) from None
    check_schema_consistency(complexes)
    return complexes


def parse_dataset(path: str | Path, format: str = "atoms_jsonl") -> list[ComplexRecord]:
    """Load all complexes from ``path`` in file order."""
    if format != "atoms_jsonl":
        raise ValueError(f"unsupported dataset format {format!r}")
    return loads_dataset(Path(path).read_text(encoding="utf-8"))


# ------------------------------------------------------------------ PDB


def _pdb_element(line: str) -> str:
    symbol = line[76:78].strip()
    if symbol:
        return canonical_element(symbol)
    # Atom names keep two-letter elements starting at column 13 and
    # one-letter elements right-shifted to column 14.
    name = line[12:16]
    if name[:1].isalpha():
        run = ""
        for ch in name[:2]:
            if not ch.isalpha():
                break
            run += ch
        return canonical_element(run)
    for ch in name:
        if ch.isalpha():
            return ch.upper()
    raise MolIOError("cannot resolve element from atom name or element columns")


def parse_pdb_lines(text: str) -> list[AtomRecord]:
    """Extract ATOM (protein) and HETATM (ligand) records from PDB text."""
    atoms = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if raw.startswith("ATOM  "):
            role = PROTEIN
        elif raw.startswith("HETATM"):
            role = LIGAND
        else:
            continue
        line = raw.ljust(80)
        try:
            x, y, z = (float(line[a:b]) for a, b in ((30, 38), (38, 46), (46, 54)))
        except ValueError:
            raise ParseError("coordinate field is not a number", lineno) from None
        try:
            element = _pdb_element(line)
            atoms.append(AtomRecord(role, element, x, y, z, {}))
        except MolIOError as exc:
            raise ParseError(str(exc), lineno) from None
    return atoms


# ------------------------------------------------------------ synthetic

SYNTH_PROTEIN_ELEMENTS = ("C", "N", "O", "S")
SYNTH_LIGAND_ELEMENTS = ("C", "N", "O", "F", "P", "S", "Cl", "Br", "I")
_HYBRIDIZATIONS = ("sp", "sp2", "sp3")
_RESIDUE_CLASSES = ("charged", "hydrophobic", "polar")

# Weights of the ``linear`` target over per-complex feature sums.
LINEAR_INTERCEPT = 5.0
LINEAR_WEIGHTS = {
    "ligand_charge": 0.8,
    "protein_charge": -0.4,
    "ligand_aromatic": 0.05,
    "protein_bfactor": 0.001,
}
CONTACT_DISTANCE = 4.5


def _synthetic_features(role: str, element: str, rng: np.random.Generator) -> dict:
    # 18 encoded columns per role once every category has been observed.
    if role == PROTEIN:
        return {
            "protein_type": element,
            "protein_hybridization": _HYBRIDIZATIONS[rng.integers(3)],
            "protein_residue_class": _RESIDUE_CLASSES[rng.integers(3)],
            "protein_charge": round(float(rng.uniform(-0.5, 0.5)), 4),
            "protein_aromatic": float(rng.integers(2)),
            "protein_hdonor": float(rng.integers(2)),
            "protein_hacceptor": float(rng.integers(2)),
            "protein_bfactor": round(float(rng.uniform(10.0, 60.0)), 2),
            "ligand_type": "none",
            "ligand_hybridization": "none",
            "ligand_charge": 0.0,
            "ligand_aromatic": 0.0,
            "ligand_ring": 0.0,
            "ligand_degree": 0.0,
        }
    return {
        "protein_type": "none",
        "protein_hybridization": "none",
        "protein_residue_class": "none",
        "protein_charge": 0.0,
        "protein_aromatic": 0.0,
        "protein_hdonor": 0.0,
        "protein_hacceptor": 0.0,
        "protein_bfactor": 0.0,
        "ligand_type": element,
        "ligand_hybridization": _HYBRIDIZATIONS[rng.integers(3)],
        "ligand_charge": round(float(rng.uniform(-1.0, 1.0)), 4),
        "ligand_aromatic": float(rng.integers(2)),
        "ligand_ring": float(rng.integers(2)),
        "ligand_degree": float(rng.integers(1, 5)),
    }


def feature_sum(atoms: Sequence[AtomRecord], name: str) -> float:
    """Sum of a numeric feature over atoms, accumulated in atom order."""
    total = 0.0
    for a in atoms:
        total += a.features[name]
    return total


def _feature_mean(atoms: Sequence[AtomRecord], name: str, role: str) -> float:
    vals = [a.features[name] for a in atoms if a.role == role]
    return sum(vals) / len(vals)


def linear_target(atoms: Sequence[AtomRecord]) -> float:
    y = LINEAR_INTERCEPT
    for name, w in LINEAR_WEIGHTS.items():
        y += w * feature_sum(atoms, name)
    return y


def friedman1_target(atoms: Sequence[AtomRecord]) -> float:
    x1 = (_feature_mean(atoms, "ligand_charge", LIGAND) + 1.0) / 2.0
    x2 = _feature_mean(atoms, "ligand_aromatic", LIGAND)
    x3 = _feature_mean(atoms, "ligand_ring", LIGAND)
    x4 = _feature_mean(atoms, "protein_charge", PROTEIN) + 0.5
    x5 = _feature_mean(atoms, "protein_aromatic", PROTEIN)
    f = 10.0 * math.sin(math.pi * x1 * x2) + 20.0 * (x3 - 0.5) ** 2 + 10.0 * x4 + 5.0 * x5
    return 2.0 + f / 3.0


def contact_target(atoms: Sequence[AtomRecord]) -> float:
    prot = np.array([a.xyz for a in atoms if a.role == PROTEIN])
    lig = np.array([a.xyz for a in atoms if a.role == LIGAND])
    d = np.sqrt(((prot[:, None, :] - lig[None, :, :]) ** 2).sum(axis=2))
    return 3.0 + 0.02 * float(np.count_nonzero(d <= CONTACT_DISTANCE))


TARGETS = {
    "linear": linear_target,
    "friedman1": friedman1_target,
    "pairwise_contact": contact_target,
}


def _ball(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / 3.0)
    return v * r[:, None]


def synthetic_complex(
    index: int,
    atoms_range: tuple[int, int],
    rng_seed: int,
    target_fn: str = "linear",
    noise: float = 0.1,
) -> ComplexRecord:
    rng = np.random.default_rng([rng_seed, index])
    n = int(rng.integers(atoms_range[0], atoms_range[1] + 1))
    n_lig = max(1, n // 4)
    n_prot = n - n_lig
    center = rng.uniform(-50.0, 50.0, 3)
    prot_xyz = np.round(center + _ball(rng, n_prot, 16.0), 3)
    lig_xyz = np.round(center + _ball(rng, n_lig, 4.0), 3)
    atoms = []
    for role, xyz, pool in (
        (PROTEIN, prot_xyz, SYNTH_PROTEIN_ELEMENTS),
        (LIGAND, lig_xyz, SYNTH_LIGAND_ELEMENTS),
    ):
        for p in xyz:
            element = pool[rng.integers(len(pool))]
            feats = _synthetic_features(role, element, rng)
            atoms.append(AtomRecord(role, element, float(p[0]), float(p[1]), float(p[2]), feats))
    y = TARGETS[target_fn](atoms)
    if noise:
        y += noise * float(rng.standard_normal())
    return ComplexRecord(f"synth{rng_seed}_{index:05d}", y, tuple(atoms))


def gen_synthetic(
    n_complexes: int,
    atoms_range: tuple[int, int] = (20, 60),
    rng_seed: int = 0,
    target_fn: str = "linear",
    noise: float = 0.1,
) -> list[ComplexRecord]:
    """Generate seeded synthetic complexes.

    Each complex draws from its own ``(rng_seed, index)`` stream, so the
    output does not depend on generation order. Protein elements are drawn
    from C/N/O/S and ligand elements from C/N/O/F/P/S/Cl/Br/I; roughly a
    quarter of the atoms are ligand atoms.

    Targets (before adding ``noise * N(0, 1)``):

    * ``linear``: ``LINEAR_INTERCEPT + sum(w * feature_sum(atoms, name))``
      over ``LINEAR_WEIGHTS`` in dict order.
    * ``friedman1``: Friedman #1 on five per-complex feature means mapped
      to [0, 1], rescaled to ``2 + f / 3``.
    * ``pairwise_contact``: ``3 + 0.02 * (#protein-ligand pairs within 4.5 A)``.
    """
    lo, hi = atoms_range
    if lo < 2 or hi < lo:
        raise ValueError(f"invalid atoms_range {atoms_range}: need 2 <= min <= max")
    if target_fn not in TARGETS:
        raise ValueError(f"unknown target_fn {target_fn!r}; choose from {sorted(TARGETS)}")
    if n_complexes < 0:
        raise ValueError("n_complexes must be >= 0")
    return [synthetic_complex(i, atoms_range, rng_seed, target_fn, noise) for i in range(n_complexes)]
