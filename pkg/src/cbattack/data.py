"""Synthetic biometric datasets and file loaders.

The face generator stands in for deep-embedding datasets: one class center
per subject drawn uniformly on the unit hypersphere, samples re-normalized
after isotropic Gaussian perturbation, so cosine-similarity class structure
is preserved.  The iris generator stands in for binary iris codes: a
uniform random master template per subject with i.i.d. bit flips per
sample.  Both are pure functions of their seed (Philox streams).

File formats: feature CSV with header ``subject,sample,v0..v{d-1}`` (at
least 17 significant digits, so float64 round-trips exactly), and a
directory of CBT1 files named ``{subject}_{sample}.cbt`` plus a
``manifest.json``.  Loaders require a rectangular grid (equal sample count
per subject); subject and sample order is normalized by sorting ids, the
indices themselves carry no meaning.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from cbattack.errors import InvalidConfig, ParseError, ShapeInconsistent
from cbattack.templates import (
    BitTemplate,
    FeatureVector,
    PackedBits,
    load_template,
    save_template,
)

# ---------------------------------------------------------------------------
# Configs


@dataclass(frozen=True)
class SyntheticFaceConfig:
    subjects: int = 20
    samples_per_subject: int = 10
    dim: int = 128
    intra_noise_sigma: float = 0.15
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.subjects, self.samples_per_subject, self.dim) <= 0:
            raise InvalidConfig("subjects, samples_per_subject and dim must be positive")
        if self.intra_noise_sigma < 0:
            raise InvalidConfig("intra_noise_sigma must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class SyntheticIrisConfig:
    subjects: int = 10
    samples_per_subject: int = 4
    width: int = 512
    height: int = 20
    intra_flip_prob: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.subjects, self.samples_per_subject, self.width, self.height) <= 0:
            raise InvalidConfig("subjects, samples, width and height must be positive")
        if not 0 <= self.intra_flip_prob < 0.5:
            raise InvalidConfig(
                "intra_flip_prob must be in [0, 0.5); at 0.5 classes are indistinguishable"
            )
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig("seed must be an unsigned 64-bit integer")


# ---------------------------------------------------------------------------
# Datasets


@dataclass(frozen=True, eq=False)
class FeatureDataset:
    """Rectangular grid of feature vectors, array shape (S, M, dim)."""

    vectors: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if arr.ndim != 3:
            raise InvalidConfig("vectors must have shape (subjects, samples, dim)")
        arr.setflags(write=False)
        object.__setattr__(self, "vectors", arr)

    @property
    def subjects(self) -> int:
        return self.vectors.shape[0]

    @property
    def samples_per_subject(self) -> int:
        return self.vectors.shape[1]

    @property
    def dim(self) -> int:
        return self.vectors.shape[2]

    def item(self, subject: int, sample: int) -> FeatureVector:
        return FeatureVector(values=self.vectors[subject, sample].copy())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureDataset):
            return NotImplemented
        return bool(np.array_equal(self.vectors, other.vectors))


@dataclass(frozen=True, eq=False)
class IrisDataset:
    """Rectangular grid of bit templates, bits shape (S, M, W*H)."""

    bits: np.ndarray
    width: int
    height: int

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != self.width * self.height:
            raise InvalidConfig("bits must have shape (subjects, samples, W*H)")
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def subjects(self) -> int:
        return self.bits.shape[0]

    @property
    def samples_per_subject(self) -> int:
        return self.bits.shape[1]

    def item(self, subject: int, sample: int) -> BitTemplate:
        return BitTemplate(
            bits=PackedBits.from_bits(self.bits[subject, sample]),
            width=self.width,
            height=self.height,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IrisDataset):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and bool(np.array_equal(self.bits, other.bits))
        )


# ---------------------------------------------------------------------------
# Generators


def generate_face_dataset(cfg: SyntheticFaceConfig) -> FeatureDataset:
    """Unit-norm class centers with re-normalized Gaussian perturbations."""
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    centers = rng.standard_normal((cfg.subjects, cfg.dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    noise = rng.standard_normal((cfg.subjects, cfg.samples_per_subject, cfg.dim))
    samples = centers[:, None, :] + cfg.intra_noise_sigma * noise
    norms = np.linalg.norm(samples, axis=2, keepdims=True)
    if norms.min() < 1e-12:
        raise InvalidConfig("degenerate sample with near-zero norm; lower the noise")
    return FeatureDataset(vectors=samples / norms)


def generate_iris_dataset(cfg: SyntheticIrisConfig) -> IrisDataset:
    """Per-subject uniform master template with i.i.d. per-sample bit flips."""
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    n_bits = cfg.width * cfg.height
    masters = rng.integers(0, 2, size=(cfg.subjects, n_bits), dtype=np.uint8)
    flips = (
        rng.random((cfg.subjects, cfg.samples_per_subject, n_bits)) < cfg.intra_flip_prob
    ).astype(np.uint8)
    return IrisDataset(
        bits=np.bitwise_xor(masters[:, None, :], flips),
        width=cfg.width,
        height=cfg.height,
    )


# ---------------------------------------------------------------------------
# Feature CSV


def save_feature_csv(dataset: FeatureDataset, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["subject", "sample"] + [f"v{i}" for i in range(dataset.dim)]
        )
        for s in range(dataset.subjects):
            for j in range(dataset.samples_per_subject):
                row = [str(s), str(j)] + [
                    format(v, ".17g") for v in dataset.vectors[s, j]
                ]
                writer.writerow(row)


def _parse_float(token: str, line: int) -> float:
    try:
        value = float(token)
    except ValueError as exc:
        raise ParseError(f"line {line}: cannot parse {token!r} as a number") from exc
    if not math.isfinite(value):
        raise ParseError(f"line {line}: non-finite value {token!r}")
    return value


def _parse_int(token: str, line: int, name: str) -> int:
    try:
        return int(token)
    except ValueError as exc:
        raise ParseError(f"line {line}: bad {name} id {token!r}") from exc


def load_feature_csv(path: Union[str, Path]) -> FeatureDataset:
    rows = {}
    dim = None
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file") from None
        if header[:2] != ["subject", "sample"]:
            raise ParseError("header must start with subject,sample")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 3:
                raise ParseError(f"line {line}: need subject, sample and values")
            subject = _parse_int(row[0], line, "subject")
            sample = _parse_int(row[1], line, "sample")
            values = [_parse_float(tok, line) for tok in row[2:]]
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise ShapeInconsistent(
                    f"line {line}: {len(values)} values, expected {dim}"
                )
            if (subject, sample) in rows:
                raise ParseError(f"line {line}: duplicate subject/sample {subject},{sample}")
            rows[(subject, sample)] = values
    if not rows:
        raise ParseError("no data rows")
    return FeatureDataset(vectors=_grid(rows, dim))


def _grid(rows: dict, dim: int) -> np.ndarray:
    subjects = sorted({s for s, _ in rows})
    per_subject = {
        s: sorted(j for s2, j in rows if s2 == s) for s in subjects
    }
    counts = {len(v) for v in per_subject.values()}
    if len(counts) != 1:
        raise ShapeInconsistent("subjects have unequal sample counts")
    grid = np.empty((len(subjects), counts.pop(), dim))
    for si, s in enumerate(subjects):
        for ji, j in enumerate(per_subject[s]):
            grid[si, ji] = rows[(s, j)]
    return grid


# ---------------------------------------------------------------------------
# Bit-template directories


def save_bit_templates(dataset: IrisDataset, directory: Union[str, Path]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "width": dataset.width,
        "height": dataset.height,
        "subjects": dataset.subjects,
        "samples_per_subject": dataset.samples_per_subject,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
    for s in range(dataset.subjects):
        for j in range(dataset.samples_per_subject):
            save_template(directory / f"{s}_{j}.cbt", dataset.item(s, j))


def load_bit_templates(directory: Union[str, Path]) -> IrisDataset:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise ParseError(f"missing manifest {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
        width = int(manifest["width"])
        height = int(manifest["height"])
        subjects = int(manifest["subjects"])
        samples = int(manifest["samples_per_subject"])
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad manifest: {exc}") from exc
    bits = np.empty((subjects, samples, width * height), dtype=np.uint8)
    for s in range(subjects):
        for j in range(samples):
            path = directory / f"{s}_{j}.cbt"
            if not path.exists():
                raise ParseError(f"missing template file {path.name}")
            template = load_template(path)
            if template.width != width or template.height != height:
                raise ShapeInconsistent(
                    f"{path.name} is {template.width}x{template.height}, "
                    f"manifest says {width}x{height}"
                )
            bits[s, j] = template.bits.to_bits()
    return IrisDataset(bits=bits, width=width, height=height)
