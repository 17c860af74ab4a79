"""Bipolar codebooks, the binding algebra, problem instances, and scoring.

Conventions used throughout the package:

* Raw algebra (binding, ground truth, cross-talk arguments) happens on
  bipolar entries in {-1, +1}, where elementwise multiplication is exact
  and self-inverse.
* A codebook carries a ``scale`` factor; scaled columns (norm
  ``scale * sqrt(dim)``) feed the continuous solvers. ``scale = 1``
  recovers the pure bipolar setting used by the discrete baselines.
* An observation built from scaled factors is scaled by ``scale ** K`` so
  that composing K scaled factor estimates matches its magnitude, and the
  additive noise is drawn in raw units before that scaling, keeping the
  noise level's meaning independent of ``scale``.
"""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import flops


@dataclass(frozen=True)
class Codebook:
    """One factor's discrete value set, stored column-wise."""

    entries: np.ndarray          # (dim, size) raw entries in {-1, +1}
    scale: float
    seed: int | None = None

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 2:
            raise ValueError("codebook entries must be a dim x size matrix")
        if not np.all(np.abs(e) == 1.0):
            raise ValueError("codebook entries must be exactly -1 or +1")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "entries", e)
        e.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def size(self) -> int:
        return self.entries.shape[1]

    @property
    def scaled(self) -> np.ndarray:
        """Columns scaled to norm ``scale * sqrt(dim)``."""
        return self.scale * self.entries

    def column(self, index: int, scaled: bool = False) -> np.ndarray:
        col = self.entries[:, index]
        return self.scale * col if scaled else col


@dataclass(frozen=True)
class ProblemInstance:
    """A decomposition task: K codebooks, hidden indices, noisy observation."""

    codebooks: tuple[Codebook, ...]
    true_indices: tuple[int, ...]
    observation: np.ndarray      # scaled by scale**K
    noise_sigma: float
    seed: int

    def __post_init__(self):
        if len(self.codebooks) < 1:
            raise ValueError("need at least one codebook")
        if len(self.true_indices) != len(self.codebooks):
            raise ValueError("one true index per codebook")
        for cb, idx in zip(self.codebooks, self.true_indices):
            if not 0 <= idx < cb.size:
                raise ValueError(f"index {idx} out of range for size {cb.size}")
        obs = np.asarray(self.observation, dtype=np.float64)
        object.__setattr__(self, "observation", obs)
        obs.setflags(write=False)

    @property
    def num_factors(self) -> int:
        return len(self.codebooks)

    @property
    def dim(self) -> int:
        return self.codebooks[0].dim

    @property
    def observation_scale(self) -> float:
        return self.codebooks[0].scale ** len(self.codebooks)

    @property
    def observation_raw(self) -> np.ndarray:
        """Observation in raw bipolar units (used by the discrete baselines)."""
        return self.observation / self.observation_scale

    def true_composition(self, scaled: bool = False) -> np.ndarray:
        cols = [cb.column(i) for cb, i in zip(self.codebooks, self.true_indices)]
        comp = bind(cols)
        return self.observation_scale * comp if scaled else comp


@dataclass
class DecodedSolution:
    """A solver's answer plus the evidence used to select it."""

    indices: list[int]
    factor_estimates: list[np.ndarray]
    reconstruction_similarity: float
    iterations_used: int
    diverged: bool = False
    degenerate: bool = False
    extras: dict = field(default_factory=dict)


def generate_codebooks(seed: int, dim: int, size: int, num_factors: int,
                       scale: float = 1.0) -> list[Codebook]:
    """Sample ``num_factors`` codebooks of i.i.d. uniform bipolar entries.

    Deterministic given ``seed``. Duplicate columns within a codebook are
    resampled (collisions only matter for tiny dimensions).
    """
    if dim < 1 or size < 1 or num_factors < 1:
        raise ValueError("dim, size and num_factors must be positive")
    if scale <= 0:
        raise ValueError("scale must be positive")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5eed]))
    books = []
    for _ in range(num_factors):
        entries = rng.choice((-1.0, 1.0), size=(dim, size))
        entries = _dedupe_columns(entries, rng)
        books.append(Codebook(entries=entries, scale=float(scale), seed=int(seed)))
    return books


def _dedupe_columns(entries: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    dim, size = entries.shape
    for _ in range(64):
        _, first = np.unique(entries.T, axis=0, return_index=True)
        if len(first) == size:
            return entries
        dup = np.setdiff1d(np.arange(size), first)
        entries[:, dup] = rng.choice((-1.0, 1.0), size=(dim, len(dup)))
    raise RuntimeError("could not generate distinct codebook columns")


def bind(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Elementwise product over a nonempty list of equal-dimension vectors."""
    if len(vectors) == 0:
        raise ValueError("bind needs at least one vector")
    out = np.asarray(vectors[0], dtype=np.float64).copy()
    for v in vectors[1:]:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != out.shape:
            raise ValueError("bind: dimension mismatch")
        out *= v
    flops.add(flops.elementwise(out.size, max(len(vectors) - 1, 0)))
    return out


def exclusive_products(vectors: Sequence[np.ndarray]) -> list[np.ndarray]:
    """For each j, the elementwise product of all vectors except the j-th.

    Recomposes rather than dividing the full product (division is unsafe
    near zero entries of continuous estimates).
    """
    k = len(vectors)
    if k == 1:
        return [np.ones_like(np.asarray(vectors[0], dtype=np.float64))]
    return [bind([vectors[i] for i in range(k) if i != j]) for j in range(k)]


def make_instance(codebooks: Sequence[Codebook], true_indices: Sequence[int],
                  m: int, seed: int) -> ProblemInstance:
    """Build the observation for superposition level ``m``.

    The additive-noise level is ``sigma = sqrt(m - 1)`` in raw bipolar units,
    the Gaussian surrogate for cross-talk from m - 1 other bound vectors.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    books = tuple(codebooks)
    idx = tuple(int(i) for i in true_indices)
    for cb, i in zip(books, idx):
        if not 0 <= i < cb.size:
            raise ValueError(f"true index {i} out of range")
    sigma = float(np.sqrt(m - 1.0))
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x0b5]))
    raw = bind([cb.column(i) for cb, i in zip(books, idx)])
    if sigma > 0:
        raw = raw + sigma * rng.standard_normal(books[0].dim)
    obs_scale = books[0].scale ** len(books)
    return ProblemInstance(codebooks=books, true_indices=idx,
                           observation=obs_scale * raw, noise_sigma=sigma,
                           seed=int(seed))


def cleanup(codebook: Codebook, estimate: np.ndarray,
            scaled: bool = False) -> tuple[int, float, bool]:
    """Nearest stored column by inner product.

    Returns ``(index, cosine_similarity, degenerate)``; ties break to the
    lowest index and a zero estimate is flagged degenerate with index 0.
    """
    est = np.asarray(estimate, dtype=np.float64)
    if est.shape != (codebook.dim,):
        raise ValueError("estimate dimension does not match codebook")
    norm = np.linalg.norm(est)
    if norm == 0.0:
        return 0, 0.0, True
    mat = codebook.scaled if scaled else codebook.entries
    scores = mat.T @ est
    flops.add(flops.matvec(codebook.dim, codebook.size))
    index = int(np.argmax(scores))            # argmax takes the first maximum
    col = mat[:, index]
    sim = float(scores[index] / (norm * np.linalg.norm(col)))
    return index, sim, False


def accuracy(solution: DecodedSolution, instance: ProblemInstance) -> float:
    """Fraction of factor positions decoded correctly."""
    if len(solution.indices) != instance.num_factors:
        raise ValueError("solution and instance have different factor counts")
    hits = sum(int(a == b) for a, b in zip(solution.indices, instance.true_indices))
    return hits / instance.num_factors


def reconstruction_similarity(instance: ProblemInstance,
                              indices: Sequence[int]) -> float:
    """Cosine between the composition of the decoded columns and the observation."""
    comp = bind([cb.column(i) for cb, i in zip(instance.codebooks, indices)])
    obs = instance.observation_raw
    denom = np.linalg.norm(comp) * np.linalg.norm(obs)
    if denom == 0:
        return 0.0
    flops.add(flops.elementwise(comp.size, 4))
    return float(comp @ obs / denom)


# --- serialization ---------------------------------------------------------

def _pack_bipolar(entries: np.ndarray) -> str:
    return base64.b64encode(entries.astype(np.int8).tobytes()).decode("ascii")


def _unpack_bipolar(blob: str, dim: int, size: int) -> np.ndarray:
    raw = np.frombuffer(base64.b64decode(blob), dtype=np.int8)
    return raw.reshape(dim, size).astype(np.float64)


def codebook_to_dict(cb: Codebook) -> dict:
    return {
        "kind": "codebook",
        "dim": cb.dim,
        "size": cb.size,
        "scale": cb.scale,
        "seed": cb.seed,
        "entries_b64_int8": _pack_bipolar(cb.entries),
    }


def codebook_from_dict(d: dict) -> Codebook:
    entries = _unpack_bipolar(d["entries_b64_int8"], d["dim"], d["size"])
    return Codebook(entries=entries, scale=float(d["scale"]), seed=d.get("seed"))


def instance_to_dict(inst: ProblemInstance) -> dict:
    return {
        "kind": "problem_instance",
        "codebooks": [codebook_to_dict(cb) for cb in inst.codebooks],
        "true_indices": list(inst.true_indices),
        "noise_sigma": inst.noise_sigma,
        "seed": inst.seed,
        "observation_b64_f64": base64.b64encode(
            np.ascontiguousarray(inst.observation).tobytes()).decode("ascii"),
    }


def instance_from_dict(d: dict) -> ProblemInstance:
    books = tuple(codebook_from_dict(c) for c in d["codebooks"])
    obs = np.frombuffer(base64.b64decode(d["observation_b64_f64"]),
                        dtype=np.float64).copy()
    return ProblemInstance(codebooks=books,
                           true_indices=tuple(d["true_indices"]),
                           observation=obs,
                           noise_sigma=float(d["noise_sigma"]),
                           seed=int(d["seed"]))


def save_instance(inst: ProblemInstance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(inst), fh)


def load_instance(path) -> ProblemInstance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))
