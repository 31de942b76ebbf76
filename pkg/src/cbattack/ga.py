"""Genetic-algorithm search for preimages of protected templates.

The engine minimizes transform-domain distance: a population of candidate
templates (real vectors for BioHashing, bit strings for Bloom-filter) is
evolved with tournament selection, crossover and mutation until the best
candidate's mean distance to the compromised template(s) reaches the
target, stalls, or the generation budget runs out.

Randomness is drawn from Philox counter-based streams derived from
(seed, generation, pair index), so a run is a pure function of its inputs:
identical (targets, helper, config) give bit-identical results, and fitness
evaluation can be parallelized without affecting the outcome.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from cbattack import biohashing, bloomfilter, kernels
from cbattack.errors import (
    EmptyTargets,
    IncompatibleGenome,
    InvalidConfig,
    InvalidParams,
    ShapeMismatch,
)
from cbattack.templates import (
    BitTemplate,
    FeatureVector,
    HelperData,
    PackedBits,
    ProtectedTemplate,
    Scheme,
    TemplateKind,
)

DEFAULT_BIT_MUTATION_RATE = 0.01
DEFAULT_REAL_MUTATION_RATE = 0.05

STOP_TARGET = "target"
STOP_STALL = "stall"
STOP_MAX_GENERATIONS = "max_generations"


# ---------------------------------------------------------------------------
# Genomes


@dataclass(frozen=True)
class RealVectorSpec:
    """Real-valued genome: ``dim`` coordinates, each in [lower, upper]."""

    dim: int
    lower: float = -1.0
    upper: float = 1.0

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise InvalidParams("genome dimension must be positive")
        if not self.lower < self.upper:
            raise InvalidParams("lower bound must be below upper bound")


@dataclass(frozen=True)
class BitStringSpec:
    """Binary genome of ``n_bits`` bits."""

    n_bits: int

    def __post_init__(self) -> None:
        if self.n_bits <= 0:
            raise InvalidParams("genome bit count must be positive")


GenomeSpec = Union[RealVectorSpec, BitStringSpec]


@dataclass(frozen=True, eq=False)
class Genome:
    """A candidate solution; payload dtype follows the spec kind."""

    spec: GenomeSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        if isinstance(self.spec, RealVectorSpec):
            values = np.ascontiguousarray(self.values, dtype=np.float64)
            if values.shape != (self.spec.dim,):
                raise ShapeMismatch(f"expected shape ({self.spec.dim},)")
            if values.min() < self.spec.lower or values.max() > self.spec.upper:
                raise InvalidParams("genome values out of bounds")
        else:
            values = np.ascontiguousarray(self.values, dtype=np.uint8)
            if values.shape != (self.spec.n_bits,):
                raise ShapeMismatch(f"expected shape ({self.spec.n_bits},)")
            if values.max(initial=0) > 1:
                raise InvalidParams("bit genome values must be 0 or 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Genome):
            return NotImplemented
        return self.spec == other.spec and bool(np.array_equal(self.values, other.values))


# ---------------------------------------------------------------------------
# Configuration and result types


@dataclass(frozen=True)
class GaConfig:
    """Engine settings; ``mutation_rate=None`` resolves per genome kind
    (0.01 for bit strings, 0.05 for real vectors)."""

    population_size: int = 100
    elite_count: int = 2
    crossover_rate: float = 0.8
    mutation_rate: Optional[float] = None
    mutation_scale: float = 0.1
    max_generations: int = 2000
    stall_generations: int = 50
    stall_tolerance: float = 1e-6
    fitness_target: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.population_size < 1:
            raise InvalidConfig("population_size must be at least 1")
        if not 0 <= self.elite_count < self.population_size:
            raise InvalidConfig("elite_count must be in [0, population_size)")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise InvalidConfig("crossover_rate must be in [0, 1]")
        if self.mutation_rate is not None and not 0.0 <= self.mutation_rate <= 1.0:
            raise InvalidConfig("mutation_rate must be in [0, 1]")
        if self.mutation_scale <= 0:
            raise InvalidConfig("mutation_scale must be positive")
        if self.max_generations < 1 or self.stall_generations < 1:
            raise InvalidConfig("generation counts must be positive")
        if self.stall_tolerance <= 0:
            raise InvalidConfig("stall_tolerance must be positive")
        if self.fitness_target < 0:
            raise InvalidConfig("fitness_target must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig("seed must be an unsigned 64-bit integer")

    def resolved_mutation_rate(self, spec: GenomeSpec) -> float:
        if self.mutation_rate is not None:
            return self.mutation_rate
        if isinstance(spec, BitStringSpec):
            return DEFAULT_BIT_MUTATION_RATE
        return DEFAULT_REAL_MUTATION_RATE


@dataclass(frozen=True)
class AttackResult:
    """Outcome of one attack run.

    ``convergence_log`` rows are (generation, best_fitness, mean_fitness)
    with best_fitness tracking the best individual ever seen, so the column
    is nonincreasing; ``best_fitness`` equals the last row's value.
    """

    best_genome: Genome
    best_fitness: float
    generations_run: int
    convergence_log: Tuple[Tuple[int, float, float], ...]
    wall_time_seconds: float
    stop_reason: str

    def __post_init__(self) -> None:
        if not self.convergence_log:
            raise InvalidParams("convergence log cannot be empty")
        best_column = [row[1] for row in self.convergence_log]
        if any(b < a for a, b in zip(best_column, best_column[1:])):
            raise InvalidParams("best fitness must be nonincreasing")
        if self.best_fitness != best_column[-1]:
            raise InvalidParams("best_fitness must equal the final log entry")


def write_convergence_csv(result: AttackResult, path: Union[str, Path]) -> None:
    """Stream the convergence log to CSV (generation, best, mean fitness)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["generation", "best_fitness", "mean_fitness"])
        for generation, best, mean in result.convergence_log:
            writer.writerow([generation, repr(best), repr(mean)])


# ---------------------------------------------------------------------------
# Operators (value-level helpers plus the public Genome-level wrappers)


def _crossover_values(
    a: np.ndarray, b: np.ndarray, spec: GenomeSpec, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(spec, BitStringSpec):
        swap = rng.random(spec.n_bits) < 0.5
        return np.where(swap, b, a), np.where(swap, a, b)
    alpha = rng.random()
    c1 = alpha * a + (1.0 - alpha) * b
    c2 = (1.0 - alpha) * a + alpha * b
    np.clip(c1, spec.lower, spec.upper, out=c1)
    np.clip(c2, spec.lower, spec.upper, out=c2)
    return c1, c2


def _mutate_values(
    values: np.ndarray,
    spec: GenomeSpec,
    rate: float,
    scale: float,
    rng: np.random.Generator,
) -> np.ndarray:
    if isinstance(spec, BitStringSpec):
        flips = rng.random(spec.n_bits) < rate
        return np.bitwise_xor(values, flips.astype(np.uint8))
    mask = rng.random(spec.dim) < rate
    noise = rng.standard_normal(spec.dim) * scale
    mutated = np.where(mask, values + noise, values)
    np.clip(mutated, spec.lower, spec.upper, out=mutated)
    return mutated


def crossover(a: Genome, b: Genome, rng: np.random.Generator) -> Tuple[Genome, Genome]:
    """Uniform crossover for bit strings, whole-arithmetic blend for reals."""
    if a.spec != b.spec:
        raise ShapeMismatch(f"parents have different specs: {a.spec} vs {b.spec}")
    c1, c2 = _crossover_values(a.values, b.values, a.spec, rng)
    return Genome(a.spec, c1), Genome(a.spec, c2)


def mutate(g: Genome, config: GaConfig, rng: np.random.Generator) -> Genome:
    """Independent bit flips, or per-coordinate Gaussian perturbation."""
    rate = config.resolved_mutation_rate(g.spec)
    return Genome(
        g.spec, _mutate_values(g.values, g.spec, rate, config.mutation_scale, rng)
    )


# ---------------------------------------------------------------------------
# Transform-domain objectives

Objective = Callable[[np.ndarray], np.ndarray]


def _biohash_objective(
    targets: Sequence[ProtectedTemplate],
    helper: HelperData,
    bounds: Tuple[float, float],
) -> Tuple[Objective, RealVectorSpec]:
    params = helper.biohash
    target_bits = []
    for t in targets:
        if t.kind is not TemplateKind.BIOHASH_CODE:
            raise IncompatibleGenome(f"target kind {t.kind.value} under a BioHashing token")
        code: PackedBits = t.payload
        if len(code) != params.code_length:
            raise IncompatibleGenome(
                f"target length {len(code)} != code_length {params.code_length}"
            )
        target_bits.append(code.to_bits())
    stacked = np.stack(target_bits)  # (m, l)

    def objective(population: np.ndarray) -> np.ndarray:
        bits = biohashing.biohash_bits(population, helper)
        mismatch = bits[:, None, :] != stacked[None, :, :]
        return mismatch.mean(axis=(1, 2))

    return objective, RealVectorSpec(dim=params.input_dim, lower=bounds[0], upper=bounds[1])


def _bloom_objective(
    targets: Sequence[ProtectedTemplate], helper: HelperData, measure: str
) -> Tuple[Objective, BitStringSpec]:
    params = helper.bloom
    dense_targets = []
    for t in targets:
        if t.kind is not TemplateKind.BLOOM_FILTER_SET:
            raise IncompatibleGenome(
                f"target kind {t.kind.value} under a Bloom-filter token"
            )
        payload: bloomfilter.BloomFilterSet = t.payload
        if payload.params != params:
            raise IncompatibleGenome(
                f"target params {payload.params} != helper params {params}"
            )
        dense_targets.append(np.ascontiguousarray(payload.to_dense()))
    plain = measure == "plain"
    width = params.width

    def objective(population: np.ndarray) -> np.ndarray:
        window = population.reshape(population.shape[0], width, params.word_size)
        codewords = bloomfilter.codewords_from_window_bits(window)
        codewords = np.ascontiguousarray(
            codewords.reshape(-1, params.block_count, params.columns_per_block)
        )
        total = np.zeros(population.shape[0])
        for dense in dense_targets:
            total += kernels.bloom_distance_batch(codewords, dense, plain)
        return total / len(dense_targets)

    # Only rows feeding codewords are searched; remaining rows carry no
    # information through the transform and are reconstructed as zeros.
    return objective, BitStringSpec(n_bits=width * params.word_size)


def _make_objective(
    targets: Sequence[ProtectedTemplate],
    helper: HelperData,
    bounds: Tuple[float, float],
    bloom_measure: str,
) -> Tuple[Objective, GenomeSpec]:
    if not targets:
        raise EmptyTargets("attack needs at least one compromised template")
    if helper.scheme is Scheme.BIOHASHING:
        return _biohash_objective(targets, helper, bounds)
    return _bloom_objective(targets, helper, bloom_measure)


def fitness(
    genome: Genome,
    targets: Sequence[ProtectedTemplate],
    helper: HelperData,
    bloom_measure: str = "popnorm",
) -> float:
    """Mean transform-domain distance of one candidate to the targets.

    0 means the candidate's transform matches every target exactly.
    """
    objective, spec = _make_objective(
        targets, helper, _genome_bounds(genome), bloom_measure
    )
    if spec != genome.spec and not _spec_compatible(genome.spec, spec):
        raise IncompatibleGenome(f"genome {genome.spec} cannot attack {helper.scheme.value}")
    return float(objective(genome.values[None, :])[0])


def _genome_bounds(genome: Genome) -> Tuple[float, float]:
    if isinstance(genome.spec, RealVectorSpec):
        return genome.spec.lower, genome.spec.upper
    return (-1.0, 1.0)


def _spec_compatible(given: GenomeSpec, required: GenomeSpec) -> bool:
    if isinstance(required, RealVectorSpec):
        return isinstance(given, RealVectorSpec) and given.dim == required.dim
    return isinstance(given, BitStringSpec) and given.n_bits == required.n_bits


# ---------------------------------------------------------------------------
# Engine


def _pair_stream(seed: int, generation: int, pair: int) -> np.random.Generator:
    base = np.random.Philox(key=(seed << 64) | generation)
    return np.random.Generator(base.jumped(pair)) if pair else np.random.Generator(base)


def _init_population(spec: GenomeSpec, config: GaConfig) -> np.ndarray:
    rows = []
    for i in range(config.population_size):
        rng = _pair_stream(config.seed, 0, i)
        if isinstance(spec, BitStringSpec):
            rows.append(rng.integers(0, 2, size=spec.n_bits, dtype=np.uint8))
        else:
            rows.append(rng.uniform(spec.lower, spec.upper, size=spec.dim))
    return np.stack(rows)


def _tournament(fit: np.ndarray, rng: np.random.Generator, size: int = 3) -> int:
    candidates = rng.integers(0, fit.shape[0], size=size)
    return int(candidates[np.argmin(fit[candidates])])


def minimize(objective: Objective, spec: GenomeSpec, config: GaConfig) -> AttackResult:
    """Run the evolutionary loop against an arbitrary batch objective.

    ``objective`` maps a population array (one candidate per row) to a
    nonnegative distance per row.  ``run_attack`` wires in the
    transform-domain objectives; tests may pass any other one.
    """
    t0 = time.perf_counter()
    rate = config.resolved_mutation_rate(spec)
    population = _init_population(spec, config)
    fit = np.asarray(objective(population), dtype=np.float64)

    best_idx = int(np.argmin(fit))
    best_value = float(fit[best_idx])
    best_values = population[best_idx].copy()
    best_history = [best_value]
    log = [(0, best_value, float(fit.mean()))]

    stop_reason = None
    if best_value <= config.fitness_target:
        stop_reason = STOP_TARGET

    generation = 0
    while stop_reason is None and generation < config.max_generations:
        generation += 1
        elite_order = np.argsort(fit, kind="stable")[: config.elite_count]
        n_children = config.population_size - config.elite_count

        children = np.empty((n_children,) + population.shape[1:], population.dtype)
        slot = 0
        pair = 0
        while slot < n_children:
            rng = _pair_stream(config.seed, generation, pair)
            pair += 1
            p1 = _tournament(fit, rng)
            p2 = _tournament(fit, rng)
            if rng.random() < config.crossover_rate:
                c1, c2 = _crossover_values(population[p1], population[p2], spec, rng)
            else:
                c1, c2 = population[p1].copy(), population[p2].copy()
            children[slot] = _mutate_values(c1, spec, rate, config.mutation_scale, rng)
            slot += 1
            if slot < n_children:
                children[slot] = _mutate_values(c2, spec, rate, config.mutation_scale, rng)
                slot += 1

        child_fit = np.asarray(objective(children), dtype=np.float64)
        population = np.concatenate([population[elite_order], children])
        fit = np.concatenate([fit[elite_order], child_fit])

        gen_best = int(np.argmin(fit))
        if float(fit[gen_best]) < best_value:
            best_value = float(fit[gen_best])
            best_values = population[gen_best].copy()
        best_history.append(best_value)
        log.append((generation, best_value, float(fit.mean())))

        if best_value <= config.fitness_target:
            stop_reason = STOP_TARGET
        elif generation >= config.stall_generations:
            window = config.stall_generations
            improvement = best_history[-1 - window] - best_history[-1]
            if improvement / window < config.stall_tolerance:
                stop_reason = STOP_STALL

    if stop_reason is None:
        stop_reason = STOP_MAX_GENERATIONS

    return AttackResult(
        best_genome=Genome(spec, best_values),
        best_fitness=best_value,
        generations_run=generation,
        convergence_log=tuple(log),
        wall_time_seconds=time.perf_counter() - t0,
        stop_reason=stop_reason,
    )


def run_attack(
    targets: Sequence[ProtectedTemplate],
    helper: HelperData,
    config: GaConfig,
    bounds: Tuple[float, float] = (-1.0, 1.0),
    bloom_measure: str = "popnorm",
) -> AttackResult:
    """Search for a preimage of the given compromised template(s).

    With several targets the fitness is the mean distance over all of them;
    a single target reduces to the plain transform-domain distance.
    """
    objective, spec = _make_objective(targets, helper, bounds, bloom_measure)
    return minimize(objective, spec, config)


# ---------------------------------------------------------------------------
# Preimage reconstruction in the original template space


def preimage_feature(genome: Genome) -> FeatureVector:
    if not isinstance(genome.spec, RealVectorSpec):
        raise IncompatibleGenome("only real-vector genomes map to feature vectors")
    return FeatureVector(values=genome.values.copy())


def preimage_template(genome: Genome, helper: HelperData) -> BitTemplate:
    """Rebuild a W x H template from a Bloom-filter attack genome.

    Rows outside the codeword window do not influence the transform and are
    filled with zeros.
    """
    if helper.scheme is not Scheme.BLOOM_FILTER or helper.bloom is None:
        raise IncompatibleGenome("helper data is not a Bloom-filter token")
    params = helper.bloom
    if not isinstance(genome.spec, BitStringSpec) or genome.spec.n_bits != (
        params.width * params.word_size
    ):
        raise IncompatibleGenome(
            f"expected a bit genome of {params.width * params.word_size} bits"
        )
    matrix = np.zeros((params.height, params.width), dtype=np.uint8)
    window = genome.values.reshape(params.width, params.word_size).T
    matrix[params.row_offset : params.row_offset + params.word_size, :] = window
    return BitTemplate.from_matrix(matrix)
