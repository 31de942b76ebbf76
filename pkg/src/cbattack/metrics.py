"""Score-scenario assembly and attack-resistance metrics.

Three score populations describe an attacked system: genuine (same subject,
same token), imposter (different subjects, same token) and mated-attack
imposter (a recovered preimage matched against its victim under a second
token).  From these we derive the operating threshold theta at the equal
error rate, the false-accept rate of any population at that threshold
(FAR@ET), and the overlap area of Gaussian fits to the imposter and
mated-attack populations (OL): 100% overlap means the attack gained
nothing, near 0% means recovered preimages sail past the threshold.

Conventions pinned here: "accept" means score >= theta; EER and all rates
are percentages in [0, 100]; Gaussian fits use the sample mean and the
n-1 standard deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import norm

from cbattack import biohashing, bloomfilter
from cbattack.errors import (
    DegenerateDistribution,
    EmptyScores,
    InvalidParams,
    MeanOrderViolation,
    MissingAttackResult,
)
from cbattack.templates import (
    BitTemplate,
    FeatureVector,
    HelperData,
    ProtectedTemplate,
    Scheme,
    Similarity,
)

# ---------------------------------------------------------------------------
# Score containers


def _score_array(scores, name: str, allow_empty: bool) -> np.ndarray:
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidParams(f"{name} scores must be one-dimensional")
    if not allow_empty and arr.size == 0:
        raise EmptyScores(f"{name} scores are empty")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0 or not np.all(np.isfinite(arr))):
        raise InvalidParams(f"{name} scores must be finite similarities in [0, 1]")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ScoreSet:
    """Labeled similarity scores; mated_sa_imposter may be empty pre-attack."""

    genuine: np.ndarray
    imposter: np.ndarray
    mated_sa_imposter: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self) -> None:
        object.__setattr__(self, "genuine", _score_array(self.genuine, "genuine", True))
        object.__setattr__(self, "imposter", _score_array(self.imposter, "imposter", True))
        object.__setattr__(
            self,
            "mated_sa_imposter",
            _score_array(self.mated_sa_imposter, "mated-SA-imposter", True),
        )


@dataclass(frozen=True)
class GaussianFit:
    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise DegenerateDistribution(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class EvaluationResult:
    """One row of the resistance evaluation (all rates in percent)."""

    theta: Similarity
    eer: float
    far_at_et_normal: float
    far_at_et_attack: float
    ol: float
    intersection_c: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta <= 1.0:
            raise InvalidParams("theta must be in [0, 1]")
        for name in ("eer", "far_at_et_normal", "far_at_et_attack", "ol"):
            value = getattr(self, name)
            if not 0.0 <= value <= 100.0:
                raise InvalidParams(f"{name} must be a percentage in [0, 100]")


# ---------------------------------------------------------------------------
# EER threshold and FAR


def compute_eer_threshold(genuine, imposter) -> Tuple[float, float]:
    """Threshold at the equal error rate and the EER itself (percent).

    Sweeps the merged score values as candidate thresholds with
    FAR(t) = fraction of imposter scores >= t and FRR(t) = fraction of
    genuine scores < t, then linearly interpolates between the two
    candidates where FAR - FRR changes sign; the EER is the midpoint
    (FAR + FRR) / 2 at the returned threshold.
    """
    gen = _score_array(genuine, "genuine", False)
    imp = _score_array(imposter, "imposter", False)

    cands = np.unique(np.concatenate([gen, imp]))
    gen_sorted = np.sort(gen)
    imp_sorted = np.sort(imp)
    far = 1.0 - np.searchsorted(imp_sorted, cands, side="left") / imp.size
    frr = np.searchsorted(gen_sorted, cands, side="left") / gen.size
    diff = far - frr  # nonincreasing in the threshold

    below = np.nonzero(diff <= 0.0)[0]
    if below.size == 0:
        j = int(np.argmin(np.abs(diff)))
        theta, eer = cands[j], (far[j] + frr[j]) / 2.0
    else:
        j = int(below[0])
        if j == 0:
            theta, eer = cands[0], (far[0] + frr[0]) / 2.0
        else:
            t = diff[j - 1] / (diff[j - 1] - diff[j])
            theta = cands[j - 1] + t * (cands[j] - cands[j - 1])
            far_i = far[j - 1] + t * (far[j] - far[j - 1])
            frr_i = frr[j - 1] + t * (frr[j] - frr[j - 1])
            eer = (far_i + frr_i) / 2.0
    return float(theta), float(eer * 100.0)


def far_at_threshold(scores, theta: float) -> float:
    """Percentage of scores accepted at the threshold (score >= theta)."""
    arr = _score_array(scores, "input", False)
    return float(100.0 * np.mean(arr >= theta))


# ---------------------------------------------------------------------------
# Gaussian overlap


def fit_gaussian(sample) -> GaussianFit:
    arr = np.asarray(sample, dtype=np.float64)
    if arr.size < 2:
        raise DegenerateDistribution("need at least two values to fit a Gaussian")
    sigma = float(arr.std(ddof=1))
    if sigma == 0.0:
        raise DegenerateDistribution("sample has zero variance")
    return GaussianFit(mu=float(arr.mean()), sigma=sigma)


def _density_intersection(f1: GaussianFit, f2: GaussianFit) -> float:
    """Crossing point of the two densities between the means."""
    if math.isclose(f1.sigma, f2.sigma, rel_tol=1e-9):
        return (f1.mu + f2.mu) / 2.0
    a = 1.0 / (2.0 * f1.sigma**2) - 1.0 / (2.0 * f2.sigma**2)
    b = f2.mu / f2.sigma**2 - f1.mu / f1.sigma**2
    c0 = (
        f1.mu**2 / (2.0 * f1.sigma**2)
        - f2.mu**2 / (2.0 * f2.sigma**2)
        - math.log(f2.sigma / f1.sigma)
    )
    roots = np.roots([a, b, c0])
    inside = [
        float(r.real)
        for r in roots
        if abs(r.imag) < 1e-12 and f1.mu < r.real < f2.mu
    ]
    if inside:
        midpoint = (f1.mu + f2.mu) / 2.0
        return min(inside, key=lambda r: abs(r - midpoint))
    # No quadratic root between the means (extreme variance ratios): take
    # the point where the densities are closest instead.
    result = minimize_scalar(
        lambda x: abs(norm.pdf(x, f1.mu, f1.sigma) - norm.pdf(x, f2.mu, f2.sigma)),
        bounds=(f1.mu, f2.mu),
        method="bounded",
    )
    return float(result.x)


def gaussian_overlap(f1: GaussianFit, f2: GaussianFit) -> Tuple[float, float]:
    """Overlap percentage P(S1 > c) + P(S2 < c) and the crossing point c.

    ``f1`` must sit left of ``f2`` (imposter left of mated-attack scores);
    numerically identical fits are the total-overlap limiting case.
    """
    if math.isclose(f1.mu, f2.mu, rel_tol=1e-12, abs_tol=1e-12) and math.isclose(
        f1.sigma, f2.sigma, rel_tol=1e-12
    ):
        return 100.0, f1.mu
    if f1.mu >= f2.mu:
        raise MeanOrderViolation(
            f"imposter mean {f1.mu} must lie below mated-attack mean {f2.mu}"
        )
    c = _density_intersection(f1, f2)
    ol = norm.sf(c, f1.mu, f1.sigma) + norm.cdf(c, f2.mu, f2.sigma)
    return float(np.clip(ol * 100.0, 0.0, 100.0)), c


def overlap_area(s1, s2) -> Tuple[float, float]:
    """Gaussian-overlap percentage of two score samples plus the crossing.

    ``s1`` is the imposter sample, ``s2`` the mated-attack sample; the fits
    must come out ordered (mu1 < mu2) or MeanOrderViolation is raised -
    reported rather than swapped, since the order encodes that the attack
    shifted scores upward.
    """
    return gaussian_overlap(fit_gaussian(s1), fit_gaussian(s2))


def histogram_overlap(s1, s2, bins: int = 32) -> float:
    """Nonparametric overlap estimate (percent); diagnostic companion to
    the Gaussian OL so the normality assumption's error is visible."""
    a = np.asarray(s1, dtype=np.float64)
    b = np.asarray(s2, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptyScores("histogram overlap needs nonempty samples")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if lo == hi:
        return 100.0
    edges = np.linspace(lo, hi, bins + 1)
    h1, _ = np.histogram(a, bins=edges, density=True)
    h2, _ = np.histogram(b, bins=edges, density=True)
    width = edges[1] - edges[0]
    return float(100.0 * np.minimum(h1, h2).sum() * width)


# ---------------------------------------------------------------------------
# Score assembly over a dataset


def _transform(item, helper: HelperData) -> ProtectedTemplate:
    if helper.scheme is Scheme.BIOHASHING:
        if not isinstance(item, FeatureVector):
            raise InvalidParams("BioHashing needs FeatureVector samples")
        return biohashing.biohash(item, helper)
    if not isinstance(item, BitTemplate):
        raise InvalidParams("Bloom-filter needs BitTemplate samples")
    return bloomfilter.bloom_transform(item, helper)


def _match(a: ProtectedTemplate, b: ProtectedTemplate, bloom_measure: str) -> Similarity:
    if a.kind.value == "biohash_code":
        return biohashing.match_biohash(a, b)
    return bloomfilter.match_bloom(a, b, measure=bloom_measure)


def assemble_scores(
    dataset,
    helper_enroll: HelperData,
    helper_target: HelperData,
    attack_results: Optional[Mapping[int, Union[FeatureVector, BitTemplate]]] = None,
    *,
    reference_sample: int = 0,
    bloom_measure: str = "popnorm",
) -> ScoreSet:
    """Build the three score populations under the target system's token.

    Genuine scores are all same-subject sample pairs and imposter scores all
    cross-subject pairs, both transformed with ``helper_target`` (stolen
    token: one helper datum per system).  ``attack_results`` maps subject
    index to the preimage recovered from the ``helper_enroll`` system; each
    preimage is transformed under ``helper_target`` and matched against its
    subject's ``reference_sample`` to form the mated-attack scores.
    """
    if helper_enroll.scheme is not helper_target.scheme:
        raise InvalidParams("enrollment and target systems use different schemes")
    subjects = dataset.subjects
    samples = dataset.samples_per_subject
    if not 0 <= reference_sample < samples:
        raise InvalidParams(f"reference_sample must be in [0, {samples - 1}]")

    protected = [
        [_transform(dataset.item(s, j), helper_target) for j in range(samples)]
        for s in range(subjects)
    ]

    genuine = []
    imposter = []
    for s in range(subjects):
        for j in range(samples):
            for k in range(j + 1, samples):
                genuine.append(_match(protected[s][j], protected[s][k], bloom_measure))
    for s in range(subjects):
        for s2 in range(s + 1, subjects):
            for j in range(samples):
                for k in range(samples):
                    imposter.append(
                        _match(protected[s][j], protected[s2][k], bloom_measure)
                    )

    mated = []
    if attack_results is not None:
        for s in range(subjects):
            if s not in attack_results:
                raise MissingAttackResult(f"no attack result for subject {s}")
            preimage = _transform(attack_results[s], helper_target)
            mated.append(
                _match(preimage, protected[s][reference_sample], bloom_measure)
            )

    return ScoreSet(
        genuine=np.asarray(genuine),
        imposter=np.asarray(imposter),
        mated_sa_imposter=np.asarray(mated),
    )
