"""Differential-privacy parameter derivation and the truncated noise distribution.

The protocol spends its privacy budget on two independent paths:

* the *revealed* path (values whose submission count meets the threshold),
  protected by Bernoulli client sampling plus threshold pruning, and
* the *unrevealed* path (the multiplicity histogram of sub-threshold tags),
  protected by injected dummy-data groups.

Given a budget (eps_revealed, delta_revealed, eps_unrevealed, delta_unrevealed)
and a sampling-rate knob ``alpha``, the derived mechanism parameters are

    sampling_rate = alpha * (1 - exp(-eps_revealed))
    threshold     = ceil( ln(1/delta_revealed) / C_alpha ),
                    C_alpha = ln(1/alpha) - 1/(1+alpha)
    tsdlap_scale  = SENSITIVITY / eps_unrevealed
    tsdlap_shift  = ceil( SENSITIVITY + tsdlap_scale * ln(2/delta_unrevealed) )

The overall guarantee is reported as the max over the two paths, never the sum.

Removing one client's record moves one unit of mass between two adjacent
entries of the sub-threshold multiplicity histogram, so the sensitivity of
that histogram is 2.

The dummy-group counts are drawn from the truncated shifted discrete Laplace
distribution on {0, ..., 2*shift}:

    pmf(c) = exp(-|c - shift| / scale) / A,
    A = 1 + 2 * sum_{c=1..shift} exp(-c / scale).

``tsdlap_shift`` accepts an explicit override: the ceiling formula above uses
the natural logarithm and yields 41 for (eps=1, delta=1e-8), while deployments
may prefer a hand-picked smaller shift (the reference experiments in this repo
use 15).  Overrides are recorded so reports can distinguish derived from
pinned values.
"""

from __future__ import annotations

import bisect
import math
import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Optional

# L1 sensitivity of the sub-threshold multiplicity histogram under removal of
# one record (two adjacent entries change by one each).
SENSITIVITY = 2


class ParameterError(ValueError):
    """A privacy parameter is outside its valid domain."""


@dataclass(frozen=True)
class DpBudget:
    """Privacy budget split across the revealed and unrevealed paths.

    Requires eps_unrevealed <= eps_revealed and delta_unrevealed <=
    delta_revealed so the max-reported overall guarantee is driven by the
    revealed path.
    """

    eps_revealed: float
    delta_revealed: float
    eps_unrevealed: float
    delta_unrevealed: float
    alpha: float

    def __post_init__(self) -> None:
        for name in ("eps_revealed", "eps_unrevealed"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        for name in ("delta_revealed", "delta_unrevealed"):
            d = getattr(self, name)
            if not 0 < d < 1:
                raise ParameterError(f"{name} must lie in (0, 1)")
        if not 0 < self.alpha <= 1:
            raise ParameterError("alpha must lie in (0, 1]")
        if self.eps_unrevealed > self.eps_revealed:
            raise ParameterError("eps_unrevealed must not exceed eps_revealed")
        if self.delta_unrevealed > self.delta_revealed:
            raise ParameterError("delta_unrevealed must not exceed delta_revealed")

    @property
    def overall_epsilon(self) -> float:
        return max(self.eps_unrevealed, self.eps_revealed)

    @property
    def overall_delta(self) -> float:
        return max(self.delta_unrevealed, self.delta_revealed)


def sampling_rate(eps_revealed: float, alpha: float) -> float:
    """Bernoulli participation probability for the revealed-path guarantee."""
    if eps_revealed <= 0:
        raise ParameterError("eps_revealed must be positive")
    if not 0 < alpha <= 1:
        raise ParameterError("alpha must lie in (0, 1]")
    return alpha * (1.0 - math.exp(-eps_revealed))


def alpha_constant(alpha: float) -> float:
    """Rate constant C_alpha = ln(1/alpha) - 1/(1+alpha) used by the threshold."""
    if not 0 < alpha <= 1:
        raise ParameterError("alpha must lie in (0, 1]")
    return math.log(1.0 / alpha) - 1.0 / (1.0 + alpha)


def derive_threshold(delta_revealed: float, alpha: float) -> int:
    """Smallest integer threshold meeting the delta bound for this alpha.

    The real-valued formula ln(1/delta)/C_alpha is rounded up; a larger
    threshold only suppresses more, so the ceiling is privacy-conservative.
    """
    if not 0 < delta_revealed < 1:
        raise ParameterError("delta_revealed must lie in (0, 1)")
    c = alpha_constant(alpha)
    if c <= 0:
        # ln(1/a) = 1/(1+a) around a ~ 0.52; beyond that the threshold
        # formula has no positive solution.
        raise ParameterError(
            f"alpha={alpha} gives non-positive rate constant {c}; "
            "choose a smaller alpha or override the threshold"
        )
    return math.ceil(math.log(1.0 / delta_revealed) / c)


def derive_noise_scale(eps_unrevealed: float) -> float:
    if eps_unrevealed <= 0:
        raise ParameterError("eps_unrevealed must be positive")
    return SENSITIVITY / eps_unrevealed


def derive_noise_shift(eps_unrevealed: float, delta_unrevealed: float) -> int:
    if not 0 < delta_unrevealed < 1:
        raise ParameterError("delta_unrevealed must lie in (0, 1)")
    scale = derive_noise_scale(eps_unrevealed)
    return math.ceil(SENSITIVITY + scale * math.log(2.0 / delta_unrevealed))


@dataclass(frozen=True)
class DpParams:
    """Concrete mechanism parameters, with provenance of any overrides."""

    budget: DpBudget
    sampling_rate: float
    threshold: int
    tsdlap_scale: float
    tsdlap_shift: int
    overridden: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        # Derived rates are < 1 by construction; 1.0 is reachable only via an
        # explicit override (the lossless regime used in tests).
        if not 0 < self.sampling_rate <= 1:
            raise ParameterError("sampling_rate must lie in (0, 1]")
        if not (isinstance(self.threshold, int) and self.threshold >= 1):
            raise ParameterError("threshold must be a positive integer")
        if self.tsdlap_scale <= 0:
            raise ParameterError("tsdlap_scale must be positive")
        if not (isinstance(self.tsdlap_shift, int) and self.tsdlap_shift >= 0):
            raise ParameterError("tsdlap_shift must be a non-negative integer")

    @property
    def overall_epsilon(self) -> float:
        return self.budget.overall_epsilon

    @property
    def overall_delta(self) -> float:
        return self.budget.overall_delta


_DERIVABLE = ("sampling_rate", "threshold", "tsdlap_scale", "tsdlap_shift")


def derive_params(
    budget: DpBudget, overrides: Optional[Mapping[str, float]] = None
) -> DpParams:
    """Derive all mechanism parameters from a budget.

    ``overrides`` may pin any of sampling_rate, threshold, tsdlap_scale,
    tsdlap_shift to an explicit value; pinned fields are recorded in
    ``DpParams.overridden``.
    """
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(_DERIVABLE)
    if unknown:
        raise ParameterError(f"unknown override fields: {sorted(unknown)}")

    values: dict[str, float | int] = {}
    if "sampling_rate" in overrides:
        values["sampling_rate"] = float(overrides["sampling_rate"])
    else:
        values["sampling_rate"] = sampling_rate(budget.eps_revealed, budget.alpha)
    if "threshold" in overrides:
        values["threshold"] = int(overrides["threshold"])
    else:
        values["threshold"] = derive_threshold(budget.delta_revealed, budget.alpha)
    if "tsdlap_scale" in overrides:
        values["tsdlap_scale"] = float(overrides["tsdlap_scale"])
    else:
        values["tsdlap_scale"] = derive_noise_scale(budget.eps_unrevealed)
    if "tsdlap_shift" in overrides:
        values["tsdlap_shift"] = int(overrides["tsdlap_shift"])
    else:
        values["tsdlap_shift"] = derive_noise_shift(
            budget.eps_unrevealed, budget.delta_unrevealed
        )

    return DpParams(
        budget=budget,
        sampling_rate=values["sampling_rate"],
        threshold=values["threshold"],
        tsdlap_scale=values["tsdlap_scale"],
        tsdlap_shift=values["tsdlap_shift"],
        overridden=tuple(sorted(overrides)),
    )


@lru_cache(maxsize=64)
def _tsdlap_table(scale: float, shift: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """(pmf, cdf) over the support {0, ..., 2*shift}."""
    weights = [math.exp(-abs(c - shift) / scale) for c in range(2 * shift + 1)]
    total = 1.0 + 2.0 * sum(math.exp(-c / scale) for c in range(1, shift + 1))
    pmf = tuple(w / total for w in weights)
    cdf = []
    acc = 0.0
    for p in pmf:
        acc += p
        cdf.append(acc)
    cdf[-1] = 1.0
    return pmf, tuple(cdf)


def tsdlap_pmf(c: int, scale: float, shift: int) -> float:
    """Probability of count ``c`` under the truncated shifted discrete Laplace."""
    if scale <= 0:
        raise ParameterError("scale must be positive")
    if shift < 0:
        raise ParameterError("shift must be non-negative")
    if not 0 <= c <= 2 * shift:
        return 0.0
    return _tsdlap_table(scale, shift)[0][c]


def tsdlap_sample(rng: random.Random, scale: float, shift: int) -> int:
    """Draw one count via inverse CDF over the finite support.

    Exact (no rejection) and deterministic given the rng state; the caller
    owns exclusive access to ``rng``.
    """
    if scale <= 0:
        raise ParameterError("scale must be positive")
    if shift < 0:
        raise ParameterError("shift must be non-negative")
    _, cdf = _tsdlap_table(scale, shift)
    return bisect.bisect_right(cdf, rng.random())


# --- flat key/value config (consumed by the CLI and daemons) ---------------

_CONFIG_FIELDS = (
    ("eps_revealed", float),
    ("delta_revealed", float),
    ("eps_unrevealed", float),
    ("delta_unrevealed", float),
    ("alpha", float),
    ("sampling_rate", float),
    ("threshold", int),
    ("tsdlap_scale", float),
    ("tsdlap_shift", int),
)


def params_to_config(params: DpParams) -> str:
    """Serialize to ``key = value`` lines, recording which fields were pinned."""
    b = params.budget
    lines = [
        f"eps_revealed = {b.eps_revealed!r}",
        f"delta_revealed = {b.delta_revealed!r}",
        f"eps_unrevealed = {b.eps_unrevealed!r}",
        f"delta_unrevealed = {b.delta_unrevealed!r}",
        f"alpha = {b.alpha!r}",
        f"sampling_rate = {params.sampling_rate!r}",
        f"threshold = {params.threshold!r}",
        f"tsdlap_scale = {params.tsdlap_scale!r}",
        f"tsdlap_shift = {params.tsdlap_shift!r}",
        f"overridden = {','.join(params.overridden)}",
    ]
    return "\n".join(lines) + "\n"


def params_from_config(text: str) -> DpParams:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParameterError(f"config line {lineno} is not 'key = value'")
        key, _, value = line.partition("=")
        raw[key.strip()] = value.strip()

    missing = [name for name, _ in _CONFIG_FIELDS if name not in raw]
    if missing:
        raise ParameterError(f"config missing fields: {missing}")

    typed = {name: conv(raw[name]) for name, conv in _CONFIG_FIELDS}
    budget = DpBudget(
        eps_revealed=typed["eps_revealed"],
        delta_revealed=typed["delta_revealed"],
        eps_unrevealed=typed["eps_unrevealed"],
        delta_unrevealed=typed["delta_unrevealed"],
        alpha=typed["alpha"],
    )
    overridden = tuple(x for x in raw.get("overridden", "").split(",") if x)
    return DpParams(
        budget=budget,
        sampling_rate=typed["sampling_rate"],
        threshold=typed["threshold"],
        tsdlap_scale=typed["tsdlap_scale"],
        tsdlap_shift=typed["tsdlap_shift"],
        overridden=overridden,
    )
