"""Equivalent-series evaluation and the dyadic-block convergence verdict.

For an arc family the four component criteria reduce to explicit series in k:

    C1 (martingale-coboundary):  theta_k * rho_k * sqrt(lag_k)
    C2 (dedecker-rio):           theta_k^2 * rho_k * sqrt(lag_k)
    C4 (hannan):                 theta_k * sqrt(rho_k)
    L2 (square integrability):   theta_k^2 * rho_k

and the partial-sum criterion C3 (maxwell-woodroofe) to the n-indexed series

    term_n = n^(-3/2) * sqrt( sum_k theta_k^2 * min(n, lag_k) * rho_k ).

Every truncated series has a finite sum, so "converges" can only mean "the
terms decay like a convergent series over the computed range".  The verdict
engine classifies the growth pattern of sums over dyadic index blocks
(2^j, 2^(j+1)]; the policy constants are explicit configuration, not
mathematics, and every verdict carries a note saying so.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .families import ParameterFamily

C1 = "C1"
C2 = "C2"
C3 = "C3"
C4 = "C4"
L2 = "L2"

CRITERION_NAMES = {
    C1: "gordin",
    C2: "dedecker-rio",
    C3: "maxwell-woodroofe",
    C4: "hannan",
    L2: "square-integrable",
}

K_INDEXED = (C1, C2, C4, L2)


class Verdict(str, enum.Enum):
    CONVERGENT = "Convergent"
    DIVERGENT = "Divergent"
    INCONCLUSIVE = "Inconclusive"

    def __str__(self) -> str:  # plain value in reports
        return self.value


@dataclass(frozen=True)
class VerdictPolicy:
    """Constants of the dyadic-block growth classifier.

    convergent: geometric mean of the last ``window`` block ratios is at most
    ``ratio_convergent``.  divergent: that mean is at least ``ratio_divergent``
    (slow decay or growth), or the last ``window`` blocks all sit above
    ``floor_fraction`` times the first nonzero block (no decay at all).  A
    series whose computed terms end in at least ``zero_tail_blocks`` all-zero
    blocks is convergent by finite support.  Fewer than ``min_blocks`` usable
    blocks yields Inconclusive.
    """

    ratio_convergent: float = 0.8
    ratio_divergent: float = 0.9
    floor_fraction: float = 0.5
    window: int = 4
    min_blocks: int = 6
    zero_tail_blocks: int = 2

    def as_dict(self) -> dict[str, float]:
        return {
            "ratio_convergent": self.ratio_convergent,
            "ratio_divergent": self.ratio_divergent,
            "floor_fraction": self.floor_fraction,
            "window": self.window,
            "min_blocks": self.min_blocks,
            "zero_tail_blocks": self.zero_tail_blocks,
        }


DEFAULT_POLICY = VerdictPolicy()


def kahan_cumsum(values) -> np.ndarray:
    """Compensated running sums (error-corrected accumulation)."""
    out = np.empty(len(values), dtype=float)
    s = 0.0
    c = 0.0
    for i, v in enumerate(values):
        y = float(v) - c
        t = s + y
        c = (t - s) - y
        s = t
        out[i] = s
    return out


def block_boundaries(n_terms: int) -> list[int]:
    """0-based boundaries [0, 1, 2, 4, 8, ...] of complete dyadic blocks.

    With 1-based term index k, block j >= -1 covers k in (2^j, 2^(j+1)]; only
    blocks fully inside the computed range are kept.
    """
    bounds = [0]
    nxt = 1
    while nxt <= n_terms:
        bounds.append(nxt)
        nxt *= 2
    return bounds


def dyadic_block_sums(terms) -> np.ndarray:
    """Sums of the terms over complete dyadic index blocks."""
    arr = np.asarray(terms, dtype=float)
    bounds = block_boundaries(len(arr))
    return np.array(
        [math.fsum(arr[a:b]) for a, b in zip(bounds, bounds[1:])], dtype=float
    )


def verdict_of_blocks(
    blocks, policy: VerdictPolicy = DEFAULT_POLICY
) -> tuple[Verdict, str]:
    """Classify a sequence of nonnegative dyadic block sums."""
    b = np.asarray(blocks, dtype=float)
    if np.any(b < 0) or not np.all(np.isfinite(b)):
        raise ValueError("block sums must be finite and nonnegative")
    nonzero = np.flatnonzero(b > 0.0)
    if len(nonzero) == 0:
        return Verdict.CONVERGENT, "all blocks are zero"
    first, last = int(nonzero[0]), int(nonzero[-1])
    zero_tail = len(b) - 1 - last
    if zero_tail >= policy.zero_tail_blocks:
        return (
            Verdict.CONVERGENT,
            f"terms vanish beyond block {last}: finite support in the computed range",
        )
    retained = b[first : last + 1]
    if len(retained) < policy.min_blocks:
        return (
            Verdict.INCONCLUSIVE,
            f"only {len(retained)} usable dyadic blocks "
            f"(need {policy.min_blocks}); extend the range",
        )
    w = policy.window
    tail = retained[-(w + 1) :]
    # geometric mean of the last `window` consecutive block ratios
    gm = (tail[-1] / tail[0]) ** (1.0 / w) if tail[0] > 0 else math.inf
    if gm <= policy.ratio_convergent:
        return (
            Verdict.CONVERGENT,
            f"mean dyadic block ratio {gm:.3f} <= {policy.ratio_convergent}",
        )
    floor = policy.floor_fraction * retained[0]
    if np.all(retained[-w:] >= floor):
        return (
            Verdict.DIVERGENT,
            f"last {w} blocks stay above {policy.floor_fraction} x first block",
        )
    if gm >= policy.ratio_divergent:
        return (
            Verdict.DIVERGENT,
            f"mean dyadic block ratio {gm:.3f} >= {policy.ratio_divergent}",
        )
    return (
        Verdict.INCONCLUSIVE,
        f"mean dyadic block ratio {gm:.3f} falls between the policy thresholds",
    )


def verdict(terms, policy: VerdictPolicy = DEFAULT_POLICY) -> Verdict:
    """Growth-pattern verdict for a nonnegative term sequence."""
    v, _ = verdict_of_blocks(dyadic_block_sums(terms), policy)
    return v


@dataclass(frozen=True)
class SeriesDiagnostic:
    """Terms, running sums, dyadic blocks, and the policy verdict of one series."""

    criterion_id: str
    label: str
    terms: tuple[float, ...]
    partial_sums: tuple[float, ...]
    dyadic_blocks: tuple[float, ...]
    verdict: Verdict
    note: str
    policy: VerdictPolicy = field(default=DEFAULT_POLICY)

    @property
    def total(self) -> float:
        return self.partial_sums[-1] if self.partial_sums else 0.0


def _diagnose(criterion_id: str, label: str, terms, policy: VerdictPolicy) -> SeriesDiagnostic:
    arr = np.asarray(terms, dtype=float)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError("series terms must be finite and nonnegative")
    blocks = dyadic_block_sums(arr)
    v, note = verdict_of_blocks(blocks, policy)
    return SeriesDiagnostic(
        criterion_id=criterion_id,
        label=label,
        terms=tuple(arr.tolist()),
        partial_sums=tuple(kahan_cumsum(arr).tolist()),
        dyadic_blocks=tuple(blocks.tolist()),
        verdict=v,
        note=note,
        policy=policy,
    )


def series_terms(
    criterion: str,
    family: ParameterFamily,
    policy: VerdictPolicy = DEFAULT_POLICY,
) -> SeriesDiagnostic:
    """Evaluate the k-indexed series of one criterion for an arc family."""
    if family.is_linear:
        raise TypeError("k-indexed series are defined for arc families only")
    if criterion not in K_INDEXED:
        raise ValueError(f"criterion must be one of {K_INDEXED}, got {criterion!r}")
    terms = []
    for th, r, lag in zip(family.theta, family.rho, family.lags):
        root = math.sqrt(float(lag))
        if criterion == C1:
            terms.append(th * r * root)
        elif criterion == C2:
            terms.append(th * th * r * root)
        elif criterion == C4:
            terms.append(th * math.sqrt(r))
        else:  # L2
            terms.append(th * th * r)
    return _diagnose(criterion, family.label, terms, policy)


def mw_series_terms(
    family: ParameterFamily,
    n_max: int,
    policy: VerdictPolicy = DEFAULT_POLICY,
) -> SeriesDiagnostic:
    """Evaluate the n-indexed partial-sum series (criterion C3) up to n_max."""
    if family.is_linear:
        raise TypeError("the C3 series is defined for arc families only")
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    n = np.arange(1, n_max + 1, dtype=float)
    inner = np.zeros(n_max, dtype=float)
    for th, r, lag in zip(family.theta, family.rho, family.lags):
        # min(n, lag) with lag clamped first: lag may far exceed any int64
        clamped = float(min(lag, n_max))
        inner += (th * th * r) * np.minimum(n, clamped)
    terms = n**-1.5 * np.sqrt(inner)
    return _diagnose(C3, family.label, terms, policy)


class NotSquareIntegrableError(ValueError):
    """The L2 series diverges: the constructed function leaves L2 as K grows."""


def classification_table(
    family: ParameterFamily,
    n_max: int,
    policy: VerdictPolicy = DEFAULT_POLICY,
) -> dict[str, SeriesDiagnostic]:
    """Verdicts of all four criteria through their equivalent series.

    The L2 series is evaluated first as a gate: a Divergent L2 verdict means
    the function is not square integrable in the untruncated limit and the
    classification is refused.
    """
    gate = series_terms(L2, family, policy)
    if gate.verdict is Verdict.DIVERGENT:
        raise NotSquareIntegrableError(
            f"family {family.label!r}: the L2 series grows like a divergent "
            "series, refusing to classify"
        )
    table = {c: series_terms(c, family, policy) for c in (C1, C2, C4)}
    table[C3] = mw_series_terms(family, n_max, policy)
    table[L2] = gate
    return {c: table[c] for c in (C1, C2, C3, C4, L2)}
