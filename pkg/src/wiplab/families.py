"""Parameter families for the arc-lag construction, with presets and validation.

A family holds the sequences (theta_k, rho_k, lag_k, epsilon_k), k = 1..K,
defining the bounded function

    f = sum_{k<=K} theta_k * e_{-lag_k} * 1{arc_k},

where ``e_i`` are iid fair +-1 coordinates and ``arc_k`` are disjoint arcs of
normalized measure in [rho_k/2, rho_k] that move by at most epsilon_k (in
symmetric-difference measure) under up to lag_k applications of the dynamics.

The standing assumptions are: theta_k >= 0, rho_k in (0,1) with sum(rho) < 1,
lags strictly increasing, epsilon_k in (0,1) with sum(theta*lag*sqrt(epsilon))
finite (trivially true at finite K; the computed value is reported so that the
growth across K can be inspected).

A "linear" family instead carries a coefficient sequence (a_i) for the moving
average f = sum_{i>=1} a_i * xi_{-i} driven by iid +-1 innovations; it bypasses
the arc machinery entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

PRESET_CE1 = "ce1"
PRESET_CE2 = "ce2"
PRESET_LINEAR = "linear"
PRESETS = (PRESET_CE1, PRESET_CE2, PRESET_LINEAR)

# ce2 lags grow like 2**(4k); past K = 40 the amplitudes theta_k ~ 2**k/k^1.5
# leave the comfortably-representable range, so the preset is capped.
CE2_MAX_K = 40


@dataclass(frozen=True)
class ParameterFamily:
    """Immutable bundle of defining sequences, truncated at level K.

    For arc families the tuples theta/rho/lags/epsilon all have length K.
    For linear families only ``coeffs`` (length K) is populated.
    """

    label: str
    K: int
    theta: tuple[float, ...] = ()
    rho: tuple[float, ...] = ()
    lags: tuple[int, ...] = ()
    epsilon: tuple[float, ...] = ()
    coeffs: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.is_linear:
            if len(self.coeffs) != self.K:
                raise ValueError("linear family needs exactly K coefficients")
            if self.theta or self.rho or self.lags or self.epsilon:
                raise ValueError("linear family must not carry arc sequences")
            return
        for name in ("theta", "rho", "lags"):
            seq = getattr(self, name)
            if len(seq) != self.K:
                raise ValueError(f"{name} must have length K={self.K}, got {len(seq)}")
        if self.epsilon and len(self.epsilon) != self.K:
            raise ValueError("epsilon must be empty or of length K")

    @property
    def is_linear(self) -> bool:
        return self.coeffs is not None

    @property
    def max_lag(self) -> int:
        return self.lags[-1] if self.lags else 0


def make_preset(preset: str, K: int) -> ParameterFamily:
    """Build one of the built-in families at truncation level K.

    ce1:    theta_k = 2^k / k,       rho_k = 4^-k,  lag_k = k
    ce2:    theta_k = 2^k / k^(3/2), rho_k = 4^-k,  lag_k = 2^(4k)   (K <= 40)
    linear: coeffs a_i = i^(-3/2)

    ce1 satisfies the three conditional-expectation criteria but not the
    projection-norm criterion; ce2 is the mirror image.  epsilon is filled in
    by :func:`choose_epsilon` for the arc presets.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    ks = range(1, K + 1)
    if preset == PRESET_CE1:
        fam = ParameterFamily(
            label="ce1",
            K=K,
            theta=tuple(2.0**k / k for k in ks),
            rho=tuple(4.0**-k for k in ks),
            lags=tuple(ks),
        )
        return choose_epsilon(fam)
    if preset == PRESET_CE2:
        if K > CE2_MAX_K:
            raise ValueError(
                f"ce2 is capped at K={CE2_MAX_K}: lag_K = 2**(4K) = 2**{4 * K} "
                "is out of the supported range"
            )
        fam = ParameterFamily(
            label="ce2",
            K=K,
            theta=tuple(2.0**k / k**1.5 for k in ks),
            rho=tuple(4.0**-k for k in ks),
            lags=tuple(2 ** (4 * k) for k in ks),
        )
        return choose_epsilon(fam)
    if preset == PRESET_LINEAR:
        return ParameterFamily(
            label="linear", K=K, coeffs=tuple(float(i) ** -1.5 for i in ks)
        )
    raise ValueError(f"unknown preset {preset!r}; expected one of {PRESETS}")


def choose_epsilon(family: ParameterFamily) -> ParameterFamily:
    """Fill epsilon with the default rule eps_k = min(1/4, (k^2 theta_k lag_k)^-2).

    The rule forces theta_k * lag_k * sqrt(eps_k) <= 1/k^2, so the reported
    control sum is bounded by pi^2/6 at any K.  Zero-amplitude components get
    eps = 1/4.
    """
    if family.is_linear:
        raise TypeError("linear families have no epsilon sequence")
    eps = []
    for k, (th, lag) in enumerate(zip(family.theta, family.lags), start=1):
        scale = k * k * th * lag
        eps.append(0.25 if scale == 0.0 else min(0.25, scale**-2))
    return replace(family, epsilon=tuple(eps))


def with_epsilon(family: ParameterFamily, value: float) -> ParameterFamily:
    """Return a copy with a flat epsilon sequence (used by the path harness).

    Any epsilon in (0,1) is admissible at finite K; a loose value lets the
    rotation step be large enough for orbits to sweep the circle within a
    simulated horizon.
    """
    if family.is_linear:
        raise TypeError("linear families have no epsilon sequence")
    if not 0.0 < value < 1.0:
        raise ValueError(f"epsilon must lie in (0,1), got {value}")
    return replace(family, epsilon=(value,) * family.K)


@dataclass(frozen=True)
class ValidationCheck:
    name: str
    passed: bool
    value: float
    note: str = ""
    fatal: bool = True


@dataclass(frozen=True)
class ValidationReport:
    """Per-invariant pass/fail listing; callers treat any fatal failure as fatal."""

    label: str
    checks: tuple[ValidationCheck, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks if c.fatal)

    def failures(self) -> list[ValidationCheck]:
        return [c for c in self.checks if c.fatal and not c.passed]

    def lines(self) -> list[str]:
        return [
            f"{'PASS' if c.passed else 'FAIL'}  {c.name} = {c.value!r}  {c.note}".rstrip()
            for c in self.checks
        ]


def validate(family: ParameterFamily) -> ValidationReport:
    """Check every standing assumption and report each computed quantity.

    theta is required to be nonnegative (a strictly positive sequence is the
    interesting regime, but all-zero amplitudes are a useful degenerate case
    and are reported, not rejected).
    """
    checks: list[ValidationCheck] = []
    if family.is_linear:
        finite = all(math.isfinite(a) for a in family.coeffs)
        checks.append(
            ValidationCheck("coeffs-finite", finite, float(family.K))
        )
        return ValidationReport(family.label, tuple(checks))

    sum_rho = math.fsum(family.rho)
    checks.append(
        ValidationCheck(
            "sum-rho-below-one",
            sum_rho < 1.0,
            sum_rho,
            "sum of arc measure budgets must stay under the full circle",
        )
    )
    increasing = all(b > a for a, b in zip(family.lags, family.lags[1:]))
    checks.append(
        ValidationCheck("lags-strictly-increasing", increasing, float(family.max_lag))
    )
    checks.append(
        ValidationCheck(
            "theta-nonnegative",
            all(th >= 0.0 and math.isfinite(th) for th in family.theta),
            min(family.theta),
        )
    )
    checks.append(
        ValidationCheck(
            "theta-strictly-positive",
            all(th > 0.0 for th in family.theta),
            min(family.theta),
            "informational: zero amplitudes make the function degenerate",
            fatal=False,
        )
    )
    checks.append(
        ValidationCheck(
            "rho-in-unit-interval",
            all(0.0 < r < 1.0 for r in family.rho),
            min(family.rho),
        )
    )
    eps_ok = bool(family.epsilon) and all(0.0 < e < 1.0 for e in family.epsilon)
    checks.append(
        ValidationCheck(
            "epsilon-in-unit-interval",
            eps_ok,
            min(family.epsilon) if family.epsilon else float("nan"),
            "" if family.epsilon else "epsilon not set; call choose_epsilon",
        )
    )
    if family.epsilon:
        control = math.fsum(
            th * lag * math.sqrt(e)
            for th, lag, e in zip(family.theta, family.lags, family.epsilon)
        )
        checks.append(
            ValidationCheck(
                "invariance-control-sum",
                math.isfinite(control),
                control,
                "sum of theta_k * lag_k * sqrt(epsilon_k), reported for K-growth inspection",
            )
        )
    return ValidationReport(family.label, tuple(checks))


def is_valid(family: ParameterFamily) -> bool:
    """True when every fatal invariant holds (zero theta allowed)."""
    return validate(family).ok
