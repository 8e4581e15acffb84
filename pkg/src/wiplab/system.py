"""Finite realization of the dynamical system: +-1 coordinates times a rotation.

The sample space is {-1,+1}^Z x Z/M.  The dynamics shifts the +-1 coordinates
(e_i = e_0 after i steps) and rotates the cyclic coordinate by ``step``.  Each
component k of the family owns an arc of length_k = floor(rho_k * M) points;
arcs are placed contiguously from position 0, so they are disjoint whenever
they fit.  Because rotations preserve counting measure, every event and every
intersection measure on the cyclic factor is an exact rational count / M.

Cycle lengths are capped at 2^62 so positions always fit in int64 for
vectorized sampling; all arc geometry is done in exact integer arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from .families import ParameterFamily

MAX_CYCLE_LEN = 2**62

# exhaustive defect scans beyond this many rotation steps are refused
_MAX_DEFECT_SCAN = 2**22


class BuildError(ValueError):
    """A system model could not be constructed from the given parameters."""


class ArcsDontFitError(BuildError):
    """The requested arc lengths exceed the cycle length."""


class InvarianceUnachievableError(BuildError):
    """Some arc moves by more than epsilon_k within its lag window."""


class DegenerateArcError(BuildError):
    """rho_k * M < 2: the arc would round to fewer than two points."""


class WindowError(IndexError):
    """A coordinate outside the materialized e-window was requested."""


def circle_intersection_len(s1: int, l1: int, s2: int, l2: int, m: int) -> int:
    """Number of points of Z/m lying in both arcs [s1, s1+l1) and [s2, s2+l2)."""
    if not (0 <= l1 <= m and 0 <= l2 <= m):
        raise ValueError("arc lengths must lie in [0, m]")
    d = (s2 - s1) % m
    # second arc relative to the first: [d, d+l2), possibly wrapping at m
    head = max(0, min(l1, min(d + l2, m)) - d)
    tail = min(l1, max(0, d + l2 - m))
    return head + tail


def _max_defect_numerator(m: int, step: int, length: int, lag: int) -> int:
    """max over 0 <= i <= lag of min(s_i, length, m - length, m - s_i), s_i = i*step mod m."""
    if step == 1 and lag <= m // 2:
        return min(lag, length, m - length)
    period = m // math.gcd(step, m)
    iters = min(lag, period)
    if iters > _MAX_DEFECT_SCAN:
        raise ValueError(
            f"cannot scan {iters} rotation offsets to verify arc invariance; "
            "use step=1 with a larger cycle length"
        )
    best = 0
    s = 0
    for _ in range(iters):
        s = (s + step) % m
        best = max(best, min(s, length, m - length, m - s))
    return best


@dataclass(frozen=True)
class SystemModel:
    """Immutable arc placement on Z/M plus the defining family.

    ``window_lo``/``window_hi`` delimit the e-coordinate indices any orbit
    evaluation up to time n_max-1 can touch: [-max_lag, n_max-1].
    """

    family: ParameterFamily
    cycle_len: int
    step: int
    arc_starts: tuple[int, ...]
    arc_lens: tuple[int, ...]
    window_lo: int
    window_hi: int

    @property
    def K(self) -> int:
        return self.family.K

    @property
    def n_max(self) -> int:
        return self.window_hi + 1

    @cached_property
    def arc_ends(self) -> np.ndarray:
        """Exclusive end positions, int64, for vectorized arc lookup."""
        return np.array(
            [s + l for s, l in zip(self.arc_starts, self.arc_lens)], dtype=np.int64
        )

    @cached_property
    def theta_ext(self) -> np.ndarray:
        """theta with a trailing 0.0 sentinel for the no-arc index K."""
        return np.array(list(self.family.theta) + [0.0], dtype=float)

    @cached_property
    def lags_ext(self) -> np.ndarray:
        """lags with a trailing 0 sentinel for the no-arc index K."""
        return np.array(list(self.family.lags) + [0], dtype=np.int64)

    @cached_property
    def lag_to_k(self) -> dict[int, int]:
        """lag value -> 0-based component index (lags are strictly increasing)."""
        return {lag: k for k, lag in enumerate(self.family.lags)}

    def arc_measure(self, k: int) -> Fraction:
        """Exact measure of arc k (1-based)."""
        return Fraction(self.arc_lens[k - 1], self.cycle_len)

    def position_at(self, pos: int, t: int) -> int:
        return (pos + t * self.step) % self.cycle_len


def arc_index(model: SystemModel, positions) -> np.ndarray:
    """0-based arc index per position; K means "outside every arc"."""
    p = np.asarray(positions, dtype=np.int64)
    idx = np.searchsorted(model.arc_ends, p, side="right")
    # positions at or past the last arc end belong to no arc; searchsorted
    # already returns K for those because arcs are contiguous from 0
    return idx


def arc_index_scalar(model: SystemModel, pos: int) -> int:
    return int(np.searchsorted(model.arc_ends, pos, side="right"))


def minimal_cycle_length(family: ParameterFamily) -> int:
    """Smallest M (for step=1) satisfying every build precondition.

    Each k needs rho_k*M >= 2 (non-degenerate arc) and 2*lag_k/M <= eps_k
    (invariance along the lag window).
    """
    if family.is_linear:
        raise TypeError("linear families do not use a cyclic model")
    if not family.epsilon:
        raise ValueError("family has no epsilon sequence; call choose_epsilon first")
    m = 2
    for rho, lag, eps in zip(family.rho, family.lags, family.epsilon):
        m = max(m, math.ceil(Fraction(2) / Fraction(rho)))
        m = max(m, math.ceil(Fraction(2 * lag) / Fraction(eps)))
    return m


def build_system(
    family: ParameterFamily, M: int, n_max: int, step: int = 1
) -> SystemModel:
    """Place the arcs on Z/M and verify every model invariant.

    Lengths are floor(rho_k * M), computed in exact rational arithmetic, and
    arcs are laid out contiguously from position 0 in order of k.  The
    construction is rejected when an arc would degenerate (rho_k*M < 2), the
    arcs do not fit, or some arc moves by more than epsilon_k within its lag
    window.
    """
    if family.is_linear:
        raise TypeError("linear families do not use a cyclic model")
    if not family.epsilon:
        raise ValueError("family has no epsilon sequence; call choose_epsilon first")
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    if not isinstance(M, int) or M < 2:
        raise BuildError(f"cycle length must be an integer >= 2, got {M!r}")
    if M > MAX_CYCLE_LEN:
        raise BuildError(
            f"cycle length {M} exceeds the supported range 2**62 "
            "(positions must fit in int64)"
        )
    if not isinstance(step, int) or not 1 <= step < M:
        raise BuildError(f"step must be an integer in [1, M), got {step!r}")

    lengths = []
    for k, rho in enumerate(family.rho, start=1):
        target = Fraction(rho) * M
        if target < 2:
            raise DegenerateArcError(
                f"arc {k}: rho*M = {float(target):.6g} < 2; increase the cycle length"
            )
        lengths.append(int(target.numerator // target.denominator))
    total = sum(lengths)
    if total > M:
        raise ArcsDontFitError(
            f"arc lengths sum to {total} > cycle length {M}; "
            "the measure budgets do not fit"
        )
    starts = []
    acc = 0
    for length in lengths:
        starts.append(acc)
        acc += length

    for k, (length, lag, eps) in enumerate(
        zip(lengths, family.lags, family.epsilon), start=1
    ):
        worst = _max_defect_numerator(M, step, length, lag)
        eps_frac = Fraction(eps)
        # exact comparison of 2*worst/M <= eps
        if 2 * worst * eps_frac.denominator > eps_frac.numerator * M:
            bound = math.ceil(Fraction(2 * lag) / eps_frac)
            raise InvarianceUnachievableError(
                f"arc {k}: max symmetric-difference defect 2*{worst}/{M} exceeds "
                f"epsilon={eps!r}; with step=1 a cycle length of at least {bound} works"
            )

    model = SystemModel(
        family=family,
        cycle_len=M,
        step=step,
        arc_starts=tuple(starts),
        arc_lens=tuple(lengths),
        window_lo=-family.max_lag,
        window_hi=n_max - 1,
    )
    problems = [line for ok, line in invariant_report(model) if not ok]
    if problems:
        raise BuildError("model invariants violated: " + "; ".join(problems))
    return model


def invariant_report(model: SystemModel) -> list[tuple[bool, str]]:
    """Exhaustively re-check every structural invariant of a built model.

    Returns (ok, description) pairs; used both as a post-build assertion and
    by the audit pipeline (which may run it on a deliberately corrupted model).
    """
    fam = model.family
    m = model.cycle_len
    out: list[tuple[bool, str]] = []

    order = sorted(range(model.K), key=lambda k: model.arc_starts[k])
    disjoint = all(0 <= s and s + l <= m for s, l in zip(model.arc_starts, model.arc_lens))
    prev_end = None
    for k in order:
        s, l = model.arc_starts[k], model.arc_lens[k]
        if prev_end is not None and s < prev_end:
            disjoint = False
        prev_end = s + l
    out.append((disjoint, f"arcs pairwise disjoint within [0, {m})"))

    for k in range(1, model.K + 1):
        length = model.arc_lens[k - 1]
        rho = Fraction(fam.rho[k - 1])
        lower = 2 * length * rho.denominator >= rho.numerator * m
        upper = length * rho.denominator <= rho.numerator * m
        out.append(
            (
                lower and upper,
                f"arc {k}: measure {length}/{m} within [rho/2, rho] for rho={fam.rho[k-1]!r}",
            )
        )

    for k in range(1, model.K + 1):
        lag = fam.lags[k - 1]
        eps = Fraction(fam.epsilon[k - 1])
        try:
            worst = _max_defect_numerator(m, model.step, model.arc_lens[k - 1], lag)
        except ValueError as exc:
            out.append((False, f"arc {k}: {exc}"))
            continue
        ok = 2 * worst * eps.denominator <= eps.numerator * m
        out.append(
            (
                ok,
                f"arc {k}: max defect 2*{worst}/{m} within epsilon={fam.epsilon[k-1]!r} "
                f"over the {lag}-step window",
            )
        )

    out.append(
        (
            model.window_lo == -fam.max_lag and model.window_hi >= 0,
            f"e-window [{model.window_lo}, {model.window_hi}] covers all lags",
        )
    )
    return out


def defect(model: SystemModel, k: int, i: int) -> Fraction:
    """Exact symmetric-difference measure of arc k and its i-step preimage.

    Equals 2*min(s, L, M-L, M-s)/M with s = i*step mod M: rotating an arc by s
    exposes two segments of that size.
    """
    if not 1 <= k <= model.K:
        raise ValueError(f"k must lie in [1, {model.K}], got {k}")
    if i < 0:
        raise ValueError(f"i must be >= 0, got {i}")
    m = model.cycle_len
    s = (i * model.step) % m
    length = model.arc_lens[k - 1]
    return Fraction(2 * min(s, length, m - length, m - s), m)


def shifted_arc_intersection(model: SystemModel, k: int, kp: int) -> int:
    """Point count of (arc k pulled back lag_k steps) and (arc kp pulled back lag_kp steps).

    The preimage of an arc under i rotation steps is the arc translated by
    -i*step; intersections of two arcs are computed in O(1) integer arithmetic.
    """
    m = model.cycle_len
    s1 = (model.arc_starts[k - 1] - model.family.lags[k - 1] * model.step) % m
    s2 = (model.arc_starts[kp - 1] - model.family.lags[kp - 1] * model.step) % m
    return circle_intersection_len(
        s1, model.arc_lens[k - 1], s2, model.arc_lens[kp - 1], m
    )


@dataclass(frozen=True)
class SampleState:
    """One sampled point: +-1 coordinates over a window plus a cyclic position."""

    e: np.ndarray  # int8 values in {-1, +1}, e[j] is the coordinate at lo + j
    lo: int
    pos: int

    @property
    def hi(self) -> int:
        return self.lo + len(self.e) - 1

    def e_at(self, i: int) -> int:
        j = i - self.lo
        if not 0 <= j < len(self.e):
            raise WindowError(
                f"coordinate {i} outside the materialized window [{self.lo}, {self.hi}]"
            )
        return int(self.e[j])


def sample_state(model: SystemModel, rng: np.random.Generator) -> SampleState:
    """Draw one point: uniform position, then iid fair +-1 window coordinates."""
    pos = int(rng.integers(0, model.cycle_len, dtype=np.int64))
    width = model.window_hi - model.window_lo + 1
    e = (2 * rng.integers(0, 2, size=width, dtype=np.int8) - 1).astype(np.int8)
    return SampleState(e=e, lo=model.window_lo, pos=pos)


def shift_state(model: SystemModel, state: SampleState, j: int = 1) -> SampleState:
    """Apply the dynamics j times: coordinates shift by j, position rotates."""
    return SampleState(
        e=state.e,
        lo=state.lo - j,
        pos=(state.pos + j * model.step) % model.cycle_len,
    )


def eval_f(model: SystemModel, state: SampleState, t: int) -> float:
    """Evaluate the constructed function along the orbit at time t.

    Returns theta_k * e_{t - lag_k} when the position at time t lies in arc k
    (at most one k qualifies: arcs are disjoint), else 0.
    """
    if t - model.family.max_lag < state.lo or t - model.family.lags[0] > state.hi:
        raise WindowError(
            f"time {t} needs coordinates outside the window [{state.lo}, {state.hi}]"
        )
    p = model.position_at(state.pos, t)
    a = arc_index_scalar(model, p)
    if a >= model.K:
        return 0.0
    return model.family.theta[a] * state.e_at(t - model.family.lags[a])


def sample_positions(
    model: SystemModel, rng: np.random.Generator, trials: int
) -> np.ndarray:
    """Uniform positions for a batch of independent sample points."""
    return rng.integers(0, model.cycle_len, size=trials, dtype=np.int64)


def sample_signs(rng: np.random.Generator, trials: int, cols: int) -> np.ndarray:
    """iid fair +-1 matrix (trials x cols), int8."""
    return (2 * rng.integers(0, 2, size=(trials, cols), dtype=np.int8) - 1).astype(
        np.int8
    )


def describe(model: SystemModel) -> str:
    """Structured text audit: cycle, step, arc table, defect table."""
    fam = model.family
    lines = [
        f"cycle length M = {model.cycle_len}",
        f"rotation step  = {model.step}",
        f"components K   = {model.K}",
        f"e-window       = [{model.window_lo}, {model.window_hi}]",
        "",
        "arc  start            length           measure          rho              lag",
    ]
    for k in range(1, model.K + 1):
        mu = model.arc_measure(k)
        lines.append(
            f"{k:<4d} {model.arc_starts[k-1]:<16d} {model.arc_lens[k-1]:<16d} "
            f"{float(mu):<16.10g} {fam.rho[k-1]:<16.10g} {fam.lags[k-1]}"
        )
    lines.append("")
    lines.append("arc  defect-at-lag    max-defect       epsilon")
    for k in range(1, model.K + 1):
        at_lag = defect(model, k, fam.lags[k - 1])
        worst = _max_defect_numerator(
            model.cycle_len, model.step, model.arc_lens[k - 1], fam.lags[k - 1]
        )
        lines.append(
            f"{k:<4d} {float(at_lag):<16.10g} "
            f"{2 * worst / model.cycle_len:<16.10g} {fam.epsilon[k-1]:<16.10g}"
        )
    return "\n".join(lines) + "\n"
