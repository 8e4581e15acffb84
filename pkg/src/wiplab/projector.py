"""Exact conditional expectations and projections for the constructed process.

Write X_i = f after i steps of the dynamics and let F_j be the sigma-algebra
generated by the cyclic coordinate together with the +-1 coordinates e_l for
l <= j.  Because e_l is F_0-measurable for l <= 0 and independent of F_0 with
mean zero for l > 0, conditional expectations of X_i collapse to closed forms:

    E(X_i | F_0)  = sum over k with lag_k >= i of theta_k * e_{i-lag_k} * 1{orbit_i in arc_k}
    P_0(X_i)      = E(X_i|F_0) - E(X_i|F_{-1})
                  = theta_k * e_0 * 1{orbit_i in arc_k}   when i = lag_k, else 0.

All L2 norms of these objects are exact rational/algebraic expressions in the
arc geometry; Monte Carlo appears only where L1 norms are needed (elsewhere).
A brute-force enumeration oracle for tiny state spaces cross-checks every
closed form on every atom.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import product

import numpy as np

from .system import (
    SampleState,
    SystemModel,
    WindowError,
    arc_index_scalar,
    defect,
    shifted_arc_intersection,
)

MAX_ORACLE_ATOMS = 2**22


class StateSpaceTooLargeError(ValueError):
    """The enumeration oracle refuses state spaces above 2**22 atoms."""


def _cond_exp_at(model: SystemModel, state: SampleState, i: int, j: int) -> float:
    """E(X_i | F_j) by the closed form; the process is adapted, so i > j reduces."""
    p = model.position_at(state.pos, i)
    a = arc_index_scalar(model, p)
    if a >= model.K:
        return 0.0
    d = i - model.family.lags[a]
    if d > j:
        return 0.0
    return model.family.theta[a] * state.e_at(d)


def cond_exp_f(model: SystemModel, state: SampleState, i: int) -> float:
    """E(X_i | F_0) evaluated at one sample point (i >= 0).

    For i = 0 this is f itself; for i > max lag it is identically zero.
    Negative i is a contract violation: the process is adapted, so X_i is
    F_0-measurable there and plain evaluation should be used instead.
    """
    if i < 0:
        raise ValueError(
            "cond_exp_f requires i >= 0; for i < 0 the value is X_i itself"
        )
    return _cond_exp_at(model, state, i, 0)


def projection_P0(model: SystemModel, state: SampleState, i: int) -> float:
    """Projection of X_i onto L2(F_0) minus L2(F_{-1}), evaluated pointwise.

    Zero for i < 0 (adaptedness) and for i not equal to any lag; at i = lag_k
    it equals theta_k * e_0 * 1{orbit position at time i lies in arc k}.
    """
    if i < 0:
        return 0.0
    k = model.lag_to_k.get(i)
    if k is None:
        return 0.0
    p = model.position_at(state.pos, i)
    if arc_index_scalar(model, p) != k:
        return 0.0
    return model.family.theta[k] * state.e_at(0)


def exact_P0_norm(model: SystemModel, i: int) -> float:
    """Exact L2 norm of the time-zero projection of X_i.

    The pulled-back arc has the same exact measure as the arc itself, so the
    norm is theta_k * sqrt(length_k / M) when i = lag_k and zero otherwise.
    """
    if i < 0:
        return 0.0
    k = model.lag_to_k.get(i)
    if k is None:
        return 0.0
    mu = model.arc_lens[k] / model.cycle_len
    return model.family.theta[k] * math.sqrt(mu)


def i2_error_norm(model: SystemModel, k: int) -> float:
    """Exact L2 error from replacing the pulled-back arc k by the arc itself.

    Equals sqrt of the symmetric-difference measure at offset lag_k; the build
    guarantees it is at most sqrt(epsilon_k), and a violation here means the
    arc table is corrupt.
    """
    if not 1 <= k <= model.K:
        raise ValueError(f"k must lie in [1, {model.K}], got {k}")
    d = defect(model, k, model.family.lags[k - 1])
    value = math.sqrt(d)
    bound = math.sqrt(model.family.epsilon[k - 1])
    if value > bound:
        raise RuntimeError(
            f"arc {k}: shift error {value} exceeds sqrt(epsilon)={bound}; "
            "the arc table violates its invariance budget"
        )
    return value


class _ESnEngine:
    """Exact evaluation of || E(S_n | F_0) ||_2 for all n.

    E(S_n|F_0) = sum over pairs (i,k), i in [0,n), lag_k >= i, of
    theta_k * e_{i-lag_k} * 1{pulled-back arc}.  Orthogonality of the +-1
    coordinates makes distinct e-indices uncorrelated, so the squared norm
    splits over the common index m = lag_k - i >= 0:

        sum_m || sum_{k in S_m(n)} theta_k 1{arc k pulled back lag_k - m steps} ||^2

    and translating all arcs in one group by m preserves every intersection,
    leaving quadratic forms in the fixed matrix of pairwise intersection
    measures of the fully pulled-back arcs, over contiguous k-ranges
    S_m(n) = {k : m <= lag_k <= n-1+m}.  The sweep over m is piecewise
    constant with at most 2K breakpoints.
    """

    def __init__(self, model: SystemModel):
        self.model = model
        K = model.K
        theta = model.family.theta
        m = model.cycle_len
        inter = np.zeros((K, K), dtype=float)
        for k in range(1, K + 1):
            for kp in range(k, K + 1):
                c = shifted_arc_intersection(model, k, kp)
                inter[k - 1, kp - 1] = inter[kp - 1, k - 1] = (
                    theta[k - 1] * theta[kp - 1] * (c / m)
                )
        # qf[a][b] = quadratic form over the 0-based index range [a, b]
        self.qf = [[0.0] * K for _ in range(K)]
        for a in range(K):
            acc = 0.0
            for b in range(a, K):
                cross = 2.0 * math.fsum(inter[j, b] for j in range(a, b))
                acc += cross + inter[b, b]
                self.qf[a][b] = acc

    def squared_norm(self, n: int) -> float:
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        lags = self.model.family.lags
        max_lag = lags[-1]
        # breakpoints in m where the active k-range changes
        points = {0, max_lag + 1}
        for lag in lags:
            points.add(lag + 1)
            if lag - n + 1 > 0:
                points.add(lag - n + 1)
        cuts = sorted(p for p in points if 0 <= p <= max_lag + 1)
        total = 0.0
        for p, q in zip(cuts, cuts[1:]):
            k_lo = bisect_left(lags, p)
            k_hi = bisect_right(lags, n - 1 + p) - 1
            if k_lo <= k_hi:
                total += (q - p) * self.qf[k_lo][k_hi]
        return total

    def full_range_form(self) -> float:
        """Quadratic form over all components: the long-run variance."""
        return self.qf[0][self.model.K - 1]


@lru_cache(maxsize=32)
def _engine(model: SystemModel) -> _ESnEngine:
    return _ESnEngine(model)


def exact_ESn_norm(model: SystemModel, n: int) -> float:
    """Exact || E(S_n | F_0) ||_2, where S_n sums the first n orbit values."""
    return math.sqrt(_engine(model).squared_norm(n))


def exact_esn_norms(model: SystemModel, n_max: int) -> np.ndarray:
    """exact_ESn_norm for every n = 1..n_max (shared precomputation)."""
    eng = _engine(model)
    return np.sqrt(np.array([eng.squared_norm(n) for n in range(1, n_max + 1)]))


@dataclass(frozen=True)
class CondExpTable:
    """Brute-force conditional expectation as an exact function table.

    Keys are (tuple of +-1 coordinates for indices lo..cond_time, position);
    values are exact rationals.  Atoms carry uniform product measure
    2^-(number of conditioning coordinates) / M.
    """

    lo: int
    hi: int
    cond_time: int
    cycle_len: int
    values: dict[tuple[tuple[int, ...], int], Fraction]

    @property
    def n_cond_bits(self) -> int:
        return self.cond_time - self.lo + 1

    def lookup(self, state: SampleState) -> Fraction:
        bits = tuple(
            state.e_at(idx) for idx in range(self.lo, self.cond_time + 1)
        )
        return self.values[(bits, state.pos)]

    def expectation(self) -> Fraction:
        total = sum(self.values.values(), start=Fraction(0))
        return total / (2**self.n_cond_bits * self.cycle_len)

    def minus_coarser(self, other: "CondExpTable") -> "CondExpTable":
        """Pointwise difference with a table conditioned on a smaller algebra."""
        if other.cond_time >= self.cond_time:
            raise ValueError("subtrahend must condition on an earlier time")
        drop = self.cond_time - other.cond_time
        diff = {
            (bits, pos): val - other.values[(bits[:-drop], pos)]
            for (bits, pos), val in self.values.items()
        }
        return CondExpTable(
            lo=self.lo,
            hi=self.hi,
            cond_time=self.cond_time,
            cycle_len=self.cycle_len,
            values=diff,
        )


def brute_force_cond_exp(
    model: SystemModel, i: int, cond_time: int = 0
) -> CondExpTable:
    """Enumerate the full state space and average X_i over future coordinates.

    Every +-1 configuration over the window and every position is visited
    explicitly; values are exact rationals.  Refuses joint state spaces above
    2**22 atoms.
    """
    lo, hi = model.window_lo, model.window_hi
    if not lo <= cond_time <= hi:
        raise ValueError(f"cond_time must lie in the window [{lo}, {hi}]")
    width = hi - lo + 1
    n_atoms = 2**width * model.cycle_len
    if n_atoms > MAX_ORACLE_ATOMS:
        raise StateSpaceTooLargeError(
            f"state space has {n_atoms} atoms (> {MAX_ORACLE_ATOMS}); "
            "the enumeration oracle only runs on tiny models"
        )
    n_cond = cond_time - lo + 1
    n_future = width - n_cond
    theta = model.family.theta
    lags = model.family.lags

    # integer +-1 coefficient of theta_arc accumulated per atom, exact
    sums: dict[tuple[tuple[int, ...], int], tuple[int, int]] = {}
    for pos in range(model.cycle_len):
        p = model.position_at(pos, i)
        a = arc_index_scalar(model, p)
        if a < model.K:
            d = i - lags[a]
            if not lo <= d <= hi:
                raise WindowError(
                    f"time {i} needs coordinate {d} outside the window [{lo}, {hi}]"
                )
        for bits in product((-1, 1), repeat=width):
            key = (bits[:n_cond], pos)
            coeff, arc = sums.get(key, (0, model.K))
            if a < model.K:
                coeff += bits[d - lo]
                arc = a
            sums[key] = (coeff, arc)

    values = {}
    denom = 2**n_future
    for key, (coeff, arc) in sums.items():
        if arc >= model.K or coeff == 0:
            values[key] = Fraction(0)
        else:
            values[key] = Fraction(theta[arc]) * Fraction(coeff, denom)
    return CondExpTable(
        lo=lo, hi=hi, cond_time=cond_time, cycle_len=model.cycle_len, values=values
    )
