"""wiplab: an executable laboratory for projective weak-invariance-principle criteria.

The package builds a finite, exactly computable stationary process

    f = sum_k theta_k * e_{-lag_k} * 1{arc_k},

with iid fair +-1 coordinates ``e_i`` and almost-invariant arcs ``arc_k`` on a
cyclic rotation, and evaluates four classical projective criteria for the
functional CLT (Gordin martingale-coboundary, Dedecker-Rio, Maxwell-Woodroofe,
Hannan) both through equivalent parameter series and through direct estimation
of the defining norms.  A Monte-Carlo harness checks Donsker-type Gaussian
behaviour of the normalized partial-sum paths.
"""

__version__ = "0.1.0"
