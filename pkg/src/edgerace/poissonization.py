"""Expected-count tails, front prediction, Poisson surrogate laws, and the
extraction of an atomic measure whose transform reproduces the tail.

The expected number of particles at or above x after tau steps is the sum of
tau-step tail probabilities over the configuration.  Its unit crossing
predicts the front; the exact leader law (product over particles) is compared
with the Poisson surrogate exp(-expected count), and the expected-count tail
is converted into atoms located at the tilt of each particle's per-step speed
demand, weighted by its reach probability.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import ndtr
from scipy.stats import norm

from . import increments as inc
from .configurations import Configuration
from .laplace import LaplaceMeasure
from .numerics import fmt17
from .streams import StreamKey

_CHUNK = 256  # grid rows processed per block when summing over particles


def tail_curve(model: inc.IncrementModel, tau: int,
               backend: str = "auto") -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized y -> P(S_tau >= y) over the whole line.

    "auto" resolves to the exact normal tail for gaussian models and to the
    sharp-tail approximation otherwise.  The approximation is only defined
    beyond the central region, so the non-gaussian curve blends it with the
    central-limit tail (log-linear in the standardized exceedance) between two
    and four tilted standard deviations, and mirrors the construction on the
    lower tail; the blend serves full-line surrogate laws, while strict
    single-point queries go through `increments.sum_tail`.
    """
    if backend == "auto":
        backend = "gaussian-exact" if model.kind == "gaussian" else "br-approx"
    if backend == "gaussian-exact":
        if model.kind != "gaussian":
            raise ValueError("gaussian-exact backend requires a gaussian model")
        m, v = model.params
        scale = np.sqrt(tau * v)

        def curve_exact(y: np.ndarray) -> np.ndarray:
            # upper normal tail via ndtr of the negated argument (fast path)
            return ndtr((tau * m - np.asarray(y, dtype=float)) / scale)

        return curve_exact
    if backend != "br-approx":
        raise ValueError(f"backend {backend!r} cannot evaluate full tail curves")

    sd = np.sqrt(tau * model.variance)
    q_top = inc.cumulant(model, model.lambda_hi).mean

    def curve_blend(y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        q = y / tau
        out = np.empty_like(q)
        central = norm.sf((y - tau * model.mean) / sd)

        upper = q > model.mean
        lower = ~upper
        out[lower] = central[lower]
        if np.any(upper):
            qs = np.clip(q[upper], model.mean, q_top - 1e-9)
            eta, rate = inc.legendre_many(model, qs)
            _, _, curv = inc._log_mgf_many(model, eta)
            psi = eta * np.sqrt(tau * np.maximum(curv, 1e-300))
            with np.errstate(divide="ignore", over="ignore"):
                log_sharp = (-tau * rate
                             - np.log(np.maximum(eta, 1e-300))
                             - 0.5 * np.log(2 * np.pi * tau * np.maximum(curv, 1e-300)))
                log_central = norm.logsf((y[upper] - tau * model.mean) / sd)
            weight = np.clip((psi - 2.0) / 2.0, 0.0, 1.0)
            log_mix = (1.0 - weight) * log_central + weight * log_sharp
            vals = np.exp(log_mix)
            beyond = q[upper] >= model.sup_support
            vals[beyond] = 0.0
            out[upper] = np.minimum(vals, 1.0)
        return out

    def curve(y: np.ndarray) -> np.ndarray:
        scalar = np.ndim(y) == 0
        vals = curve_blend(np.atleast_1d(y))
        return float(vals[0]) if scalar else vals

    return curve


def expected_count_above(config: Configuration, model: inc.IncrementModel, tau: int,
                         x: float, backend: str = "auto",
                         mc_samples: int = 100_000,
                         mc_stream: StreamKey | None = None) -> float:
    """Expected number of particles at or above x after tau steps.

    The mc-importance backend re-estimates every summand under its own tilt
    (one substream per particle) and exists for validating the closed-form
    curves; every per-particle query must then be strictly valid.
    """
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if backend == "mc-importance":
        if mc_stream is None:
            raise ValueError("mc-importance needs a stream key")
        total = 0.0
        for i, pos in enumerate(config.positions):
            query = inc.tail_query(model, tau, x - pos, "mc-importance",
                                   mc_samples=mc_samples,
                                   mc_stream=(*mc_stream, i))
            total += inc.sum_tail(model, query).value
        return total
    curve = tail_curve(model, tau, backend)
    return float(np.sum(curve(x - config.positions)))


def _count_curve(config: Configuration, model: inc.IncrementModel, tau: int,
                 backend: str) -> Callable[[np.ndarray], np.ndarray]:
    curve = tail_curve(model, tau, backend)
    positions = config.positions

    def counts(xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        out = np.empty(xs.size)
        for start in range(0, xs.size, _CHUNK):
            block = xs[start:start + _CHUNK]
            out[start:start + _CHUNK] = curve(block[:, None] - positions[None, :]).sum(axis=1)
        return out

    return counts


def z_front(config: Configuration, model: inc.IncrementModel, tau: int,
            backend: str = "auto", xtol: float = 1e-8) -> float:
    """Position where the expected count above equals one.

    A single particle keeps the expected count strictly below one, which
    surfaces as a no-bracket error; the crossing needs at least two particles.
    """
    counts = _count_curve(config, model, tau, backend)

    def f(z: float) -> float:
        return float(counts(np.array([z]))[0]) - 1.0

    scale = max(np.sqrt(tau * model.variance), 1.0)
    hi = config.leader + tau * max(abs(model.mean), 1.0) + 10.0 * scale
    for _ in range(100):
        if f(hi) < 0:
            break
        hi += 4.0 * scale
    lo = hi
    for _ in range(200):
        lo -= 4.0 * scale
        if f(lo) > 0:
            break
    else:
        raise ValueError("expected count never reaches one: no front crossing to bracket")
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class LeaderLaw:
    grid: np.ndarray
    cdf: np.ndarray
    kind: str  # "exact" | "surrogate"

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        cdf = np.asarray(self.cdf, dtype=float)
        if grid.shape != cdf.shape or grid.ndim != 1:
            raise ValueError("grid and cdf must be matching 1-d arrays")
        if np.any(np.diff(cdf) < -1e-12):
            raise ValueError("cdf must be nondecreasing")
        grid.setflags(write=False)
        cdf.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "cdf", cdf)


def leader_laws(config: Configuration, model: inc.IncrementModel, tau: int,
                grid: np.ndarray | None = None, backend: str = "auto",
                grid_points: int = 2001) -> tuple[LeaderLaw, LeaderLaw]:
    """Exact and Poisson-surrogate laws of the leader after tau steps.

    The exact law multiplies per-particle survival factors; the surrogate
    exponentiates minus the expected count.  The surrogate dominates pointwise.
    """
    curve = tail_curve(model, tau, backend)
    if grid is None:
        z = z_front(config, model, tau, backend)
        half = 10.0 * np.sqrt(tau * model.variance)
        grid = np.linspace(z - half, z + half, grid_points)
    grid = np.asarray(grid, dtype=float)
    log_exact = np.empty(grid.size)
    count = np.empty(grid.size)
    positions = config.positions
    for start in range(0, grid.size, _CHUNK):
        block = grid[start:start + _CHUNK]
        p = curve(block[:, None] - positions[None, :])
        p = np.clip(p, 0.0, 1.0)
        with np.errstate(divide="ignore"):
            log_exact[start:start + _CHUNK] = np.log1p(-p).sum(axis=1)
        count[start:start + _CHUNK] = p.sum(axis=1)
    exact = np.exp(log_exact)
    surrogate = np.exp(-count)
    # the surrogate's low end is floored at e^{-N} for an N-particle window,
    # so only the exact law and the surrogate's upper sweep are enforced
    if exact[0] > 1e-6 or exact[-1] < 1 - 1e-6 or surrogate[-1] < 1 - 1e-6:
        raise ValueError("grid too narrow: the laws do not sweep (1e-6, 1-1e-6)")
    return (LeaderLaw(grid, exact, "exact"), LeaderLaw(grid, surrogate, "surrogate"))


def law_distance(p: LeaderLaw, q: LeaderLaw) -> float:
    """Total variation of the difference of the induced grid measures.

    Realizes the bounded-test-function distance on the common grid: mass
    below the grid, per-cell masses, and mass above the grid all compared in
    absolute value.
    """
    if p.grid.shape != q.grid.shape or not np.allclose(p.grid, q.grid, rtol=0, atol=0):
        raise ValueError("laws live on different grids")
    below = abs(p.cdf[0] - q.cdf[0])
    above = abs((1.0 - p.cdf[-1]) - (1.0 - q.cdf[-1]))
    cells = float(np.abs(np.diff(p.cdf) - np.diff(q.cdf)).sum())
    return below + cells + above


class Extraction(NamedTuple):
    measure: LaplaceMeasure
    z: float              # front prediction used for the weights
    total_weight: float   # mass before merging, approximately one
    n_dropped: int        # particles removed by the depth truncation


def extract_laplace(config: Configuration, model: inc.IncrementModel, tau: int,
                    cutoff: float | None = None, backend: str = "auto",
                    merge_tol: float = 1e-9) -> Extraction:
    """Atomic measure whose transform mimics the normalized expected-count tail.

    Each retained particle contributes an atom at the tilt matching its
    per-step speed demand (z - x_n)/tau, weighted by its tau-step reach
    probability.  Particles deeper than cutoff*tau below the leader are
    dropped; the default cutoff keeps the attainable tilt an order of
    magnitude above the pilot mass center.
    """
    z = z_front(config, model, tau, backend)
    curve = tail_curve(model, tau, backend)
    depths = config.leader - config.positions  # nonnegative, ascending

    def build(limit: float) -> tuple[np.ndarray, np.ndarray, int]:
        keep = depths <= limit * tau
        kept = config.positions[keep]
        qs = (z - kept) / tau
        q_top = inc.cumulant(model, model.lambda_hi).mean
        if np.any(qs <= model.mean) or np.any(qs >= q_top):
            raise ValueError("tilt out of range for a retained particle; adjust the cutoff")
        eta, _ = inc.legendre_many(model, qs)
        w = curve(z - kept)
        return eta, w, int(config.size - kept.size)

    if cutoff is None:
        eta, w, _ = build(np.inf)
        u_mean = float(np.dot(eta, w) / w.sum())
        target_eta = min(10.0 * u_mean, model.lambda_hi)
        # depth limit in speed units: the tilt at mean + cutoff reaches the target
        cutoff = inc.cumulant(model, target_eta).mean - model.mean
    eta, w, dropped = build(float(cutoff))
    total = float(w.sum())

    # merge atoms whose tilt coincides within tolerance
    order = np.argsort(eta, kind="stable")
    eta, w = eta[order], w[order]
    groups = np.concatenate([[0], np.cumsum(np.diff(eta) > merge_tol)])
    n_groups = int(groups[-1]) + 1
    u_out = np.zeros(n_groups)
    w_out = np.zeros(n_groups)
    np.add.at(w_out, groups, w)
    np.add.at(u_out, groups, eta * w)
    u_out /= w_out
    return Extraction(LaplaceMeasure(u_out, w_out), z, total, dropped)


def write_law_csv(law: LeaderLaw, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["position", "cdf"])
        for x, c in zip(law.grid, law.cdf):
            writer.writerow([fmt17(x), fmt17(c)])
