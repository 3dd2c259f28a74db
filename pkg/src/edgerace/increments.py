"""One-step increment distributions and their large-deviation machinery.

An :class:`IncrementModel` carries a density on a uniform quadrature grid and,
for the gaussian and uniform kinds, closed forms that are used wherever they
are exact.  On top of the density sit the cumulant generating function, its
Legendre transform, exponential tilting, i.i.d. sampling, and tail
probabilities of tau-step sums with three interchangeable backends.

Every operation is pure; sampling takes an explicit stream key.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .numerics import monotone_root
from .streams import StreamKey, generator, substream

DENSITY_TOL = 1e-8        # density must integrate to 1 within this
GRID_CLIP_MASS = 1e-10    # tilted mass tolerated in the outermost grid cells
LEGENDRE_RESIDUAL = 1e-10 # tolerance on the tilted-mean equation
_MEAN_EPS = 1e-12         # slack for treating a target mean as the untilted one
_COMPACT_EXPONENT_CAP = 80.0  # cap on |lambda| * support width for edge-supported tables


class Cumulant(NamedTuple):
    value: float      # log exponential moment
    mean: float       # mean of the tilted law
    variance: float   # variance of the tilted law


class Legendre(NamedTuple):
    eta: float        # tilt solving the mean condition
    rate: float       # convex conjugate eta*q - Lambda(eta)


class TailProbability(NamedTuple):
    value: float
    se: float | None
    backend: str


class TailRatio(NamedTuple):
    ratio: float
    prediction: float
    numerator: float
    denominator: float


@dataclass(frozen=True)
class IncrementModel:
    """Increment law with quadrature grid and declared safe tilt range."""

    kind: str                 # "gaussian" | "uniform" | "tabulated"
    grid: np.ndarray          # uniform, ascending
    density: np.ndarray      # nonnegative, integrates to 1
    lambda_lo: float          # declared safe range for exponential moments
    lambda_hi: float
    mean: float
    variance: float
    params: tuple[float, ...]  # (m, var) / (lo, hi) / ()

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if g.ndim != 1 or g.size < 5 or d.shape != g.shape:
            raise ValueError("grid and density must be matching 1-d arrays")
        h = np.diff(g)
        if not np.all(h > 0) or not np.allclose(h, h[0], rtol=1e-6, atol=0):
            raise ValueError("grid must be uniform and strictly increasing")
        if np.any(d < 0):
            raise ValueError("density must be nonnegative")
        total = _integrate(g, d)
        if abs(total - 1.0) > DENSITY_TOL:
            raise ValueError(f"density integrates to {total!r}, not 1 within {DENSITY_TOL}")
        g.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "density", d)

    @property
    def sup_support(self) -> float:
        if self.kind == "gaussian":
            return np.inf
        return float(self.grid[-1])

    @property
    def inf_support(self) -> float:
        if self.kind == "gaussian":
            return -np.inf
        return float(self.grid[0])


def _quad_weights(grid: np.ndarray) -> np.ndarray:
    """Composite Simpson weights (trapezoid fallback for even-length grids)."""
    n = grid.size
    h = grid[1] - grid[0]
    if n % 2 == 1:
        w = np.ones(n)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return w * (h / 3.0)
    w = np.full(n, h)
    w[0] = w[-1] = h / 2.0
    return w


def _integrate(grid: np.ndarray, values: np.ndarray) -> float:
    return float(np.dot(_quad_weights(grid), values))


def _log_density(model: IncrementModel) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(model.density)


def _safe_lambda_bounds(grid: np.ndarray, density: np.ndarray) -> tuple[float, float]:
    """Largest tilt range the grid supports without hidden truncation.

    Densities that vanish toward the grid edges are clipped where the tilted
    integrand's mass in the outer cells exceeds GRID_CLIP_MASS of the total.
    Edge-supported densities (uniform-like tables) have no outside mass, so
    they are capped only by an exponent budget that keeps the tilted density
    representable.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        logd = np.log(density)
    w = _quad_weights(grid)
    logw = np.log(w)
    edge = max(2, grid.size // 100)

    span = max(abs(grid[0]), abs(grid[-1]), grid[-1] - grid[0])
    cap = _COMPACT_EXPONENT_CAP / max(span, 1e-12)

    peak = float(density.max())
    if density[0] > 1e-12 * peak or density[-1] > 1e-12 * peak:
        return -cap, cap

    def edge_share(lam: float) -> float:
        t = lam * grid + logd + logw
        total = logsumexp(t)
        outer = logsumexp(np.concatenate([t[:edge], t[-edge:]]))
        return float(np.exp(outer - total))

    def bound(sign: float) -> float:
        lam, hi = 0.0, sign * cap
        if edge_share(hi) < GRID_CLIP_MASS:
            return hi
        lo_m, hi_m = 0.0, abs(hi)
        for _ in range(80):
            mid = 0.5 * (lo_m + hi_m)
            if edge_share(sign * mid) < GRID_CLIP_MASS:
                lo_m = mid
            else:
                hi_m = mid
        return sign * lo_m

    return bound(-1.0), bound(+1.0)


def gaussian(mean: float = 0.0, variance: float = 1.0, *, grid_halfwidth: float = 12.0,
             grid_points: int = 4001) -> IncrementModel:
    if variance <= 0:
        raise ValueError("variance must be positive")
    sd = float(np.sqrt(variance))
    grid = np.linspace(mean - grid_halfwidth * sd, mean + grid_halfwidth * sd, grid_points)
    density = np.exp(-0.5 * ((grid - mean) / sd) ** 2) / (sd * np.sqrt(2 * np.pi))
    lam = (grid_halfwidth - 6.5) * sd / variance
    return IncrementModel("gaussian", grid, density, -lam, lam,
                          float(mean), float(variance), (float(mean), float(variance)))


def uniform(lo: float = 0.0, hi: float = 1.0, *, grid_points: int = 2001) -> IncrementModel:
    if hi <= lo:
        raise ValueError("need lo < hi")
    grid = np.linspace(lo, hi, grid_points)
    density = np.full(grid_points, 1.0 / (hi - lo))
    span = max(abs(lo), abs(hi), hi - lo)
    cap = _COMPACT_EXPONENT_CAP / max(span, 1e-12)
    return IncrementModel("uniform", grid, density, -cap, cap,
                          0.5 * (lo + hi), (hi - lo) ** 2 / 12.0, (float(lo), float(hi)))


def tabulated(grid: Sequence[float], density: Sequence[float]) -> IncrementModel:
    grid = np.asarray(grid, dtype=float)
    density = np.asarray(density, dtype=float)
    w = _quad_weights(grid)
    mean = float(np.dot(w, grid * density))
    var = float(np.dot(w, (grid - mean) ** 2 * density))
    lam_lo, lam_hi = _safe_lambda_bounds(grid, density)
    return IncrementModel("tabulated", grid, density, lam_lo, lam_hi, mean, var, ())


def _check_lambda(model: IncrementModel, lam: float) -> None:
    if not (model.lambda_lo <= lam <= model.lambda_hi):
        raise ValueError(
            f"lambda={lam} outside the declared safe range "
            f"[{model.lambda_lo:.6g}, {model.lambda_hi:.6g}] of the {model.kind} model"
        )


def _uniform_log_mgf(lo: float, hi: float, lam: float) -> float:
    # log of (e^{lam hi} - e^{lam lo}) / (lam (hi - lo)), stable in both tails
    x = lam * (hi - lo) / 2.0
    if abs(x) < 1e-4:
        # log(sinh x / x) expanded around 0
        corr = x * x / 6.0 - x ** 4 / 180.0
    else:
        corr = np.log1p(-np.exp(-2.0 * abs(x))) + abs(x) - np.log(2.0 * abs(x))
    return lam * (lo + hi) / 2.0 + corr


def _quad_cumulant(model: IncrementModel, lam: float) -> Cumulant:
    t = lam * model.grid + _log_density(model) + np.log(_quad_weights(model.grid))
    log_i = logsumexp(t)
    p = np.exp(t - log_i)  # tilted probability mass on the grid
    mean = float(np.dot(p, model.grid))
    var = float(np.dot(p, (model.grid - mean) ** 2))
    return Cumulant(float(log_i), mean, var)


def cumulant(model: IncrementModel, lam: float) -> Cumulant:
    """Log exponential moment with tilted mean and variance.

    Derivatives come from quadrature of the tilted density, except for the
    gaussian kind where everything is closed form.
    """
    lam = float(lam)
    _check_lambda(model, lam)
    if lam == 0.0:
        return Cumulant(0.0, model.mean, model.variance)
    if model.kind == "gaussian":
        m, v = model.params
        return Cumulant(m * lam + 0.5 * v * lam * lam, m + v * lam, v)
    quad = _quad_cumulant(model, lam)
    if model.kind == "uniform":
        lo, hi = model.params
        return Cumulant(_uniform_log_mgf(lo, hi, lam), quad.mean, quad.variance)
    return quad


def _log_mgf_many(model: IncrementModel, lams: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized (log mgf, tilted mean, tilted variance) over an array of tilts."""
    if model.kind == "gaussian":
        m, v = model.params
        return m * lams + 0.5 * v * lams ** 2, m + v * lams, np.full_like(lams, v)
    base = _log_density(model) + np.log(_quad_weights(model.grid))
    t = lams[:, None] * model.grid[None, :] + base[None, :]
    log_i = logsumexp(t, axis=1)
    p = np.exp(t - log_i[:, None])
    means = p @ model.grid
    variances = p @ model.grid ** 2 - means ** 2
    return log_i, means, variances


def tilted_mean_range(model: IncrementModel) -> tuple[float, float]:
    """Means attainable by tilting within the declared safe range."""
    lo = cumulant(model, model.lambda_lo).mean
    hi = cumulant(model, model.lambda_hi).mean
    return lo, hi


def legendre(model: IncrementModel, q: float) -> Legendre:
    """Tilt eta with tilted mean q, and the convex conjugate at q.

    q must be attainable: model.mean <= q < the tilted mean at the top of the
    safe range.  q equal to the untilted mean returns (0, 0).
    """
    q = float(q)
    if abs(q - model.mean) <= _MEAN_EPS * max(1.0, abs(model.mean)):
        return Legendre(0.0, 0.0)
    if q < model.mean:
        raise ValueError(f"target mean {q} below the untilted mean {model.mean}")
    q_hi = cumulant(model, model.lambda_hi).mean
    if q >= q_hi:
        raise ValueError(f"target mean {q} not attainable within the safe tilt range (max {q_hi:.6g})")
    if model.kind == "gaussian":
        m, v = model.params
        eta = (q - m) / v
        return Legendre(eta, eta * q - cumulant(model, eta).value)
    eta = monotone_root(lambda e: cumulant(model, e).mean - q, 0.0, model.lambda_hi)
    residual = cumulant(model, eta).mean - q
    if abs(residual) > LEGENDRE_RESIDUAL:
        raise ArithmeticError(f"tilted-mean equation residual {residual} exceeds {LEGENDRE_RESIDUAL}")
    return Legendre(float(eta), float(eta * q - cumulant(model, eta).value))


def legendre_many(model: IncrementModel, qs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized legendre over an array of attainable target means."""
    qs = np.asarray(qs, dtype=float)
    if model.kind == "gaussian":
        m, v = model.params
        eta = (qs - m) / v
        lam_val = m * eta + 0.5 * v * eta ** 2
        return eta, eta * qs - lam_val
    lo, hi = 0.0, model.lambda_hi
    table = np.linspace(lo, hi, 512)
    _, means, _ = _log_mgf_many(model, table)
    if np.any(qs < model.mean - 1e-9) or np.any(qs > means[-1]):
        raise ValueError("some target means are outside the attainable tilted range")
    eta = np.interp(qs, means, table)
    for _ in range(3):  # Newton polish on the monotone mean equation
        log_i, m_e, v_e = _log_mgf_many(model, eta)
        eta = np.clip(eta - (m_e - qs) / np.maximum(v_e, 1e-300), lo, hi)
    log_i, m_e, _ = _log_mgf_many(model, eta)
    return eta, eta * qs - log_i


def front_velocity(model: IncrementModel, s: float) -> float:
    """Per-step drift of the leading edge for exponential rate s: Lambda(s)/s."""
    if s <= 0:
        raise ValueError("s must be positive")
    return cumulant(model, s).value / s


def tilt(model: IncrementModel, s: float) -> IncrementModel:
    """Exponentially tilted model with density e^{s h} g(h) / e^{Lambda(s)}."""
    s = float(s)
    _check_lambda(model, s)
    if s == 0.0:
        return model
    if model.kind == "gaussian":
        m, v = model.params
        halfwidth = (model.grid[-1] - model.grid[0]) / (2.0 * np.sqrt(v))
        return gaussian(m + v * s, v, grid_halfwidth=halfwidth, grid_points=model.grid.size)
    log_norm = cumulant(model, s).value
    density = np.exp(s * model.grid + _log_density(model) - log_norm)
    return tabulated(model.grid, density)


def sample(model: IncrementModel, n: int, stream: StreamKey) -> np.ndarray:
    """n i.i.d. draws, deterministic given the stream key."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    rng = generator(stream)
    if n == 0:
        return np.empty(0)
    if model.kind == "gaussian":
        m, v = model.params
        return rng.normal(m, np.sqrt(v), size=n)
    if model.kind == "uniform":
        lo, hi = model.params
        return rng.uniform(lo, hi, size=n)
    cdf = np.concatenate([[0.0], np.cumsum((model.density[1:] + model.density[:-1])
                                           * 0.5 * np.diff(model.grid))])
    cdf /= cdf[-1]
    return np.interp(rng.random(n), cdf, model.grid)


def step_tail(model: IncrementModel, t: np.ndarray | float) -> np.ndarray | float:
    """One-step upper tail P(h >= t), exact up to the grid representation."""
    t_arr = np.asarray(t, dtype=float)
    if model.kind == "gaussian":
        m, v = model.params
        out = norm.sf((t_arr - m) / np.sqrt(v))
    elif model.kind == "uniform":
        lo, hi = model.params
        out = np.clip((hi - t_arr) / (hi - lo), 0.0, 1.0)
    else:
        seg = (model.density[1:] + model.density[:-1]) * 0.5 * np.diff(model.grid)
        right = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
        out = np.interp(t_arr, model.grid, right, left=right[0], right=0.0)
        out = np.minimum(out, 1.0)
    return out if np.ndim(t) else float(out)


BACKENDS = ("gaussian-exact", "br-approx", "mc-importance")


class TailQuery(NamedTuple):
    """Resolved tau-step tail query P(S_tau >= y)."""

    tau: int
    y: float
    backend: str
    q: float          # y / tau
    eta: float
    rate: float       # Legendre transform at q
    curvature: float  # tilted variance at eta
    psi: float        # eta * sqrt(tau * curvature)
    mc_samples: int
    mc_stream: StreamKey | None
    se_cap: float | None


def tail_query(model: IncrementModel, tau: int, y: float, backend: str = "gaussian-exact",
               *, mc_samples: int = 10 ** 6, mc_stream: StreamKey | None = None,
               se_cap: float | None = None) -> TailQuery:
    """Validate and resolve a tail query; rejects targets outside (mean, q_max)."""
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "gaussian-exact" and model.kind != "gaussian":
        raise ValueError("gaussian-exact backend requires a gaussian model")
    tau = int(tau)
    if tau < 1:
        raise ValueError("tau must be >= 1")
    q = float(y) / tau
    if q <= model.mean:
        raise ValueError(f"per-step target {q} at or below the mean {model.mean}; query rejected")
    eta, rate = legendre(model, q)
    curv = cumulant(model, eta).variance
    psi = eta * np.sqrt(tau * curv)
    if backend == "mc-importance" and mc_stream is None:
        raise ValueError("mc-importance needs a stream key")
    return TailQuery(tau, float(y), backend, q, eta, rate, curv, psi,
                     int(mc_samples), mc_stream, se_cap)


def _mc_importance(model: IncrementModel, query: TailQuery) -> tuple[float, float]:
    """Unbiased importance-sampling estimate under the eta-tilted walk.

    The estimator is the tilted-measure mean of e^{-eta S + tau Lambda(eta)}
    on {S >= y}.  For gaussian models S is drawn from its exact tau-step law
    (sum of tilted normals), which leaves the estimator's law unchanged;
    other kinds accumulate per-step draws in batches.
    """
    tilted = tilt(model, query.eta)
    lam_val = cumulant(model, query.eta).value
    n = query.mc_samples
    rng_key = query.mc_stream
    if model.kind == "gaussian":
        rng = generator(rng_key)
        s_sum = rng.normal(query.tau * tilted.mean,
                           np.sqrt(query.tau * tilted.variance), size=n)
    else:
        s_sum = np.zeros(n)
        block = max(1, int(2e7) // query.tau)
        done = 0
        idx = 0
        while done < n:
            take = min(block, n - done)
            draws = sample(tilted, take * query.tau, substream(rng_key, idx))
            s_sum[done:done + take] = draws.reshape(take, query.tau).sum(axis=1)
            done += take
            idx += 1
    weights = np.where(s_sum >= query.y,
                       np.exp(-query.eta * s_sum + query.tau * lam_val), 0.0)
    estimate = float(weights.mean())
    se = float(weights.std(ddof=1) / np.sqrt(n))
    return estimate, se


def sum_tail(model: IncrementModel, query: TailQuery) -> TailProbability:
    """P(S_tau >= y) under the chosen backend."""
    if query.backend == "gaussian-exact":
        m, v = model.params
        value = float(norm.sf((query.y - query.tau * m) / np.sqrt(query.tau * v)))
        return TailProbability(value, None, query.backend)
    if query.backend == "br-approx":
        value = float(np.exp(-query.tau * query.rate)
                      / (query.eta * np.sqrt(2 * np.pi * query.tau * query.curvature)))
        return TailProbability(value, None, query.backend)
    estimate, se = _mc_importance(model, query)
    if query.se_cap is not None and se > query.se_cap:
        raise ArithmeticError(f"mc standard error {se} exceeds the requested cap {query.se_cap}")
    return TailProbability(estimate, se, query.backend)


def tail_ratio(model: IncrementModel, tau: int, q: float, x: float,
               backend: str = "gaussian-exact", *, beta: float = 0.4,
               mc_samples: int = 10 ** 6, mc_stream: StreamKey | None = None) -> TailRatio:
    """Shifted-threshold tail ratio against its exponential prediction.

    Returns P(S_tau >= q tau + x) / P(S_tau >= q tau) computed with one shared
    backend, alongside the prediction e^{-eta(q) x}.
    """
    if abs(x) > tau ** beta:
        raise ValueError(f"|x|={abs(x)} outside the polynomial window tau^beta={tau ** beta:.4g}")
    eta, _ = legendre(model, q)
    prediction = float(np.exp(-eta * x))
    if x == 0.0:
        p = sum_tail(model, tail_query(model, tau, q * tau, backend,
                                       mc_samples=mc_samples,
                                       mc_stream=None if mc_stream is None else substream(mc_stream, 0))).value
        return TailRatio(1.0, 1.0, p, p)
    denom_q = tail_query(model, tau, q * tau, backend, mc_samples=mc_samples,
                         mc_stream=None if mc_stream is None else substream(mc_stream, 0))
    numer_q = tail_query(model, tau, q * tau + x, backend, mc_samples=mc_samples,
                         mc_stream=None if mc_stream is None else substream(mc_stream, 1))
    denom = sum_tail(model, denom_q).value
    numer = sum_tail(model, numer_q).value
    return TailRatio(numer / denom, prediction, numer, denom)


def model_from_dict(spec: dict) -> IncrementModel:
    """Build a model from a configuration mapping (kind plus parameters)."""
    kind = spec.get("kind")
    opts = {}
    if kind == "gaussian":
        if "grid_halfwidth" in spec:
            opts["grid_halfwidth"] = float(spec["grid_halfwidth"])
        if "grid_points" in spec:
            opts["grid_points"] = int(spec["grid_points"])
        return gaussian(float(spec.get("mean", 0.0)), float(spec.get("variance", 1.0)), **opts)
    if kind == "uniform":
        if "grid_points" in spec:
            opts["grid_points"] = int(spec["grid_points"])
        return uniform(float(spec.get("lo", 0.0)), float(spec.get("hi", 1.0)), **opts)
    if kind == "tabulated":
        return tabulated(spec["grid"], spec["density"])
    raise ValueError(f"unknown model kind {kind!r}")
