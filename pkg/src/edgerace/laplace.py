"""Finite atomic measures on [0, inf), their transforms, and tail intensities.

The transform R(x) = sum_i w_i e^{-x u_i} of an atomic measure is a strictly
decreasing convex intensity tail.  Shifting a configuration corresponds to the
reweighting w_i -> w_i e^{-alpha u_i}; normalization is always performed as
such a shift (never a mass rescale), so that total mass one and the value-one
convention at the origin coincide.

Convolving the intensity with an increment density multiplies atom weights by
e^{S(u)} with S(u) = Lambda(u) - z u, the normalizing z re-solved each time.
This is the engine behind the steepness order and the contraction checks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from . import increments as inc
from .numerics import adaptive_gauss, fmt17, monotone_root
from .streams import StreamKey, generator

NORMALIZE_TOL = 1e-12
ATOM_MASS_MIN = 0.0
QUAD_TOL = 1e-10        # absolute quadrature target for the functionals
TAIL_BUDGET = 1e-13     # certified remainder outside the quadrature range
STEEPER_SLACK = 1e-9


@dataclass(frozen=True)
class LaplaceMeasure:
    """Atoms (u_i, w_i) with distinct nonnegative u, sorted ascending."""

    u: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if u.ndim != 1 or u.shape != w.shape or u.size == 0:
            raise ValueError("u and w must be matching nonempty 1-d arrays")
        if np.any(u < 0):
            raise ValueError("atom locations must be nonnegative")
        if np.any(np.diff(u) <= 0):
            raise ValueError("atom locations must be strictly increasing")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("atom weights must be positive and finite")
        u.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "w", w)

    @property
    def total_mass(self) -> float:
        return float(self.w.sum())

    @property
    def n_atoms(self) -> int:
        return int(self.u.size)


def measure(atoms: Sequence[tuple[float, float]]) -> LaplaceMeasure:
    pairs = sorted((float(u), float(w)) for u, w in atoms)
    us = np.array([p[0] for p in pairs])
    ws = np.array([p[1] for p in pairs])
    return LaplaceMeasure(us, ws)


def point_mass(u: float, w: float = 1.0) -> LaplaceMeasure:
    return LaplaceMeasure(np.array([float(u)]), np.array([float(w)]))


def log_transform(rho: LaplaceMeasure, x: np.ndarray | float) -> np.ndarray | float:
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    t = logsumexp(np.log(rho.w)[None, :] - np.outer(xs, rho.u), axis=1)
    return t if np.ndim(x) else float(t[0])


def transform(rho: LaplaceMeasure, x: np.ndarray | float) -> np.ndarray | float:
    """R(x) = sum_i w_i e^{-x u_i}; evaluated through logs to dodge overflow."""
    out = np.exp(log_transform(rho, x))
    return out if np.ndim(x) else float(out)


def shift(rho: LaplaceMeasure, alpha: float) -> LaplaceMeasure:
    """Reweighting matching a spatial shift: transform(shift(rho, a), x) = transform(rho, x + a)."""
    return LaplaceMeasure(rho.u, rho.w * np.exp(-float(alpha) * rho.u))


def normalizing_shift(rho: LaplaceMeasure) -> float:
    """Shift alpha bringing total mass to one; raises for degenerate measures."""
    mass_at_zero = float(rho.w[rho.u == 0.0].sum())
    if np.all(rho.u == 0.0):
        if abs(rho.total_mass - 1.0) <= NORMALIZE_TOL:
            return 0.0
        raise ValueError("all atoms at u=0: no shift can change the total mass")
    if mass_at_zero >= 1.0:
        raise ValueError("mass at u=0 is >= 1; the shifted total mass cannot reach 1")
    alpha = monotone_root(lambda a: log_transform(rho, a), -1.0, 1.0)
    # Newton polish on log R(alpha) = 0 using the analytic derivative
    for _ in range(3):
        r = transform(rho, alpha)
        dr = -float(np.dot(rho.w * rho.u, np.exp(-alpha * rho.u)))
        alpha -= (r - 1.0) / dr
    if abs(transform(rho, alpha) - 1.0) > NORMALIZE_TOL:
        raise ArithmeticError("normalizing shift did not reach unit mass within 1e-12")
    return float(alpha)


def normalize(rho: LaplaceMeasure) -> LaplaceMeasure:
    return shift(rho, normalizing_shift(rho))


def is_normalized(rho: LaplaceMeasure, tol: float = 1e-9) -> bool:
    return abs(rho.total_mass - 1.0) <= tol


def convolution_shift(rho: LaplaceMeasure, model: inc.IncrementModel) -> float:
    """Normalizing z for the increment-convolved measure (weights w e^{Lambda(u) - z u})."""
    if not is_normalized(rho):
        raise ValueError("measure must be normalized (unit mass) before convolving")
    if rho.u[-1] > model.lambda_hi:
        raise ValueError(
            f"atom at u={rho.u[-1]:.6g} outside the model's safe cumulant range")
    lam = np.array([inc.cumulant(model, float(u)).value for u in rho.u])
    logw = np.log(rho.w) + lam

    def f(z: float) -> float:
        return float(logsumexp(logw - z * rho.u))

    z0 = float(np.max(logw / np.maximum(rho.u, 1e-300)))
    return monotone_root(f, z0 - 1.0, z0 + 1.0, xtol=1e-14)


def convolve_g(rho: LaplaceMeasure, model: inc.IncrementModel) -> LaplaceMeasure:
    """Increment convolution followed by the normalizing shift, on atoms."""
    z = convolution_shift(rho, model)
    lam = np.array([inc.cumulant(model, float(u)).value for u in rho.u])
    return LaplaceMeasure(rho.u, rho.w * np.exp(lam - z * rho.u))


# ---------------------------------------------------------------------------
# tail intensities


@dataclass(frozen=True)
class TailIntensity:
    """Decreasing positive intensity tail, transform-backed or tabulated.

    Transform-backed: F(x) = R_rho(x - offset).  Empirical: log-linear
    interpolation through strictly decreasing samples (x_i, F_i), with
    log-linear extrapolation from the edge slopes.
    """

    rho: LaplaceMeasure | None = None
    offset: float = 0.0
    xs: np.ndarray | None = None
    fs: np.ndarray | None = None

    def __post_init__(self):
        if (self.rho is None) == (self.xs is None):
            raise ValueError("exactly one of rho / xs must be given")
        if self.xs is not None:
            xs = np.asarray(self.xs, dtype=float)
            fs = np.asarray(self.fs, dtype=float)
            if xs.ndim != 1 or xs.shape != fs.shape or xs.size < 2:
                raise ValueError("empirical intensity needs matching 1-d arrays, length >= 2")
            if np.any(np.diff(xs) <= 0):
                raise ValueError("empirical grid must be strictly increasing")
            if np.any(fs <= 0) or np.any(np.diff(fs) >= 0):
                raise ValueError("empirical values must be positive and strictly decreasing")
            xs.setflags(write=False)
            fs.setflags(write=False)
            object.__setattr__(self, "xs", xs)
            object.__setattr__(self, "fs", fs)

    @property
    def laplace_backed(self) -> bool:
        return self.rho is not None

    @property
    def min_rate(self) -> float:
        """Slowest exponential decay rate toward +inf."""
        if self.laplace_backed:
            return float(self.rho.u[0])
        logf = np.log(self.fs)
        return float((logf[-2] - logf[-1]) / (self.xs[-1] - self.xs[-2]))

    def value(self, x: np.ndarray | float) -> np.ndarray | float:
        if self.laplace_backed:
            return transform(self.rho, np.asarray(x, dtype=float) - self.offset)
        xs_in = np.atleast_1d(np.asarray(x, dtype=float))
        logf = np.log(self.fs)
        slope_lo = (logf[1] - logf[0]) / (self.xs[1] - self.xs[0])
        slope_hi = (logf[-1] - logf[-2]) / (self.xs[-1] - self.xs[-2])
        out = np.interp(xs_in, self.xs, logf)
        below = xs_in < self.xs[0]
        above = xs_in > self.xs[-1]
        out[below] = logf[0] + slope_lo * (xs_in[below] - self.xs[0])
        out[above] = logf[-1] + slope_hi * (xs_in[above] - self.xs[-1])
        out = np.exp(out)
        return out if np.ndim(x) else float(out[0])

    def inverse(self, t: np.ndarray | float) -> np.ndarray | float:
        """Level crossing F^{-1}(t) = inf{x : F(x) <= t}."""
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(ts <= 0):
            raise ValueError("levels must be positive")
        if self.laplace_backed:
            rho = self.rho
            if rho.n_atoms == 1:
                out = self.offset - np.log(ts / rho.w[0]) / rho.u[0]
            else:
                logt = np.log(ts)
                lw = np.log(rho.w)
                # bracket from the extreme atoms: each single term bounds R below
                cand = (lw[None, :] - logt[:, None]) / rho.u[None, :]
                lo = cand.max(axis=1)
                hi = lo + 1.0
                # expand hi until R(hi) < t everywhere
                for _ in range(200):
                    vals = log_transform(rho, hi)
                    mask = vals >= logt
                    if not np.any(mask):
                        break
                    hi = np.where(mask, hi + (hi - lo), hi)
                if rho.n_atoms * ts.size > 1_000_000:
                    out = self._inverse_newton(logt, lo, hi) + self.offset
                else:
                    for _ in range(90):
                        mid = 0.5 * (lo + hi)
                        above = log_transform(rho, mid) > logt
                        lo = np.where(above, mid, lo)
                        hi = np.where(above, hi, mid)
                    out = 0.5 * (lo + hi) + self.offset
        else:
            logf = np.log(self.fs)[::-1]
            grid = self.xs[::-1]
            logt = np.log(ts)
            out = np.interp(logt, logf, grid)
            slope_lo = (grid[1] - grid[0]) / (logf[1] - logf[0])
            slope_hi = (grid[-1] - grid[-2]) / (logf[-1] - logf[-2])
            below = logt < logf[0]
            above = logt > logf[-1]
            out[below] = grid[0] + slope_lo * (logt[below] - logf[0])
            out[above] = grid[-1] + slope_hi * (logt[above] - logf[-1])
        return out if np.ndim(t) else float(out[0])

    def _inverse_newton(self, logt: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Level crossings for many-atom transforms: one dense sweep of the
        log transform seeds a safeguarded Newton iteration (the log transform
        is convex and strictly decreasing, so the iteration is monotone)."""
        rho = self.rho
        grid = np.linspace(float(lo.min()) - 1e-9, float(hi.max()) + 1e-9, 4096)
        block = max(1, 2_000_000 // rho.n_atoms)
        logf = np.concatenate([np.asarray(log_transform(rho, grid[i:i + block]))
                               for i in range(0, grid.size, block)])
        x = np.interp(-logt, -logf, grid)
        out = np.empty_like(x)
        for i in range(0, x.size, block):
            xi = x[i:i + block]
            ti = logt[i:i + block]
            for _ in range(6):
                with np.errstate(over="ignore"):
                    terms = rho.w[None, :] * np.exp(-np.outer(xi, rho.u))
                f = terms.sum(axis=1)
                df = -(terms * rho.u[None, :]).sum(axis=1)
                xi = np.clip(xi - (np.log(f) - ti) * f / df, lo[i:i + block], hi[i:i + block])
            if np.abs(np.asarray(log_transform(rho, xi)) - ti).max() > 1e-9:
                raise ArithmeticError("level-crossing refinement did not converge")
            out[i:i + block] = xi
        return out

    def normalized(self) -> "TailIntensity":
        """Shifted so that the value at 0 is 1 (sup convention at level one)."""
        z = self.normalizing_level_shift()
        if self.laplace_backed:
            return TailIntensity(rho=self.rho, offset=self.offset - z)
        return TailIntensity(xs=self.xs - z, fs=self.fs)

    def normalizing_level_shift(self) -> float:
        """sup{z : F(z) >= 1}."""
        if self.laplace_backed:
            return float(self.inverse(1.0))
        if self.fs[0] < 1.0 or self.fs[-1] > 1.0:
            raise ValueError("empirical intensity does not cross level one on its grid")
        idx = int(np.searchsorted(-self.fs, -1.0, side="right")) - 1
        if self.fs[idx] == 1.0:
            while idx + 1 < self.fs.size and self.fs[idx + 1] == 1.0:
                idx += 1
            return float(self.xs[idx])
        return float(self.inverse(1.0))


def intensity_from_measure(rho: LaplaceMeasure, offset: float = 0.0) -> TailIntensity:
    return TailIntensity(rho=rho, offset=float(offset))


def exponential_intensity(s: float, z: float = 0.0) -> TailIntensity:
    """Pure exponential tail e^{-s (x - z)}."""
    if s <= 0:
        raise ValueError("rate must be positive")
    return TailIntensity(rho=point_mass(s, 1.0), offset=float(z))


def intensity_table(xs: Sequence[float], fs: Sequence[float]) -> TailIntensity:
    return TailIntensity(xs=np.asarray(xs, dtype=float), fs=np.asarray(fs, dtype=float))


def _coerce(f: "TailIntensity | LaplaceMeasure") -> TailIntensity:
    if isinstance(f, LaplaceMeasure):
        return intensity_from_measure(f)
    return f


class SteeperResult(NamedTuple):
    holds: bool
    witness: tuple[float, float] | None  # violating level pair (a, b), a < b


def steeper(g: TailIntensity | LaplaceMeasure, f: TailIntensity | LaplaceMeasure,
            levels: Sequence[float], slack: float = STEEPER_SLACK) -> SteeperResult:
    """True when every level interval of g is no longer than that of f.

    Checks g^{-1}(a) - g^{-1}(b) <= f^{-1}(a) - f^{-1}(b) + slack over all
    pairs a < b of the supplied level grid.
    """
    g = _coerce(g)
    f = _coerce(f)
    lv = np.sort(np.asarray(levels, dtype=float))
    d = np.asarray(g.inverse(lv)) - np.asarray(f.inverse(lv))
    # the all-pairs condition says d may not drop by more than the slack as the
    # level rises, so compare each point against the running maximum before it
    prefix = np.maximum.accumulate(d)
    bad = np.nonzero(prefix - d > slack)[0]
    if bad.size == 0:
        return SteeperResult(True, None)
    j = int(bad[0])
    i = int(np.argmax(d[:j + 1]))
    return SteeperResult(False, (float(lv[i]), float(lv[j])))


def gap_functional(f: TailIntensity | LaplaceMeasure, u: float, tol: float = 1e-8) -> float:
    """Probability that the first gap of the Poisson configuration exceeds u.

    Equals the integral of e^{-F(x-u)} against the intensity differential
    -dF(x); evaluated after the substitution t = F(x) as the integral over
    t > 0 of e^{-F(F^{-1}(t) - u)}, whose integrand is dominated by e^{-t}.
    """
    f = _coerce(f)
    if u < 0:
        raise ValueError("gap threshold must be nonnegative")
    if u == 0.0:
        return 1.0
    if f.laplace_backed and f.rho.n_atoms == 1:
        return float(np.exp(-f.rho.u[0] * u))
    t_hi = 40.0  # e^{-40} certified remainder past this level
    if f.laplace_backed:
        # integrate in x: e^{-F(x-u)} (-F'(x)) dx with the analytic derivative
        x_lo = float(f.inverse(t_hi))
        x_hi = float(f.inverse(TAIL_BUDGET))
        rho, off = f.rho, f.offset

        def integrand(x: np.ndarray) -> np.ndarray:
            dens = (rho.w * rho.u)[None, :] * np.exp(-np.outer(x - off, rho.u))
            return np.exp(-np.asarray(f.value(x - u))) * dens.sum(axis=1)

        return adaptive_gauss(integrand, x_lo, x_hi, tol=min(tol, QUAD_TOL))
    t_top = min(t_hi, float(f.fs[0]))
    if np.exp(-t_top) > tol:
        raise ValueError("empirical intensity too shallow to certify the gap integral")

    def integrand_t(t: np.ndarray) -> np.ndarray:
        return np.exp(-np.asarray(f.value(np.asarray(f.inverse(t)) - u)))

    # table-backed integrands carry interpolation kinks; hold them to the
    # contract tolerance rather than the analytic one
    return adaptive_gauss(integrand_t, TAIL_BUDGET, t_top, tol=tol, max_panels=16384)


def level_functional(f: TailIntensity | LaplaceMeasure, shape_w: Sequence[float],
                     shape_vals: Sequence[float], tol: float = 1e-8) -> float:
    """Integral over time of a tabulated shape applied to the intensity level.

    The shape is linearly interpolated on its level grid and must vanish at
    both ends of the table, which confines the integrand to a finite window.
    """
    f = _coerce(f)
    w = np.asarray(shape_w, dtype=float)
    v = np.asarray(shape_vals, dtype=float)
    if w.ndim != 1 or w.shape != v.shape or w.size < 3:
        raise ValueError("shape table needs matching 1-d arrays")
    if np.any(np.diff(w) <= 0) or np.any(w < 0):
        raise ValueError("shape grid must be nonnegative and increasing")
    if np.any(v < 0):
        raise ValueError("shape values must be nonnegative")
    if v[0] != 0.0 or v[-1] != 0.0:
        raise ValueError("shape must vanish at both table ends (divergent integral otherwise)")
    pos = np.nonzero(v > 0)[0]
    if pos.size == 0:
        return 0.0
    w_lo = w[pos[0] - 1] if pos[0] > 0 else w[0]
    w_hi = w[pos[-1] + 1] if pos[-1] + 1 < w.size else w[-1]
    if w_lo <= 0:
        raise ValueError("shape support must stay away from level zero")
    t_lo = float(f.inverse(w_hi))
    t_hi = float(f.inverse(w_lo))

    def integrand(t: np.ndarray) -> np.ndarray:
        return np.interp(np.asarray(f.value(t)), w, v, left=0.0, right=0.0)

    return adaptive_gauss(integrand, t_lo, t_hi, tol=tol, max_panels=16384)


def expected_gap(f: TailIntensity | LaplaceMeasure, n: int, tol: float = 1e-9) -> float:
    """Mean gap between ranks n and n+1 of the Poisson configuration.

    Integrates F^n e^{-F} / n! over time; the range is chosen so the
    discarded tails contribute provably less than the tolerance.
    """
    f = _coerce(f)
    if n < 1:
        raise ValueError("rank must be a positive integer")
    rate = f.min_rate
    if rate <= 0:
        raise ValueError("intensity does not decay; the gap integral diverges")
    f_hi = n + 40.0 * np.sqrt(n + 1.0) + 40.0
    f_lo = 10.0 ** (-12.0 / n)
    t_lo = float(f.inverse(f_hi))
    t_hi = float(f.inverse(f_lo))
    log_nfac = float(gammaln(n + 1))

    def integrand(t: np.ndarray) -> np.ndarray:
        fv = np.asarray(f.value(t))
        return np.exp(n * np.log(fv) - fv - log_nfac)

    val = adaptive_gauss(integrand, t_lo, t_hi, tol=min(tol, QUAD_TOL))
    remainder = f_lo ** n / (np.exp(log_nfac) * n * rate)
    if remainder > tol:
        raise ArithmeticError("cannot certify the far-tail remainder of the gap integral")
    return val


def sample_poisson_from_intensity(f: TailIntensity, count: int, stream: StreamKey) -> np.ndarray:
    """Top `count` points of the Poisson process with expected count F above x.

    The k-th point is F^{-1}(Gamma_k) for unit-rate arrival times Gamma_k.
    """
    rng = generator(stream)
    arrivals = np.cumsum(rng.exponential(size=count))
    return np.asarray(f.inverse(arrivals), dtype=float)


def random_corpus(n_measures: int, stream: StreamKey, *, n_atoms: tuple[int, int] = (2, 6),
                  u_range: tuple[float, float] = (0.05, 4.0),
                  min_weight: float = 1e-3) -> list[LaplaceMeasure]:
    """Normalized random atomic measures with every atom carrying real mass.

    Used by the monotonicity and contraction checks; the rejection loop keeps
    only draws whose post-normalization weights all stay above min_weight.
    """
    rng = generator(stream)
    out: list[LaplaceMeasure] = []
    attempts = 0
    while len(out) < n_measures:
        attempts += 1
        if attempts > 100 * n_measures:
            raise RuntimeError("corpus rejection loop failed to converge")
        k = int(rng.integers(n_atoms[0], n_atoms[1] + 1))
        u = np.sort(rng.uniform(*u_range, size=k))
        if np.any(np.diff(u) < 1e-3):
            continue
        w = np.exp(rng.uniform(np.log(0.05), np.log(20.0), size=k))
        try:
            rho = normalize(LaplaceMeasure(u, w))
        except (ValueError, ArithmeticError):
            continue
        if rho.w.min() < min_weight:
            continue
        out.append(rho)
    return out


def write_measure_csv(rho: LaplaceMeasure, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["u", "w"])
        for u, w in zip(rho.u, rho.w):
            writer.writerow([fmt17(u), fmt17(w)])


def read_measure_csv(path: str) -> LaplaceMeasure:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["u", "w"]:
        raise ValueError("expected a CSV with header u,w")
    us = np.array([float(r[0]) for r in rows[1:]])
    ws = np.array([float(r[1]) for r in rows[1:]])
    return LaplaceMeasure(us, ws)
