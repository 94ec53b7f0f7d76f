"""Model ingredients for the collision dynamics.

This module owns everything the generator is built from: the radial
collision density, the confining potential, the state-dependent jump
rate, and the geometric primitives the coupled jumps use (norm
truncation, Householder reflection, overlap/residual densities).

All admissible collision densities are radial, bounded, strictly
positive and non-increasing in the radius.  Those properties are what
make the reflection construction and the overlap identities below
valid, so they are enforced at construction time rather than assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate, special

from .exprrate import compile_rate_expression

GAUSSIAN = "standard_gaussian"
HEAVY_TAIL = "heavy_tail"
STRETCHED_EXP = "stretched_exp"

_DENSITY_KINDS = (GAUSSIAN, HEAVY_TAIL, STRETCHED_EXP)


class ModelError(ValueError):
    """An ingredient violates its admissibility conditions."""


def _as_vector(z, name="argument"):
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.size < 1:
        raise ModelError(f"{name} must be a 1-D vector, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ModelError(f"{name} contains non-finite entries")
    return z


def truncate(z, kappa):
    """Cap ``z`` at norm ``kappa`` keeping its direction; 0 maps to 0.

    Returns a vector of norm ``min(|z|, kappa)`` that is a nonnegative
    multiple of ``z``.
    """
    if not (math.isfinite(kappa) and kappa > 0):
        raise ModelError("kappa must be positive and finite")
    z = _as_vector(z, "z")
    nz = float(np.linalg.norm(z))
    if nz == 0.0:
        return np.zeros_like(z)
    if nz <= kappa:
        return z.copy()
    return (kappa / nz) * z


def reflect(axis, u):
    """Householder reflection of ``u`` across the hyperplane normal to ``axis``.

    No matrix is materialised: for ``axis != 0`` this is
    ``u - 2 <u, e> e`` with ``e = axis/|axis|``; for ``axis == 0`` the
    map degenerates to ``-u``.
    """
    axis = np.asarray(axis, dtype=float)
    u = np.asarray(u, dtype=float)
    if axis.shape != u.shape[-1:] and axis.shape != u.shape:
        raise ModelError(
            f"axis and u must have equal length, got {axis.shape} vs {u.shape}"
        )
    na = float(np.linalg.norm(axis))
    if na == 0.0:
        return -u
    e = axis / na
    return u - 2.0 * (u @ e)[..., None] * e if u.ndim > 1 else u - 2.0 * float(u @ e) * e


@dataclass(frozen=True)
class PhaseState:
    """A point (x, v) in position-velocity space."""

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = _as_vector(self.x, "x")
        v = _as_vector(self.v, "v")
        if x.shape != v.shape:
            raise ModelError("x and v must have identical length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def d(self) -> int:
        return self.x.size

    def __eq__(self, other):
        if not isinstance(other, PhaseState):
            return NotImplemented
        return np.array_equal(self.x, other.x) and np.array_equal(self.v, other.v)


def _sphere_area(d: int) -> float:
    # surface measure of the unit sphere in R^d
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass(frozen=True)
class Density:
    """Radial collision density on R^d.

    Supported kinds (``param`` is the tail/shape exponent):

    * ``standard_gaussian``: (2 pi)^(-d/2) exp(-|u|^2 / 2)
    * ``heavy_tail``:        c (1 + |u|)^(-d - param), param > 0
    * ``stretched_exp``:     c exp(-|u|^param),        param > 0

    Normalizers, radial laws and absolute moments are closed-form, so
    exact sampling (no MCMC) and quadrature cross-checks are available
    for every kind.

    ``moment_order_beta`` is the default order used by the Lyapunov
    pipeline: 2 whenever the second moment is finite, otherwise half of
    the heavy tail index.
    """

    kind: str
    d: int
    param: Optional[float] = None
    normalizer: float = field(init=False)
    moment_order_beta: float = field(init=False)
    m_beta: float = field(init=False)

    def __post_init__(self):
        if self.kind not in _DENSITY_KINDS:
            raise ModelError(f"unknown density kind {self.kind!r}")
        if self.d < 1:
            raise ModelError("dimension must be >= 1")
        if self.kind == GAUSSIAN:
            if self.param is not None:
                raise ModelError("standard_gaussian takes no parameter")
        else:
            if self.param is None or not (self.param > 0):
                raise ModelError(f"{self.kind} requires a positive parameter")
        object.__setattr__(self, "normalizer", math.exp(self._log_normalizer()))
        order = 2.0
        if self.kind == HEAVY_TAIL and self.param <= 2.0:
            order = self.param / 2.0
        object.__setattr__(self, "moment_order_beta", order)
        object.__setattr__(self, "m_beta", self.moment(order))

    # -- pointwise evaluation ------------------------------------------------

    def _log_normalizer(self) -> float:
        d = self.d
        if self.kind == GAUSSIAN:
            return -0.5 * d * math.log(2.0 * math.pi)
        log_area = math.log(_sphere_area(d))
        if self.kind == HEAVY_TAIL:
            b = self.param
            return -log_area - (math.lgamma(d) + math.lgamma(b) - math.lgamma(d + b))
        # stretched exponential
        b = self.param
        return math.log(b) - log_area - math.lgamma(d / b)

    def log_pdf(self, u):
        u = np.asarray(u, dtype=float)
        r = np.linalg.norm(u, axis=-1)
        return self.log_pdf_radius(r)

    def log_pdf_radius(self, r):
        """log phi at radius r (phi is radial)."""
        r = np.asarray(r, dtype=float)
        logc = self._log_normalizer()
        if self.kind == GAUSSIAN:
            return logc - 0.5 * r * r
        if self.kind == HEAVY_TAIL:
            return logc - (self.d + self.param) * np.log1p(r)
        return logc - r**self.param

    def pdf(self, u):
        return np.exp(self.log_pdf(u))

    # -- radial law ----------------------------------------------------------

    def radial_pdf(self, r):
        """Density of |u| for u ~ phi."""
        r = np.asarray(r, dtype=float)
        d = self.d
        with np.errstate(divide="ignore"):
            base = (d - 1) * np.log(r) if d > 1 else np.zeros_like(r)
        if self.kind == GAUSSIAN:
            out = base - 0.5 * r * r - math.lgamma(d / 2.0) - (d / 2.0 - 1.0) * math.log(2.0)
        elif self.kind == HEAVY_TAIL:
            b = self.param
            out = (
                base
                - (d + b) * np.log1p(r)
                - (math.lgamma(d) + math.lgamma(b) - math.lgamma(d + b))
            )
        else:
            b = self.param
            out = math.log(b) + base - r**b - math.lgamma(d / b)
        return np.where(r > 0, np.exp(out), 0.0 if d > 1 else np.exp(out))

    def radial_cdf(self, r):
        """P(|u| <= r) for u ~ phi."""
        r = np.maximum(np.asarray(r, dtype=float), 0.0)
        d = self.d
        if self.kind == GAUSSIAN:
            return special.gammainc(d / 2.0, 0.5 * r * r)
        if self.kind == HEAVY_TAIL:
            return special.betainc(d, self.param, r / (1.0 + r))
        return special.gammainc(d / self.param, r**self.param)

    def moment(self, order: float) -> float:
        """Absolute moment E|u|^order, +inf when divergent."""
        if order < 0:
            raise ModelError("moment order must be nonnegative")
        if order == 0:
            return 1.0
        d = self.d
        if self.kind == GAUSSIAN:
            return math.exp(
                0.5 * order * math.log(2.0) + math.lgamma((d + order) / 2.0) - math.lgamma(d / 2.0)
            )
        if self.kind == HEAVY_TAIL:
            b = self.param
            if order >= b:
                return math.inf
            return math.exp(
                math.lgamma(d + order)
                + math.lgamma(b - order)
                - math.lgamma(d)
                - math.lgamma(b)
            )
        b = self.param
        return math.exp(math.lgamma((d + order) / b) - math.lgamma(d / b))

    # -- sampling (exact, per kind) -------------------------------------------

    def sample(self, rng: np.random.Generator, n: Optional[int] = None) -> np.ndarray:
        """Draw from phi: shape (d,) for n=None, else (n, d)."""
        size = 1 if n is None else n
        if self.kind == GAUSSIAN:
            out = rng.standard_normal((size, self.d))
            return out[0] if n is None else out
        # radius via its exact transform, direction uniform on the sphere
        if self.kind == HEAVY_TAIL:
            y = rng.beta(self.d, self.param, size)
            radius = y / (1.0 - y)
        else:
            g = rng.standard_gamma(self.d / self.param, size)
            radius = g ** (1.0 / self.param)
        direction = rng.standard_normal((size, self.d))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        out = radius[:, None] * direction
        return out[0] if n is None else out

    # -- overlap / residual densities -----------------------------------------

    def psi(self, xi, u):
        """Overlap density phi(u) ^ phi(u + xi) (pointwise minimum)."""
        u = np.asarray(u, dtype=float)
        xi = np.asarray(xi, dtype=float)
        return np.exp(np.minimum(self.log_pdf(u), self.log_pdf(u + xi)))

    def capital_psi(self, xi, u):
        """Residual density phi(u) - psi_xi(u); nonnegative."""
        return self.pdf(u) - self.psi(xi, u)

    def accept_ratio(self, xi, u):
        """min(1, phi(u+xi)/phi(u)) = psi_xi(u)/phi(u), computed in log space."""
        u = np.asarray(u, dtype=float)
        xi = np.asarray(xi, dtype=float)
        return np.exp(np.minimum(0.0, self.log_pdf(u + xi) - self.log_pdf(u)))


@dataclass(frozen=True)
class MCEstimate:
    """A Monte Carlo mean with its standard error."""

    value: float
    stderr: float
    n: int

    def within(self, target: float, n_sigma: float = 3.0, extra_err: float = 0.0) -> bool:
        return abs(self.value - target) <= n_sigma * math.hypot(self.stderr, extra_err)


def overlap_mc(
    density: Density, xi_norm: float, n_samples: int, rng: np.random.Generator
) -> MCEstimate:
    """Monte Carlo estimate of the overlap mass A(|xi|) = int phi ^ phi(.+xi).

    Importance-samples u ~ phi and averages the acceptance ratio
    min(1, phi(u+xi)/phi(u)); the estimate is dimension-free and lands
    in [0, 1].  By radiality only |xi| matters, so xi is taken along the
    first axis.
    """
    if n_samples < 1:
        raise ModelError("n_samples must be >= 1")
    if xi_norm < 0 or not math.isfinite(xi_norm):
        raise ModelError("xi_norm must be finite and nonnegative")
    if xi_norm == 0.0:
        return MCEstimate(1.0, 0.0, n_samples)
    xi = np.zeros(density.d)
    xi[0] = xi_norm
    u = density.sample(rng, n_samples)
    ratio = density.accept_ratio(xi, u)
    return MCEstimate(
        float(ratio.mean()),
        float(ratio.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else math.inf,
        n_samples,
    )


def overlap_quadrature(density: Density, xi_norm: float) -> tuple[float, float]:
    """Deterministic overlap mass A(|xi|), with an absolute error bound.

    For a radial non-increasing density, phi(u) ^ phi(u + xi) equals
    phi evaluated at the larger of |u|, |u + xi|, and splitting the
    integral at the mid-hyperplane gives the exact reduction

        A(s) = 2 P(u_1 <= -s/2),

    a marginal tail probability.  It is evaluated in closed form where
    available and otherwise by adaptive quadrature over the radial law,
    so it stays accurate far into the tail where plain Monte Carlo
    becomes uninformative.
    """
    if xi_norm < 0 or not math.isfinite(xi_norm):
        raise ModelError("xi_norm must be finite and nonnegative")
    if xi_norm == 0.0:
        return 1.0, 0.0
    s = xi_norm
    if density.kind == GAUSSIAN:
        val = float(2.0 * special.ndtr(-0.5 * s))
        return val, 1e-12 * val
    if density.d == 1:
        # A(s) = P(|u| >= s/2) in one dimension
        val = float(1.0 - density.radial_cdf(0.5 * s))
        return val, 1e-9 * val
    half = 0.5 * (density.d - 1)

    def integrand(r):
        t = min(1.0, (s / (2.0 * r)) ** 2)
        return (1.0 - special.betainc(0.5, half, t)) * float(density.radial_pdf(r))

    value, abserr = integrate.quad(
        integrand, 0.5 * s, np.inf, limit=400, epsabs=1e-300, epsrel=1e-10
    )
    return float(value), float(abserr)


@dataclass(frozen=True)
class OverlapConstants:
    """Certified overlap bounds over a radius grid.

    ``c_star`` lower-bounds the overlap mass A(alpha * min(r, kappa))
    over the grid, ``c_upper_star`` upper-bounds (1 - A)/r; both carry a
    safety margin (3 standard errors for the MC method, the quadrature
    error bound otherwise).
    """

    c_star: float
    c_upper_star: float
    alpha: float
    kappa: float
    grid: tuple
    method: str  # "mc" or "quadrature"

    def __iter__(self):
        return iter((self.c_star, self.c_upper_star))


def _check_overlap_grid(alpha, kappa, grid):
    if not (alpha > 0 and kappa > 0):
        raise ModelError("alpha and kappa must be positive")
    grid = [float(r) for r in grid]
    if not grid or any(not (0 < r <= kappa) for r in grid):
        raise ModelError("grid must be nonempty with radii in (0, kappa]")
    return grid


def estimate_overlap_constants(
    density: Density,
    alpha: float,
    kappa: float,
    grid,
    n_samples: int = 200_000,
    rng: Optional[np.random.Generator] = None,
) -> OverlapConstants:
    """Monte Carlo overlap constants with a 3-standard-error margin.

    Conservative on both sides: the lower overlap bound subtracts, the
    Lipschitz-type upper bound adds, three standard errors.  Useful at
    moderate radii; at radii where the overlap mass is far below the MC
    resolution, use :func:`overlap_constants_quadrature` instead.
    """
    grid = _check_overlap_grid(alpha, kappa, grid)
    rng = np.random.default_rng(0) if rng is None else rng
    c_star = math.inf
    c_upper = 0.0
    for r in grid:
        est = overlap_mc(density, alpha * min(r, kappa), n_samples, rng)
        c_star = min(c_star, est.value - 3.0 * est.stderr)
        c_upper = max(c_upper, (1.0 - est.value) / r + 3.0 * est.stderr / r)
    if not (c_star > 0):
        raise ModelError(
            "MC lower overlap bound is not positive at this grid; "
            "increase n_samples or use overlap_constants_quadrature"
        )
    return OverlapConstants(c_star, c_upper, alpha, kappa, tuple(grid), "mc")


def overlap_constants_quadrature(
    density: Density, alpha: float, kappa: float, grid
) -> OverlapConstants:
    """Overlap constants from the deterministic tail reduction.

    Same grid contract as :func:`estimate_overlap_constants`, but each
    overlap mass comes from :func:`overlap_quadrature`, whose error
    bound replaces the statistical margin.  This is the method of
    record for the contraction-rate pipeline, where truncation radii
    push the overlap far below any realistic MC resolution.
    """
    grid = _check_overlap_grid(alpha, kappa, grid)
    c_star = math.inf
    c_upper = 0.0
    for r in grid:
        val, err = overlap_quadrature(density, alpha * min(r, kappa))
        c_star = min(c_star, val - err)
        c_upper = max(c_upper, (1.0 - val) / r + err / r)
    if not (c_star > 0):
        raise ModelError("overlap mass vanished to quadrature precision on this grid")
    return OverlapConstants(c_star, c_upper, alpha, kappa, tuple(grid), "quadrature")


def default_overlap_grid(kappa: float, n: int = 24) -> np.ndarray:
    """Geometric radius grid on (0, kappa], densest near zero."""
    return kappa * np.geomspace(1e-3, 1.0, n)


# -- potentials ----------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticPotential:
    """U(x) = theta |x|^2 with gradient 2 theta x."""

    theta: float

    def __post_init__(self):
        if not (self.theta >= 0 and math.isfinite(self.theta)):
            raise ModelError("theta must be nonnegative and finite")

    kind = "quadratic"

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.theta * np.sum(x * x, axis=-1)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return 2.0 * self.theta * x

    def k_lipschitz(self, beta: float) -> float:
        """Constant K such that |beta z + grad U(x') - grad U(x)| <= K |z|."""
        return abs(2.0 * self.theta - beta)


@dataclass(frozen=True)
class CustomPotential:
    """User potential; requires a globally Lipschitz gradient.

    ``k_lipschitz_fn(beta)`` must return the displacement constant of
    the combined map beta*id - grad U, as needed by the contraction
    pipeline; it may be None when only simulation is wanted.
    """

    value_fn: Callable
    gradient_fn: Callable
    k_lipschitz_fn: Optional[Callable[[float], float]] = None

    kind = "custom"

    def value(self, x):
        return self.value_fn(np.asarray(x, dtype=float))

    def gradient(self, x):
        return self.gradient_fn(np.asarray(x, dtype=float))

    def k_lipschitz(self, beta: float) -> float:
        if self.k_lipschitz_fn is None:
            raise ModelError("custom potential lacks a k_lipschitz evaluator")
        return float(self.k_lipschitz_fn(beta))


Potential = Union[QuadraticPotential, CustomPotential]


# -- jump rates ------------------------------------------------------------------


@dataclass(frozen=True)
class JumpRate:
    """State-dependent collision rate J(x, v) with certified bounds.

    ``lambda1 <= J <= lambda2`` everywhere and J is Lipschitz with
    constant ``lambda_lip`` in |x - x'| + |v - v'|.  The bounds are part
    of the contract: thinning correctness depends on lambda2 being a
    true majorant, so constructors verify them (interval arithmetic for
    expression rates, spot checks on random probes for everything
    else).
    """

    fn: Callable
    lambda1: float
    lambda2: float
    lambda_lip: float
    kind: str = "custom"
    expr: Optional[str] = None

    def __post_init__(self):
        if not (0 < self.lambda1 <= self.lambda2 and math.isfinite(self.lambda2)):
            raise ModelError("need 0 < lambda1 <= lambda2 < inf")
        if not (self.lambda_lip >= 0 and math.isfinite(self.lambda_lip)):
            raise ModelError("lambda_lip must be finite and nonnegative")

    def __call__(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return self.fn(x, v)

    def spot_check(self, d: int, rng: np.random.Generator, n: int = 200, scale: float = 5.0):
        """Probe the declared bounds on random points and pairs; raise on violation."""
        xs = rng.normal(scale=scale, size=(n, d))
        vs = rng.normal(scale=scale, size=(n, d))
        vals = np.asarray(self.fn(xs, vs), dtype=float)
        tol = 1e-9 * max(1.0, self.lambda2)
        if vals.min() < self.lambda1 - tol or vals.max() > self.lambda2 + tol:
            raise ModelError(
                f"rate violates declared bounds [{self.lambda1}, {self.lambda2}] "
                f"on probes: range [{vals.min()}, {vals.max()}]"
            )
        xs2 = xs + rng.normal(scale=1.0, size=(n, d))
        vs2 = vs + rng.normal(scale=1.0, size=(n, d))
        vals2 = np.asarray(self.fn(xs2, vs2), dtype=float)
        dist = np.linalg.norm(xs - xs2, axis=1) + np.linalg.norm(vs - vs2, axis=1)
        bad = np.abs(vals - vals2) > self.lambda_lip * dist + tol
        if bad.any():
            raise ModelError("rate violates declared Lipschitz constant on probe pairs")


def constant_rate(lam: float) -> JumpRate:
    if not (lam > 0 and math.isfinite(lam)):
        raise ModelError("constant rate must be positive and finite")

    def fn(x, v):
        x = np.asarray(x, dtype=float)
        if x.ndim > 1:
            return np.full(x.shape[0], lam)
        return lam

    return JumpRate(fn, lam, lam, 0.0, kind="constant")


def sinusoidal_rate(lambda1: float, lambda2: float) -> JumpRate:
    """J = (l1+l2)/2 + (l2-l1)/2 * sin(|x| + |v|); hits both bounds."""
    if not (0 < lambda1 <= lambda2):
        raise ModelError("need 0 < lambda1 <= lambda2")
    base = 0.5 * (lambda1 + lambda2)
    amp = 0.5 * (lambda2 - lambda1)

    def fn(x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return base + amp * np.sin(np.linalg.norm(x, axis=-1) + np.linalg.norm(v, axis=-1))

    # | |x|-|x'| | <= |x-x'| and sin is 1-Lipschitz, so amp bounds the slope
    return JumpRate(fn, lambda1, lambda2, amp, kind="sinusoidal_bounded")


def expression_rate(
    expr: str,
    declared: Optional[tuple[float, float, float]] = None,
) -> JumpRate:
    """Rate from a tiny arithmetic expression over |x|, |v|, sin, cos.

    Bounds are derived by interval evaluation of the expression over
    |x|, |v| in [0, inf); when ``declared`` = (lambda1, lambda2,
    lambda_lip) is given it is validated against (must not be tighter
    than) the interval bounds.
    """
    compiled = compile_rate_expression(expr)
    lo, hi, lip = compiled.lambda1, compiled.lambda2, compiled.lambda_lip
    if not (lo > 0):
        raise ModelError(f"expression rate is not certified positive (lower bound {lo})")
    if not (math.isfinite(hi) and math.isfinite(lip)):
        raise ModelError("expression rate is not certified bounded/Lipschitz")
    if declared is not None:
        d1, d2, dl = declared
        tol = 1e-12 * max(1.0, hi)
        if d1 > lo + tol or d2 < hi - tol or dl < lip - tol:
            raise ModelError(
                f"declared bounds ({d1}, {d2}, {dl}) are tighter than the "
                f"certified interval bounds ({lo}, {hi}, {lip})"
            )
        lo, hi, lip = d1, d2, dl

    def fn(x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return compiled.evaluate(np.linalg.norm(x, axis=-1), np.linalg.norm(v, axis=-1))

    return JumpRate(fn, lo, hi, lip, kind="custom", expr=expr)


# -- model bundle ----------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """The full generator: dimension, friction, potential, rate, density.

    Immutable after construction and safe to share across workers; all
    randomized operations take an explicit generator argument.
    """

    d: int
    gamma: float
    potential: Potential
    rate: JumpRate
    density: Density

    def __post_init__(self):
        if self.d < 1:
            raise ModelError("dimension must be >= 1")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ModelError("friction gamma must be positive and finite")
        if self.density.d != self.d:
            raise ModelError("density dimension does not match model dimension")
        self.rate.spot_check(self.d, np.random.default_rng(12345))

    @property
    def theta(self) -> Optional[float]:
        return self.potential.theta if isinstance(self.potential, QuadraticPotential) else None
