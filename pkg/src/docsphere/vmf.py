"""Von Mises-Fisher distribution on the unit sphere S^{p-1}.

Density  f(x; mu, kappa) = c_p(kappa) * exp(kappa * x.mu)  with

    c_p(kappa) = kappa^{p/2-1} / ((2*pi)^{p/2} * I_{p/2-1}(kappa)),

where I_nu is the modified Bessel function of the first kind. Everything
here works in the log domain so that p ~ 100 and kappa up to 1e3 stay far
from overflow. Sampling uses Wood's rejection scheme, which needs no
normalization constant at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

# Supported envelope for the Bessel evaluation.
MAX_ORDER = 500.0
MAX_ARGUMENT = 1e6

# Branch selection: power series below the crossover, asymptotic above.
# Within the asymptotic branch, Olver's large-order uniform expansion is
# accurate once nu is moderately large; below that the large-argument
# (Hankel) expansion converges because x > 20 >= nu there.
_OLVER_MIN_ORDER = 10.0
_SERIES_TOL_NATS = 41.0  # stop once terms fall ~e^-41 below the peak


@dataclass(frozen=True)
class LogBesselResult:
    value: float
    method: str  # "series" or "asymptotic"


@dataclass(frozen=True)
class VmfParams:
    mu: np.ndarray
    kappa: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        object.__setattr__(self, "mu", mu)
        if mu.ndim != 1 or mu.shape[0] < 2:
            raise ValueError("mu must be a vector in R^p with p >= 2")
        if abs(np.linalg.norm(mu) - 1.0) > 1e-9:
            raise ValueError("mu must be a unit vector (tolerance 1e-9)")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


def _log_bessel_series(nu: float, x: float) -> float:
    """Ascending series sum_k (x/2)^{nu+2k} / (k! Gamma(nu+k+1)), log-summed.

    All terms are positive, so a streaming log-sum-exp with no cancellation
    gives near machine precision for any (nu, x); cost grows ~linearly in x.
    """
    log_half_x = math.log(0.5 * x)
    peak = -math.inf
    acc = 0.0  # sum of exp(log_term - peak)
    k = 0
    while True:
        log_term = (nu + 2 * k) * log_half_x - math.lgamma(k + 1) - math.lgamma(nu + k + 1)
        if log_term > peak:
            acc = acc * math.exp(peak - log_term) + 1.0
            peak = log_term
        else:
            acc += math.exp(log_term - peak)
            if peak - log_term > _SERIES_TOL_NATS:
                break
        k += 1
        if k > 100000:  # unreachable inside the envelope
            raise RuntimeError("Bessel series failed to converge")
    return peak + math.log(acc)


def _log_bessel_hankel(nu: float, x: float) -> float:
    """Large-argument expansion e^x/sqrt(2 pi x) * sum_k (-1)^k a_k(nu)/x^k.

    Asymptotic: terms are summed until they stop decreasing or become
    negligible. Adequate for nu < ~16 once x > 20.
    """
    four_nu_sq = 4.0 * nu * nu
    total = 1.0
    term = 1.0
    prev_abs = math.inf
    k = 0
    while True:
        factor = -(four_nu_sq - (2 * k + 1) ** 2) / (8.0 * (k + 1) * x)
        term *= factor
        k += 1
        # Terms may grow while 2k+1 < 2 nu, then shrink to the optimal
        # truncation point (~e^{-2x} relative), then diverge. Sum through
        # the growth phase; stop at the global minimum.
        if (abs(term) >= prev_abs and 2 * k + 1 > 2.0 * nu) or k > 300:
            break
        total += term
        prev_abs = abs(term)
        if abs(term) < 1e-17 * abs(total):
            break
    return x - 0.5 * math.log(2.0 * math.pi * x) + math.log(total)


def _olver_polynomials(max_k: int):
    """Coefficient tables of the polynomials u_k(t) in Olver's uniform
    large-order expansion, built exactly from the recurrence

        u_{k+1}(t) = t^2 (1 - t^2) u_k'(t) / 2 + (1/8) int_0^t (1 - 5 s^2) u_k(s) ds.
    """
    polys = [[Fraction(1)]]  # u_0 = 1; coefficient i multiplies t^i
    for _ in range(max_k):
        u = polys[-1]
        # t^2 (1 - t^2) u'(t) / 2
        part1 = [Fraction(0)] * (len(u) + 3)
        for i, coef in enumerate(u):
            if i == 0:
                continue
            part1[i + 1] += Fraction(i, 2) * coef
            part1[i + 3] -= Fraction(i, 2) * coef
        # (1/8) int_0^t (1 - 5 s^2) u(s) ds
        part2 = [Fraction(0)] * (len(u) + 3)
        for i, coef in enumerate(u):
            part2[i + 1] += coef / Fraction(8 * (i + 1))
            part2[i + 3] -= Fraction(5, 8) * coef / Fraction(i + 3)
        size = max(len(part1), len(part2))
        part1 += [Fraction(0)] * (size - len(part1))
        part2 += [Fraction(0)] * (size - len(part2))
        polys.append([a + b for a, b in zip(part1, part2)])
    return [np.array([float(c) for c in poly]) for poly in polys]


_OLVER_U = _olver_polynomials(12)


def _log_bessel_olver(nu: float, x: float) -> float:
    """Olver's uniform large-order expansion of I_nu(nu z), z = x/nu."""
    z = x / nu
    root = math.hypot(1.0, z)  # sqrt(1 + z^2)
    eta = root + math.log(z / (1.0 + root))
    t = 1.0 / root
    powers = np.power(t, np.arange(len(_OLVER_U[0]) + 3 * (len(_OLVER_U) - 1)))
    series = 0.0
    for k, poly in enumerate(_OLVER_U):
        u_k = float(np.dot(poly, powers[: len(poly)]))
        series += u_k / nu**k
    return nu * eta - 0.5 * math.log(2.0 * math.pi * nu) - 0.5 * math.log(root) + math.log(series)


def log_bessel_i(nu: float, x: float) -> LogBesselResult:
    """log I_nu(x) for nu >= 0, x > 0 within the supported envelope.

    Power series for x <= max(20, nu); asymptotic expansion otherwise
    (uniform large-order form when nu is large enough, large-argument form
    when the order is small). Relative error < 1e-8 inside the envelope.
    """
    nu = float(nu)
    x = float(x)
    if nu < 0:
        raise ValueError("order nu must be >= 0")
    if not x > 0:
        raise ValueError("argument x must be > 0")
    if nu > MAX_ORDER or x > MAX_ARGUMENT:
        raise ValueError(
            f"(nu={nu}, x={x}) outside supported envelope "
            f"(nu <= {MAX_ORDER}, x <= {MAX_ARGUMENT})"
        )
    if x <= max(20.0, nu):
        return LogBesselResult(_log_bessel_series(nu, x), "series")
    if nu >= _OLVER_MIN_ORDER:
        return LogBesselResult(_log_bessel_olver(nu, x), "asymptotic")
    return LogBesselResult(_log_bessel_hankel(nu, x), "asymptotic")


def log_norm_const(p: int, kappa: float) -> float:
    """log c_p(kappa) of the vMF density on S^{p-1}."""
    if p < 2:
        raise ValueError("dimension p must be >= 2")
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    half_p = 0.5 * p
    return (
        (half_p - 1.0) * math.log(kappa)
        - half_p * math.log(2.0 * math.pi)
        - log_bessel_i(half_p - 1.0, kappa).value
    )


def log_density(params: VmfParams, x: np.ndarray) -> float:
    """Log density at a unit vector x."""
    x = np.asarray(x, dtype=np.float64)
    if abs(np.linalg.norm(x) - 1.0) > 1e-6:
        raise ValueError("x must lie on the unit sphere (tolerance 1e-6)")
    return log_norm_const(params.dim, params.kappa) + params.kappa * float(x @ params.mu)


def mean_resultant_length(p: int, kappa: float) -> float:
    """A_p(kappa) = I_{p/2}(kappa) / I_{p/2-1}(kappa), the expected dot
    product of a draw with the mean direction; strictly inside (0, 1)."""
    if p < 2:
        raise ValueError("dimension p must be >= 2")
    half_p = 0.5 * p
    value = math.exp(log_bessel_i(half_p, kappa).value - log_bessel_i(half_p - 1.0, kappa).value)
    return value


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _sample_weights(kappa: float, p: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Marginal of x.mu under vMF via Wood's rejection scheme.

    The envelope parameter b below is the numerically stable form of
    (-2 kappa + sqrt(4 kappa^2 + (p-1)^2)) / (p-1).
    """
    dim = p - 1
    b = dim / (math.sqrt(4.0 * kappa * kappa + dim * dim) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + dim * math.log(1.0 - x0 * x0)

    out = np.empty(n, dtype=np.float64)
    filled = 0
    while filled < n:
        m = max(32, int(1.3 * (n - filled)) + 8)
        z = rng.beta(0.5 * dim, 0.5 * dim, size=m)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.random(m)
        ok = kappa * w + dim * np.log1p(-x0 * w) - c >= np.log(u)
        accepted = w[ok]
        take = min(len(accepted), n - filled)
        out[filled:filled + take] = accepted[:take]
        filled += take
    return out


def _tangent_directions(mu: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform unit vectors orthogonal to mu."""
    p = mu.shape[0]
    v = rng.standard_normal((n, p))
    v -= np.outer(v @ mu, mu)
    norms = np.linalg.norm(v, axis=1)
    bad = norms < 1e-12
    while np.any(bad):  # essentially never for p >= 2
        v[bad] = rng.standard_normal((int(bad.sum()), p))
        v[bad] -= np.outer(v[bad] @ mu, mu)
        norms[bad] = np.linalg.norm(v[bad], axis=1)
        bad = norms < 1e-12
    return v / norms[:, None]


def sample(params: VmfParams, n: int, seed) -> np.ndarray:
    """Draw n i.i.d. unit vectors from vMF(mu, kappa).

    Wood (1994) rejection sampling: the component w along mu comes from the
    marginal, the orthogonal part is uniform on the tangent sphere, and the
    draw is w * mu + sqrt(1 - w^2) * v. Deterministic given the seed.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = _as_rng(seed)
    if n == 0:
        return np.zeros((0, params.dim), dtype=np.float64)
    w = _sample_weights(params.kappa, params.dim, n, rng)
    v = _tangent_directions(params.mu, n, rng)
    return w[:, None] * params.mu[None, :] + np.sqrt(np.maximum(0.0, 1.0 - w * w))[:, None] * v
