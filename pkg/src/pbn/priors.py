"""Scalar maximum-entropy priors and their calculus.

Each prior couples four scalar functions that the rest of the package
builds on:

* ``cgf``              k(a)  = log E[exp(a*x)] under the prior,
* ``activation``       k'(a), the mean of the exponentially tilted prior,
* ``activation_deriv`` k''(a), its variance (always strictly positive),
* ``cgf_third_deriv``  k'''(a), needed for curvature gradients.

Three priors are provided:

==================  =============  =======================  ==================
kind                support        density                  activation range
==================  =============  =======================  ==================
gaussian            (-inf, inf)    prod N(x_i)              (-inf, inf)
truncated_gaussian  (0, inf)       prod 2 N(x_i), x_i > 0   (0, inf)
uniform             (0, 1)         1                        (0, 1)
==================  =============  =======================  ==================

where N is the standard normal pdf.  Supports are open: a boundary value
is out of support.  The activation of each prior is the nonlinearity
whose output range equals the support of the prior, so the activation
tags ``linear``, ``tg`` and ``ted`` map back onto the same three objects.

Numerical notes.  The truncated-Gaussian inverse Mills ratio
r(a) = N(a)/Phi(a) is evaluated through the scaled complementary error
function for a < 0, which stays accurate far into the tail where Phi(a)
underflows (direct evaluation dies near a = -38).  The uniform-prior
functions switch to Taylor series around a = 0 where the closed forms
cancel catastrophically.  All four functions of every prior are finite
and NaN-free at least on [-700, 700].
"""

import math

import numpy as np
from scipy import special

from .errors import DomainError, PbnError

LOG_2PI = math.log(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def _npdf(a):
    return np.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)


def _elementwise(func):
    """Lift an ndarray implementation to accept scalars transparently."""

    def wrapped(self, a):
        arr = np.atleast_1d(np.asarray(a, dtype=np.float64))
        out = func(self, arr)
        return float(out[0]) if np.ndim(a) == 0 else out

    return wrapped


def _bracketed_newton(f, fprime, y, lo, hi, *, max_iter=140, tol=1e-13):
    """Solve f(x) = y for increasing f with f(lo) < y < f(hi), elementwise.

    Newton steps are accepted only while they stay inside the current
    bracket; otherwise the iterate falls back to bisection, so
    convergence is guaranteed.
    """
    y = np.asarray(y, dtype=np.float64)
    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), y.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), y.shape).copy()
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        fx = f(x) - y
        if np.all(np.abs(fx) <= tol * (1.0 + np.abs(y))):
            return x
        below = fx < 0.0
        lo = np.where(below, x, lo)
        hi = np.where(below, hi, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = fx / fprime(x)
            xn = x - step
        bad = ~np.isfinite(xn) | (xn <= lo) | (xn >= hi)
        x = np.where(bad, 0.5 * (lo + hi), xn)
    fx = f(x) - y
    if np.all(np.abs(fx) <= 1e-9 * (1.0 + np.abs(y))):
        return x
    raise PbnError("activation inverse did not converge")


class ScalarPrior:
    """Interface shared by the three maximum-entropy priors."""

    kind = ""
    activation_tag = ""

    # -- scalar calculus ------------------------------------------------
    def cgf(self, a):
        raise NotImplementedError

    def activation(self, a):
        raise NotImplementedError

    def activation_deriv(self, a):
        raise NotImplementedError

    def cgf_third_deriv(self, a):
        raise NotImplementedError

    def activation_inverse(self, y):
        raise NotImplementedError

    # -- densities ------------------------------------------------------
    def log_density(self, x):
        """Log prior density of a vector; -inf if any element leaves the support."""
        raise NotImplementedError

    def grad_log_density(self, x):
        raise NotImplementedError

    def in_support(self, x):
        raise NotImplementedError

    def sample(self, rng, n):
        """Draw n iid samples; used by tests and synthesis checks."""
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} kind={self.kind!r}>"


class GaussianPrior(ScalarPrior):
    """Standard normal prior on the whole real line; activation is identity."""

    kind = "gaussian"
    activation_tag = "linear"

    @_elementwise
    def cgf(self, a):
        return 0.5 * a * a

    @_elementwise
    def activation(self, a):
        return a.copy()

    @_elementwise
    def activation_deriv(self, a):
        return np.ones_like(a)

    @_elementwise
    def cgf_third_deriv(self, a):
        return np.zeros_like(a)

    def activation_inverse(self, y):
        arr = np.atleast_1d(np.asarray(y, dtype=np.float64))
        if not np.all(np.isfinite(arr)):
            raise DomainError("linear activation inverse requires finite values")
        return float(arr[0]) if np.ndim(y) == 0 else arr.copy()

    def log_density(self, x):
        x = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            return -np.inf
        return float(-0.5 * x.size * LOG_2PI - 0.5 * np.dot(x.ravel(), x.ravel()))

    def grad_log_density(self, x):
        return -np.asarray(x, dtype=np.float64)

    def in_support(self, x):
        return bool(np.all(np.isfinite(x)))

    def sample(self, rng, n):
        return rng.standard_normal(n)


class TruncatedGaussianPrior(ScalarPrior):
    """Standard normal truncated to (0, inf): density 2 N(x) for x > 0.

    cgf  k(a) = a^2/2 + log(2 Phi(a))
    k'(a)     = a + r(a)            with r = N/Phi (inverse Mills ratio)
    k''(a)    = 1 - r(a) (a + r(a))
    k'''(a)   = r(a) [(a + r(a)) (a + 2 r(a)) - 1]
    """

    kind = "truncated_gaussian"
    activation_tag = "tg"

    @staticmethod
    def _mills(a):
        """r(a) = N(a)/Phi(a), stable on the whole line."""
        out = np.empty_like(a)
        neg = a < 0.0
        # Phi(a) = 0.5 exp(-a^2/2) erfcx(-a/sqrt(2)) for a < 0, so the
        # Gaussians cancel exactly and nothing underflows.
        out[neg] = _SQRT_2_OVER_PI / special.erfcx(-a[neg] / _SQRT2)
        pos = ~neg
        out[pos] = _npdf(a[pos]) / special.ndtr(a[pos])
        return out

    @_elementwise
    def cgf(self, a):
        out = np.empty_like(a)
        tail = a < -5.0
        # a^2/2 + log(2 Phi(a)) == log erfcx(-a/sqrt(2)) identically.
        out[tail] = np.log(special.erfcx(-a[tail] / _SQRT2))
        rest = ~tail
        out[rest] = 0.5 * a[rest] * a[rest] + np.log(2.0 * special.ndtr(a[rest]))
        return out

    @_elementwise
    def activation(self, a):
        return a + self._mills(a)

    @_elementwise
    def activation_deriv(self, a):
        r = self._mills(a)
        return 1.0 - r * (a + r)

    @_elementwise
    def cgf_third_deriv(self, a):
        r = self._mills(a)
        return r * ((a + r) * (a + 2.0 * r) - 1.0)

    def activation_inverse(self, y):
        arr = np.atleast_1d(np.asarray(y, dtype=np.float64))
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
            raise DomainError("tg activation inverse requires values in (0, inf)")
        # lambda(-1/y) < y < lambda(y + 1) holds for every y > 0 (Mills
        # ratio bound r(-t) < t + 1/t), so the bracket needs no search.
        lo = -1.0 / arr
        hi = arr + 1.0
        act = lambda v: np.atleast_1d(self.activation(v))
        der = lambda v: np.atleast_1d(self.activation_deriv(v))
        out = _bracketed_newton(act, der, arr, lo, hi)
        return float(out[0]) if np.ndim(y) == 0 else out

    def log_density(self, x):
        x = np.asarray(x, dtype=np.float64)
        if not self.in_support(x):
            return -np.inf
        n = x.size
        return float(n * (math.log(2.0) - 0.5 * LOG_2PI) - 0.5 * np.dot(x.ravel(), x.ravel()))

    def grad_log_density(self, x):
        return -np.asarray(x, dtype=np.float64)

    def in_support(self, x):
        x = np.asarray(x)
        return bool(np.all(np.isfinite(x)) and np.all(x > 0.0))

    def sample(self, rng, n):
        return np.abs(rng.standard_normal(n))


class UniformPrior(ScalarPrior):
    """Uniform prior on (0, 1); the activation is the truncated-exponential mean.

    cgf  k(a) = log((e^a - 1)/a)
    k'(a)     = e^a/(e^a - 1) - 1/a
    k''(a)    = 1/a^2 - 1/(4 sinh^2(a/2))
    k'''(a)   = -2/a^3 + e^a (e^a + 1)/(e^a - 1)^3

    Each function switches to its Taylor series near a = 0 where the
    closed form loses all significant digits.
    """

    kind = "uniform"
    activation_tag = "ted"

    @_elementwise
    def cgf(self, a):
        out = np.empty_like(a)
        small = np.abs(a) < 5e-3
        s = a[small]
        out[small] = 0.5 * s + s * s / 24.0 - s**4 / 2880.0
        pos = (~small) & (a > 0.0)
        p = a[pos]
        out[pos] = p + np.log(-np.expm1(-p)) - np.log(p)
        neg = (~small) & (a < 0.0)
        m = a[neg]
        out[neg] = np.log(-np.expm1(m)) - np.log(-m)
        return out

    @_elementwise
    def activation(self, a):
        out = np.empty_like(a)
        small = np.abs(a) < 5e-3
        s = a[small]
        out[small] = 0.5 + s / 12.0 - s**3 / 720.0 + s**5 / 30240.0
        pos = (~small) & (a > 0.0)
        p = a[pos]
        out[pos] = 1.0 / (-np.expm1(-p)) - 1.0 / p
        neg = (~small) & (a < 0.0)
        m = a[neg]
        out[neg] = np.exp(m) / np.expm1(m) - 1.0 / m
        return out

    @_elementwise
    def activation_deriv(self, a):
        out = np.empty_like(a)
        small = np.abs(a) < 0.05
        s = a[small]
        out[small] = 1.0 / 12.0 - s * s / 240.0 + s**4 / 6048.0
        rest = ~small
        r = a[rest]
        with np.errstate(over="ignore"):
            sh = np.sinh(0.5 * r)
            out[rest] = 1.0 / (r * r) - 1.0 / (4.0 * sh * sh)
        return out

    @_elementwise
    def cgf_third_deriv(self, a):
        out = np.empty_like(a)
        small = np.abs(a) < 0.05
        s = a[small]
        out[small] = -s / 120.0 + s**3 / 1512.0 - s**5 / 28800.0
        pos = (~small) & (a > 0.0)
        p = a[pos]
        t = np.exp(-p)
        out[pos] = -2.0 / p**3 + t * (1.0 + t) / (-np.expm1(-p)) ** 3
        neg = (~small) & (a < 0.0)
        m = a[neg]
        t = np.exp(m)
        out[neg] = -2.0 / m**3 + t * (1.0 + t) / np.expm1(m) ** 3
        return out

    def activation_inverse(self, y):
        arr = np.atleast_1d(np.asarray(y, dtype=np.float64))
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise DomainError("ted activation inverse requires values in (0, 1)")
        # lambda(-1/y) < y and lambda(1/(1-y)) > y hold for all y in (0, 1).
        lo = -1.0 / arr
        hi = 1.0 / (1.0 - arr)
        act = lambda v: np.atleast_1d(self.activation(v))
        der = lambda v: np.atleast_1d(self.activation_deriv(v))
        out = _bracketed_newton(act, der, arr, lo, hi)
        return float(out[0]) if np.ndim(y) == 0 else out

    def log_density(self, x):
        if not self.in_support(x):
            return -np.inf
        return 0.0

    def grad_log_density(self, x):
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def in_support(self, x):
        x = np.asarray(x)
        return bool(np.all(np.isfinite(x)) and np.all(x > 0.0) and np.all(x < 1.0))

    def sample(self, rng, n):
        return rng.uniform(1e-12, 1.0 - 1e-12, n)


GAUSSIAN = GaussianPrior()
TRUNCATED_GAUSSIAN = TruncatedGaussianPrior()
UNIFORM = UniformPrior()

_PRIORS = {p.kind: p for p in (GAUSSIAN, TRUNCATED_GAUSSIAN, UNIFORM)}
_ACTIVATIONS = {p.activation_tag: p for p in (GAUSSIAN, TRUNCATED_GAUSSIAN, UNIFORM)}


def get_prior(kind):
    """Look up a prior by its kind tag."""
    try:
        return _PRIORS[kind]
    except KeyError:
        raise DomainError(f"unknown prior kind {kind!r}") from None


def activation_prior(tag):
    """Return the prior whose activation carries the given tag.

    The range of an activation equals the support of its prior, so the
    same object answers both questions: ``linear`` -> gaussian,
    ``tg`` -> truncated_gaussian, ``ted`` -> uniform.
    """
    try:
        return _ACTIVATIONS[tag]
    except KeyError:
        raise DomainError(f"unknown activation tag {tag!r}") from None
