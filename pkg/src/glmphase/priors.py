"""Signal priors: sampling, scalar posterior denoising, and the free entropy
of the additive Gaussian scalar channel Y0 = sqrt(r) * X0 + Z0.

Every prior exposes the same surface:

* ``sample(count, seed)``       -- iid draws, deterministic per seed
* ``denoise(R, lam)``           -- posterior mean/variance under
                                   P0(x) * exp(-lam * (R - x)^2 / 2)
* ``psi_p0(r)``                 -- scalar-channel free entropy
* ``psi_p0_prime(r)``           -- its derivative, E[g(Y0, r)^2] / 2

Discrete support is summed exactly; Gaussian parts use Gauss-Hermite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .numerics import DEFAULT_GH_ORDER, gauss_hermite, gauss_panels

# The fixed-point set admits r = +infinity; psi' saturates far below this cap.
R_CAP = 1e8


@dataclass(frozen=True)
class DenoiserOutput:
    """Posterior mean and variance of the scalar Gaussian-channel denoiser."""

    mean: float | np.ndarray
    variance: float | np.ndarray


def _check_r(r: float) -> float:
    if r < 0:
        raise ValueError(f"r must be nonnegative, got {r}")
    return min(float(r), R_CAP)


class Prior:
    """Base class; concrete priors implement the private hooks below."""

    is_discrete: bool = False

    @property
    def second_moment(self) -> float:
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean ** 2

    # -- sampling ----------------------------------------------------------

    def sample(self, count: int, seed: int) -> np.ndarray:
        if count < 1:
            raise ValueError(f"count must be >= 1, got {count}")
        return self._sample(int(count), np.random.default_rng(seed))

    def _sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    # -- posterior under exp(theta * x - lam * x^2 / 2) dP0(x) --------------

    def posterior_mean_var(self, theta, lam):
        raise NotImplementedError

    def log_partition(self, y, r):
        """ln integral dP0(x) exp(sqrt(r) y x - r x^2 / 2), vectorized in y."""
        raise NotImplementedError

    def denoise(self, R, lam) -> DenoiserOutput:
        """Posterior mean/variance given pseudo-observation R at snr lam."""
        if np.any(np.asarray(lam) < 0):
            raise ValueError(f"lambda must be nonnegative, got {lam}")
        mean, var = self.posterior_mean_var(np.asarray(R, dtype=float) * lam, lam)
        if np.ndim(R) == 0:
            return DenoiserOutput(float(mean), float(var))
        return DenoiserOutput(mean, var)

    # -- scalar-channel free entropy ----------------------------------------

    def _expect_y0(self, r: float, g) -> float:
        """E over Y0 = sqrt(r) X0 + Z0 of g(Y0)."""
        raise NotImplementedError

    def psi_p0(self, r: float) -> float:
        r = _check_r(r)
        if r == 0.0:
            return 0.0
        return self._expect_y0(r, lambda y: self.log_partition(y, r))

    def psi_p0_prime(self, r: float) -> float:
        r = _check_r(r)
        if r == 0.0:
            return 0.5 * self.mean ** 2
        sqr = np.sqrt(r)

        def g_sq(y):
            m, _ = self.posterior_mean_var(sqr * y, r)
            return m ** 2

        return 0.5 * self._expect_y0(r, g_sq)


@dataclass(frozen=True)
class GaussianPrior(Prior):
    """Zero-mean Gaussian prior N(0, variance)."""

    prior_variance: float = 1.0

    def __post_init__(self):
        if self.prior_variance <= 0:
            raise ValueError("variance must be positive")

    @property
    def second_moment(self) -> float:
        return self.prior_variance

    @property
    def mean(self) -> float:
        return 0.0

    def _sample(self, count, rng):
        return np.sqrt(self.prior_variance) * rng.standard_normal(count)

    def posterior_mean_var(self, theta, lam):
        prec = 1.0 / self.prior_variance + lam
        return theta / prec, 1.0 / prec + np.zeros_like(np.asarray(theta, dtype=float))

    def log_partition(self, y, r):
        s2 = self.prior_variance
        return -0.5 * np.log1p(r * s2) + s2 * r * np.asarray(y) ** 2 / (2.0 * (1.0 + r * s2))

    def psi_p0(self, r):
        r = _check_r(r)
        s2 = self.prior_variance
        return 0.5 * (s2 * r - np.log1p(r * s2))

    def psi_p0_prime(self, r):
        r = _check_r(r)
        s2 = self.prior_variance
        return 0.5 * s2 * s2 * r / (1.0 + s2 * r)

    def _expect_y0(self, r, g):
        gh = gauss_hermite(DEFAULT_GH_ORDER)
        sd = np.sqrt(1.0 + r * self.prior_variance)
        return float(np.dot(gh.weights, g(sd * gh.nodes)))


class _AtomicPrior(Prior):
    """Prior supported on finitely many atoms."""

    is_discrete = True

    @property
    def atoms(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def probs(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def second_moment(self) -> float:
        return float(np.dot(self.probs, self.atoms ** 2))

    @property
    def mean(self) -> float:
        return float(np.dot(self.probs, self.atoms))

    def _sample(self, count, rng):
        return rng.choice(self.atoms, size=count, p=self.probs)

    def posterior_mean_var(self, theta, lam):
        theta = np.asarray(theta, dtype=float)
        a = self.atoms
        logw = np.log(self.probs) + np.multiply.outer(theta, a) \
            - 0.5 * np.asarray(lam) * a ** 2
        logw -= logsumexp(logw, axis=-1, keepdims=True)
        w = np.exp(logw)
        m = w @ a
        m2 = w @ (a ** 2)
        return m, np.maximum(m2 - m ** 2, 0.0)

    def log_partition(self, y, r):
        a = self.atoms
        logw = np.log(self.probs) + np.sqrt(r) * np.multiply.outer(np.asarray(y, dtype=float), a) \
            - 0.5 * r * a ** 2
        return logsumexp(logw, axis=-1)

    def _flip_points(self, r):
        """Y0 values where the posterior tips between pairs of atoms; the
        integrands of psi and psi' vary there on the 1/(sqrt(r) da) scale."""
        a = self.atoms
        p = self.probs
        sqr = np.sqrt(r)
        out = []
        for j in range(len(a)):
            for k in range(j + 1, len(a)):
                da = a[k] - a[j]
                if da == 0.0:
                    continue
                y = 0.5 * sqr * (a[k] + a[j]) - np.log(p[k] / p[j]) / (sqr * da)
                out.append((y, 1.0 / (sqr * abs(da))))
        return out

    def _expect_y0(self, r, g):
        flips = self._flip_points(r)
        sqr = np.sqrt(r)
        total = 0.0
        for a, p in zip(self.atoms, self.probs):
            # Z-coordinates of the posterior flips for this atom's channel
            feats = tuple((y - sqr * a) for y, _ in flips)
            widths = tuple(w for _, w in flips)
            rule = gauss_panels(feats, widths)
            total += p * float(np.dot(rule.weights, g(sqr * a + rule.nodes)))
        return total


@dataclass(frozen=True)
class RademacherPrior(_AtomicPrior):
    """X = +1 with probability p_plus, -1 otherwise."""

    p_plus: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.p_plus < 1.0:
            raise ValueError("p_plus must lie in (0, 1)")

    @property
    def atoms(self):
        return np.array([1.0, -1.0])

    @property
    def probs(self):
        return np.array([self.p_plus, 1.0 - self.p_plus])


@dataclass(frozen=True)
class TwoPointPrior(_AtomicPrior):
    """General two-atom prior."""

    values: tuple[float, float]
    probabilities: tuple[float, float]

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.shape != (2,) or np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be two positive numbers summing to 1")
        if self.values[0] == self.values[1]:
            raise ValueError("atoms must be distinct")
        if np.dot(p, np.asarray(self.values, dtype=float) ** 2) <= 0:
            raise ValueError("second moment must be positive")

    @property
    def atoms(self):
        return np.asarray(self.values, dtype=float)

    @property
    def probs(self):
        return np.asarray(self.probabilities, dtype=float)


@dataclass(frozen=True)
class GaussBernoulliPrior(Prior):
    """Spike-and-slab: X = 0 w.p. 1 - sparsity, X ~ N(0,1) w.p. sparsity."""

    sparsity: float

    def __post_init__(self):
        if not 0.0 < self.sparsity <= 1.0:
            raise ValueError("sparsity must lie in (0, 1]")

    @property
    def second_moment(self) -> float:
        return self.sparsity

    @property
    def mean(self) -> float:
        return 0.0

    def _sample(self, count, rng):
        x = rng.standard_normal(count)
        mask = rng.random(count) < self.sparsity
        return np.where(mask, x, 0.0)

    def posterior_mean_var(self, theta, lam):
        theta = np.asarray(theta, dtype=float)
        rho = self.sparsity
        # Slab posterior is N(theta / (1 + lam), 1 / (1 + lam)).
        log_w_slab = np.log(rho) - 0.5 * np.log1p(lam) + theta ** 2 / (2.0 * (1.0 + lam))
        if rho < 1.0:
            log_w_spike = np.log(1.0 - rho) + np.zeros_like(theta)
            norm = np.logaddexp(log_w_spike, log_w_slab)
            p_slab = np.exp(log_w_slab - norm)
        else:
            p_slab = np.ones_like(theta)
        m_slab = theta / (1.0 + lam)
        v_slab = 1.0 / (1.0 + lam)
        m = p_slab * m_slab
        m2 = p_slab * (v_slab + m_slab ** 2)
        return m, np.maximum(m2 - m ** 2, 0.0)

    def log_partition(self, y, r):
        y = np.asarray(y, dtype=float)
        rho = self.sparsity
        log_slab = -0.5 * np.log1p(r) + r * y ** 2 / (2.0 * (1.0 + r))
        if rho == 1.0:
            return log_slab
        return np.logaddexp(np.log(1.0 - rho) + np.zeros_like(y),
                            np.log(rho) + log_slab)

    def _spike_slab_flip(self, r):
        """|Y0| where spike and slab posterior weights balance."""
        rho = self.sparsity
        if rho >= 1.0:
            return None
        c = np.log((1.0 - rho) / rho) + 0.5 * np.log1p(r)
        if c <= 0.0:
            return None
        y = np.sqrt(2.0 * c * (1.0 + r) / r)
        width = (1.0 + r) / (r * max(y, 1.0))
        return y, width

    def _expect_y0(self, r, g):
        # Conditionally on spike/slab, Y0 is exactly Gaussian; the integrands
        # switch regime where spike and slab weights balance.
        rho = self.sparsity
        flip = self._spike_slab_flip(r)
        if flip is None:
            rule_spike = rule_slab = gauss_panels()
        else:
            y_star, width = flip
            rule_spike = gauss_panels((-y_star, y_star), (width, width))
            sd = np.sqrt(1.0 + r)
            rule_slab = gauss_panels((-y_star / sd, y_star / sd),
                                     (width / sd, width / sd))
        e_spike = float(np.dot(rule_spike.weights, g(rule_spike.nodes)))
        sd_slab = np.sqrt(1.0 + r)
        e_slab = float(np.dot(rule_slab.weights, g(sd_slab * rule_slab.nodes)))
        return (1.0 - rho) * e_spike + rho * e_slab


def sample(prior: Prior, count: int, seed: int) -> np.ndarray:
    return prior.sample(count, seed)


def denoise(prior: Prior, R, lam) -> DenoiserOutput:
    return prior.denoise(R, lam)


def psi_p0(prior: Prior, r: float) -> float:
    return prior.psi_p0(r)


def psi_p0_prime(prior: Prior, r: float) -> float:
    return prior.psi_p0_prime(r)
