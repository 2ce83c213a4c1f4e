"""Teacher-student instance generation and the GAMP message-passing solver.

The iteration follows the standard seven-line schedule

    V      = mean(v)
    omega  = Phi x_hat / sqrt(n) - V g
    g_mu   = (E[z | y_mu, omega_mu, V] - omega_mu) / V
    lam    = alpha * mean(g^2)
    R      = x_hat + Phi^T g / (sqrt(n) lam)
    x_hat  = posterior mean of the prior at (R, lam)
    v      = posterior variance of the prior at (R, lam)

where the output step is the ratio form of the channel denoiser,
g = gout / sqrt(V) in terms of the standardized posterior mean ``gout``
exposed by the channels module.  With that normalization lam tracks the
state-evolution parameter r and the iteration reproduces

    q_{t+1} = 2 psi_p0'(r_t),   r_t = 2 alpha psi_pout'(q_t)

coordinate-wise in the large-n limit.

The assumed channel used inside the solver may carry a small threshold
asymmetry ``epsilon`` (symmetric channels keep GAMP off the symmetric
manifold); the data are always generated at epsilon = 0.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .channels import Abs, Channel, GoutUnderflowError, LinearAWGN, ReLU, \
    Sigmoid, Sign, SymmetricDoor
from .priors import GaussBernoulliPrior, GaussianPrior, Prior, \
    RademacherPrior, TwoPointPrior

_V_FLOOR = 1e-12
_JITTER_SCALE = 1e-4  # variance of the init jitter, relative to rho


@dataclass(frozen=True)
class GampState:
    """Per-iteration solver state (the last finite one rides on divergence
    errors)."""

    x_hat: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    g: np.ndarray
    V_scalar: float
    lam: float
    t: int


class GampDivergenceError(RuntimeError):
    """Iterates left the finite floats even after a damping retry."""

    def __init__(self, state: GampState):
        super().__init__(f"GAMP diverged at iteration {state.t}")
        self.state = state


@dataclass(frozen=True)
class Instance:
    """One synthetic teacher-student problem."""

    phi: np.ndarray
    x_star: np.ndarray
    y: np.ndarray
    prior: Prior
    channel: Channel
    seed: int

    @property
    def n(self) -> int:
        return self.phi.shape[1]

    @property
    def m(self) -> int:
        return self.phi.shape[0]

    @property
    def alpha(self) -> float:
        return self.m / self.n


@dataclass(frozen=True)
class GampOptions:
    """``onsager`` picks the lam estimator: "variance" uses
    alpha * mean((1 - vout) / V) (the derivative form, numerically stable for
    noiseless channels); "square" uses the literal alpha * mean(g^2).  The two
    coincide in the large-n limit by the Nishimori identity."""

    max_iter: int = 500
    tol: float = 1e-7
    damping: float = 0.0
    channel_epsilon: float | None = None  # None: 1e-4 for even channels else 0
    seed: int = 0
    onsager: str = "variance"

    def __post_init__(self):
        if self.onsager not in ("variance", "square"):
            raise ValueError(f"unknown onsager estimator {self.onsager!r}")


@dataclass(frozen=True)
class GampRun:
    x_hat_final: np.ndarray
    v_final: np.ndarray
    overlap_seq: np.ndarray     # x_hat . x* / n per iteration
    norm_sq_seq: np.ndarray     # |x_hat|^2 / n per iteration
    mse_seq: np.ndarray
    converged: bool
    iterations: int


def _label_seeds(seed: int, m: int) -> np.ndarray:
    ss = np.random.SeedSequence((seed, 2))
    return np.array([int(c.generate_state(1)[0]) for c in ss.spawn(m)],
                    dtype=np.uint64)


def generate_instance(prior: Prior, channel: Channel, n: int, alpha: float,
                      seed: int) -> Instance:
    """m = round(alpha n) rows of iid N(0,1), labels drawn per row so the
    instance is regenerable from the seed alone."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    m = int(round(alpha * n))
    x_star = prior.sample(n, int(np.random.SeedSequence((seed, 0)).generate_state(1)[0]))
    rng_phi = np.random.default_rng(np.random.SeedSequence((seed, 1)))
    phi = rng_phi.standard_normal((m, n))
    z = phi @ x_star / math.sqrt(n)
    y = np.empty(m)
    for mu, s in enumerate(_label_seeds(seed, m)):
        y[mu] = channel.sample_label(z[mu], int(s))
    return Instance(phi=phi, x_star=x_star, y=y, prior=prior,
                    channel=channel, seed=seed)


def _default_epsilon(channel: Channel) -> float:
    return 1e-4 if channel.is_even else 0.0


def _gamp_iterate(instance: Instance, opts: GampOptions, damping: float):
    prior, channel = instance.prior, instance.channel
    eps = opts.channel_epsilon
    if eps is None:
        eps = _default_epsilon(channel)
    assumed = channel.with_epsilon(eps) if eps > 0 else channel

    phi, y, x_star = instance.phi, instance.y, instance.x_star
    m, n = instance.m, instance.n
    alpha = m / n
    sqn = math.sqrt(n)
    rho = prior.second_moment

    rng = np.random.default_rng(np.random.SeedSequence((opts.seed, 3)))
    x_hat = prior.mean + math.sqrt(_JITTER_SCALE * rho) * rng.standard_normal(n)
    v = np.full(n, prior.variance)
    g = np.zeros(m)

    overlaps, norms, mses = [], [], []
    converged = False
    t_done = 0
    for t in range(1, opts.max_iter + 1):
        V = max(float(np.mean(v)), _V_FLOOR)
        omega = phi @ x_hat / sqn - V * g
        den = assumed.gout(y, omega, V)
        g = den.gout / math.sqrt(V)
        if opts.onsager == "variance":
            lam = alpha * float(np.mean(1.0 - den.vout)) / V
            if lam <= 0.0:
                # near the symmetric point the variance estimator fluctuates
                # around zero; the (nonnegative) square form seeds the escape
                lam = alpha * float(np.mean(g * g))
        else:
            lam = alpha * float(np.mean(g * g))
        if lam <= 0.0:
            # the output stage carries no information this round (can only
            # happen at an exactly-converged state): keep the estimate
            x_new, v_new = x_hat, v
        else:
            R = x_hat + phi.T @ g / (sqn * lam)
            out = prior.denoise(R, lam)
            x_new = (1.0 - damping) * out.mean + damping * x_hat
            v_new = np.maximum(out.variance, 0.0)
        if not np.all(np.isfinite(x_new)):
            raise GampDivergenceError(GampState(
                x_hat=x_hat, v=v, omega=omega, g=g, V_scalar=V, lam=lam, t=t))
        delta = float(np.mean(np.abs(x_new - x_hat)))
        x_hat = x_new
        v = v_new
        overlaps.append(float(x_hat @ x_star) / n)
        norms.append(float(x_hat @ x_hat) / n)
        mses.append(float(np.sum((x_hat - x_star) ** 2)) / n)
        t_done = t
        if delta < opts.tol:
            converged = True
            break
    return GampRun(
        x_hat_final=x_hat, v_final=v,
        overlap_seq=np.asarray(overlaps), norm_sq_seq=np.asarray(norms),
        mse_seq=np.asarray(mses), converged=converged, iterations=t_done,
    )


def gamp_run(instance: Instance, opts: GampOptions | None = None) -> GampRun:
    """Run GAMP; on divergence retry once with damping 0.5."""
    if opts is None:
        opts = GampOptions()
    try:
        return _gamp_iterate(instance, opts, opts.damping)
    except (GampDivergenceError, GoutUnderflowError):
        if opts.damping >= 0.5:
            raise
        return _gamp_iterate(instance, opts, 0.5)


def gamp_predict(x_hat: np.ndarray, q_t: float, phi_new_row: np.ndarray,
                 channel: Channel, rho: float):
    """Posterior-mean label for a fresh row under the Gaussian surrogate
    N(phi_new . x_hat / sqrt(n), rho - q_t) for the new pre-activation."""
    if not 0.0 <= q_t <= rho:
        raise ValueError(f"need 0 <= q_t <= rho, got q_t={q_t}")
    phi_new_row = np.atleast_2d(phi_new_row)
    n = phi_new_row.shape[1]
    omega = phi_new_row @ x_hat / math.sqrt(n)
    out = channel.mean_label_gauss(omega, rho - q_t)
    out = np.asarray(out)
    return float(out[0]) if out.size == 1 else out


def empirical_generalization_error(instance_train: Instance, x_hat: np.ndarray,
                                   q_t: float, n_test: int, seed: int) -> float:
    """Monte-Carlo MSE of the GAMP label predictor on fresh teacher rows."""
    if n_test < 1:
        raise ValueError(f"n_test must be >= 1, got {n_test}")
    prior, channel = instance_train.prior, instance_train.channel
    n = instance_train.n
    rho = prior.second_moment
    rng = np.random.default_rng(np.random.SeedSequence((seed, 4)))
    phi_new = rng.standard_normal((n_test, n))
    z_new = phi_new @ instance_train.x_star / math.sqrt(n)
    y_new = np.empty(n_test)
    for i, s in enumerate(_label_seeds(seed ^ 0x5EED, n_test)):
        y_new[i] = channel.sample_label(z_new[i], int(s))
    y_pred = gamp_predict(x_hat, q_t, phi_new, channel, rho)
    return float(np.mean((y_new - y_pred) ** 2))


# ---------------------------------------------------------------------------
# instance serialization
# ---------------------------------------------------------------------------

_PRIOR_TAGS = {
    GaussianPrior: "gaussian",
    RademacherPrior: "rademacher",
    GaussBernoulliPrior: "gauss_bernoulli",
    TwoPointPrior: "two_point",
}
_CHANNEL_TAGS = {
    LinearAWGN: "linear",
    Sign: "sign",
    Abs: "abs",
    ReLU: "relu",
    SymmetricDoor: "door",
    Sigmoid: "sigmoid",
}


def prior_to_dict(prior: Prior) -> dict:
    d = {"kind": _PRIOR_TAGS[type(prior)]}
    if isinstance(prior, GaussianPrior):
        d["variance"] = prior.prior_variance
    elif isinstance(prior, RademacherPrior):
        d["p_plus"] = prior.p_plus
    elif isinstance(prior, GaussBernoulliPrior):
        d["sparsity"] = prior.sparsity
    elif isinstance(prior, TwoPointPrior):
        d["values"] = list(prior.values)
        d["probabilities"] = list(prior.probabilities)
    return d


def prior_from_dict(d: dict) -> Prior:
    kind = d["kind"]
    if kind == "gaussian":
        return GaussianPrior(float(d.get("variance", 1.0)))
    if kind == "rademacher":
        return RademacherPrior(float(d.get("p_plus", 0.5)))
    if kind == "gauss_bernoulli":
        return GaussBernoulliPrior(float(d["sparsity"]))
    if kind == "two_point":
        return TwoPointPrior(tuple(d["values"]), tuple(d["probabilities"]))
    raise ValueError(f"unknown prior kind {kind!r}")


def channel_to_dict(channel: Channel) -> dict:
    d = {"kind": _CHANNEL_TAGS[type(channel)], "epsilon": channel.epsilon}
    if isinstance(channel, Sigmoid):
        d["slope"] = channel.slope
    else:
        d["delta"] = channel.delta
        if isinstance(channel, SymmetricDoor):
            d["K"] = channel.K
    return d


def channel_from_dict(d: dict) -> Channel:
    kind = d["kind"]
    eps = float(d.get("epsilon", 0.0))
    if kind == "sigmoid":
        return Sigmoid(slope=float(d.get("slope", 1.0)), epsilon=eps)
    delta = float(d.get("delta", 0.0))
    if kind == "linear":
        return LinearAWGN(delta=delta, epsilon=eps)
    if kind == "sign":
        return Sign(delta=delta, epsilon=eps)
    if kind == "abs":
        return Abs(delta=delta, epsilon=eps)
    if kind == "relu":
        return ReLU(delta=delta, epsilon=eps)
    if kind == "door":
        return SymmetricDoor(K=float(d.get("K", 0.67449)), delta=delta, epsilon=eps)
    raise ValueError(f"unknown channel kind {kind!r}")


def save_instance(instance: Instance, path, include_phi: bool = False) -> None:
    """Self-describing JSON container; Phi regenerable from the seed when
    omitted."""
    doc = {
        "format": "glmphase-instance",
        "version": 1,
        "n": instance.n,
        "m": instance.m,
        "seed": instance.seed,
        "prior": prior_to_dict(instance.prior),
        "channel": channel_to_dict(instance.channel),
    }
    if include_phi:
        doc["phi"] = instance.phi.tolist()
        doc["x_star"] = instance.x_star.tolist()
        doc["y"] = instance.y.tolist()
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_instance(path) -> Instance:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "glmphase-instance":
        raise ValueError(f"not a glmphase instance file: {path}")
    prior = prior_from_dict(doc["prior"])
    channel = channel_from_dict(doc["channel"])
    n, m, seed = doc["n"], doc["m"], doc["seed"]
    if "phi" in doc:
        return Instance(
            phi=np.asarray(doc["phi"], dtype=float),
            x_star=np.asarray(doc["x_star"], dtype=float),
            y=np.asarray(doc["y"], dtype=float),
            prior=prior, channel=channel, seed=seed,
        )
    inst = generate_instance(prior, channel, n, m / n, seed)
    if inst.m != m:
        raise ValueError(f"regenerated m={inst.m} does not match stored m={m}")
    return inst
