"""Training loss/gradient estimators. Every estimator returns a LossReport
whose ``loss`` is minimized and whose ``grad_theta`` is exact where the family
exposes analytic mixed derivatives, and a common-random-number central
difference over theta otherwise.

Sign convention for the implicit (integration-by-parts) objectives: the
second-derivative term enters with a MINUS sign,

    per-sample score-matching term = 0.5 |grad_x E|^2 - laplacian_x E,

and the sliced analogue 0.5 (v.grad_x E)^2 - v.Hess(E).v. This is the sign
under which the objective's theta-gradient matches the closed-form Fisher
divergence for Gaussian model/data pairs; the self-check suite exercises a
deliberately flipped variant to prove that test has teeth.

Randomness discipline: each stochastic estimator draws its noise exactly once
per call from the supplied stream and then treats it as data. The finite
difference fallback therefore sees identical noise on both sides of every
difference by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .energy import EnergyFamily, GaussianDensity, LayoutField, ParamVector
from .errors import InvalidArgumentError, NumericError
from .numerics import RngStream, fd_step_sizes
from .samplers import (
    LangevinConfig,
    ReplayBuffer,
    buffer_init_batch,
    buffer_push_batch,
    fresh_gaussian_init,
    langevin_chain,
    model_target,
)

FD_PARAM_LIMIT = 64


def _softplus(z):
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


@dataclass(frozen=True)
class LossReport:
    """Scalar loss, theta-gradient, and named auxiliary statistics."""

    loss: float
    grad_theta: np.ndarray
    aux: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.loss):
            raise NumericError(f"loss is not finite: {self.loss}")
        grad = np.asarray(self.grad_theta, dtype=np.float64)
        if not np.all(np.isfinite(grad)):
            raise NumericError("gradient contains non-finite entries")
        object.__setattr__(self, "grad_theta", grad)


@dataclass(frozen=True)
class NceConfig:
    noise: GaussianDensity
    nu: float | None = None  # None: use N/M implied by the batch sizes
    learn_log_z: bool = True

    def __post_init__(self):
        if self.nu is not None and self.nu <= 0:
            raise InvalidArgumentError("nu must be positive")


@dataclass(frozen=True)
class SliceConfig:
    projection: str = "gaussian"
    num_slices: int = 1
    variance_reduced: bool = False

    def __post_init__(self):
        if self.projection not in ("gaussian", "rademacher"):
            raise InvalidArgumentError(
                f"projection must be gaussian or rademacher, got {self.projection!r}"
            )
        if self.num_slices < 1:
            raise InvalidArgumentError("num_slices must be >= 1")


def as_batch(batch, dim: int) -> np.ndarray:
    """Accept an (n, d) array, a list of vectors, or a 1-D array when d == 1."""
    if isinstance(batch, np.ndarray):
        X = batch
    else:
        rows = [b.entries if hasattr(b, "entries") else np.asarray(b) for b in batch]
        if not rows:
            raise InvalidArgumentError("batch must be nonempty")
        X = np.stack([np.atleast_1d(r) for r in rows])
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] != dim or X.shape[0] == 0:
        raise InvalidArgumentError(f"batch must have shape (n>0, {dim}), got {X.shape}")
    return X


# -- finite-difference theta gradient (common random numbers) -------------------


def estimator_grad_theta(family: EnergyFamily, theta: ParamVector, loss_closure,
                         rng: RngStream | None = None) -> np.ndarray:
    """Central differences of a loss over theta with replayed randomness.

    ``loss_closure(theta_values)`` must be deterministic given its argument;
    when it needs a stream, pass ``rng`` and the closure receives an identical
    clone for every evaluation. Refuses families with more than
    FD_PARAM_LIMIT parameters: that costs 2 * param_count loss evaluations,
    use an analytic gradient path instead.
    """
    vals = family.check_theta(theta)
    if vals.size > FD_PARAM_LIMIT:
        raise InvalidArgumentError(
            f"{vals.size} parameters exceeds the finite-difference limit "
            f"({FD_PARAM_LIMIT}); use an analytic gradient path"
        )

    def evaluate(tv):
        if rng is None:
            return float(loss_closure(tv))
        return float(loss_closure(tv, rng.clone()))

    steps = fd_step_sizes(vals, None)
    grad = np.empty_like(vals)
    for i in range(vals.size):
        tp = vals.copy()
        tm = vals.copy()
        tp[i] += steps[i]
        tm[i] -= steps[i]
        fp, fm = evaluate(tp), evaluate(tm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite loss in theta finite difference at {i}")
        grad[i] = (fp - fm) / (2.0 * steps[i])
    return grad


def _grad_auto(family, theta, analytic_fn, loss_of_values, grad_mode: str) -> np.ndarray:
    """Dispatch: analytic rows when the family has them, CRN-FD otherwise."""
    if grad_mode not in ("auto", "analytic", "fd"):
        raise InvalidArgumentError(f"unknown grad_mode {grad_mode!r}")
    use_analytic = family.has_analytic_mixed and grad_mode != "fd"
    if grad_mode == "analytic" and not family.has_analytic_mixed:
        raise InvalidArgumentError(f"{family.kind} has no analytic estimator gradient")
    if use_analytic:
        return analytic_fn()
    return estimator_grad_theta(family, theta, loss_of_values)


# -- contrastive divergence -------------------------------------------------------


def cd_gradient_from_samples(family: EnergyFamily, theta, data: np.ndarray,
                             model_samples: np.ndarray,
                             extra_aux: dict | None = None) -> LossReport:
    """Gradient assembly shared by CD/PCD: mean grad_theta E over data minus
    the same over model samples (the negated ascent direction of the
    log-likelihood). The reported loss is the energy gap, a diagnostic only:
    the true objective has an intractable normalizer.
    """
    data = as_batch(data, family.dim)
    model_samples = as_batch(model_samples, family.dim)
    grad = (family.grad_theta(theta, data).mean(axis=0)
            - family.grad_theta(theta, model_samples).mean(axis=0))
    gap = float(family.energy(theta, data).mean()
                - family.energy(theta, model_samples).mean())
    aux = {"energy_gap": gap,
           "model_sample_mean": float(model_samples.mean())}
    if extra_aux:
        aux.update(extra_aux)
    return LossReport(loss=gap, grad_theta=grad, aux=aux)


def cd_gradient(family: EnergyFamily, theta, batch, sampler: LangevinConfig,
                init: str = "data", buffer: ReplayBuffer | None = None,
                rng: RngStream | None = None,
                fresh_init_variance: float = 4.0) -> LossReport:
    """Contrastive-divergence gradient with Langevin negative samples.

    init="data" starts one chain per data point at that point (CD-k);
    init="buffer" draws starts from the replay buffer (PCD) and pushes the
    finished chains back.
    """
    X = as_batch(batch, family.dim)
    if rng is None:
        raise InvalidArgumentError("cd_gradient needs an RngStream")
    if init not in ("data", "buffer"):
        raise InvalidArgumentError(f"init must be data or buffer, got {init!r}")
    if init == "buffer" and buffer is None:
        raise InvalidArgumentError("init=buffer requires a replay buffer")
    if init == "data":
        x0 = X.copy()
    else:
        x0 = buffer_init_batch(
            buffer, rng, X.shape[0],
            lambda m: fresh_gaussian_init(rng, m, family.dim, fresh_init_variance),
        )
    result = langevin_chain(model_target(family, theta), x0, sampler, rng)
    if init == "buffer":
        buffer_push_batch(buffer, result.final)
    extra = {}
    if result.accept_rate is not None:
        extra["mala_accept_rate"] = result.accept_rate
    return cd_gradient_from_samples(family, theta, X, result.final, extra)


# -- score matching ---------------------------------------------------------------


def _sm_per_sample(family, theta, X, hessian_sign: float) -> np.ndarray:
    G = family.grad_x(theta, X)
    lap = family.laplacian_x(theta, X)
    return 0.5 * np.sum(G * G, axis=1) + hessian_sign * lap


def sm_loss(family: EnergyFamily, theta, batch,
            flip_hessian_sign: bool = False, grad_mode: str = "auto") -> LossReport:
    """Implicit score matching: mean of 0.5 |grad_x E|^2 - laplacian E.

    ``flip_hessian_sign`` negates the Laplacian term; it exists so the check
    suite can demonstrate that the Fisher-oracle gradient test rejects the
    wrong sign. Never set it for training.
    """
    X = as_batch(batch, family.dim)
    sign = +1.0 if flip_hessian_sign else -1.0
    theta_pv = theta if isinstance(theta, ParamVector) else family.params(theta)
    per = _sm_per_sample(family, theta_pv, X, sign)

    def analytic():
        G = family.grad_x(theta_pv, X)
        rows = (family.grad_theta_dot_grad_x(theta_pv, X, G)
                + sign * family.grad_theta_laplacian(theta_pv, X))
        return rows.mean(axis=0)

    grad = _grad_auto(
        family, theta_pv, analytic,
        lambda tv: _sm_per_sample(family, family.params(tv), X, sign).mean(),
        grad_mode,
    )
    aux = {"per_sample_loss_var": float(per.var(ddof=1)) if per.size > 1 else 0.0}
    return LossReport(loss=float(per.mean()), grad_theta=grad, aux=aux)


def sm_per_sample_grad_rows(family: EnergyFamily, theta, batch) -> np.ndarray:
    """Per-sample analytic theta-gradient rows of the score-matching term;
    used by tests to attach standard errors to gradient comparisons."""
    X = as_batch(batch, family.dim)
    G = family.grad_x(theta, X)
    return (family.grad_theta_dot_grad_x(theta, X, G)
            - family.grad_theta_laplacian(theta, X))


# -- denoising score matching -------------------------------------------------------


def _dsm_per_sample(family, theta, X, Z, sigma) -> np.ndarray:
    resid = family.grad_x(theta, X + sigma * Z) - Z / sigma
    return 0.5 * np.sum(resid * resid, axis=1)


def dsm_loss(family: EnergyFamily, theta, batch, sigma: float,
             rng: RngStream, grad_mode: str = "auto") -> LossReport:
    """Denoising score matching at noise scale sigma.

    Per sample: 0.5 | z/sigma + grad log p(x + sigma z) |^2 with one fresh
    z ~ N(0, I) per datapoint per call; the gradient is taken at the noisy
    point. Consistent for the sigma-smoothed data distribution, not the clean
    one, and the per-sample variance grows like sigma^-4 as sigma -> 0.
    """
    if sigma <= 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    X = as_batch(batch, family.dim)
    Z = rng.normal(X.shape)
    theta_pv = theta if isinstance(theta, ParamVector) else family.params(theta)
    per = _dsm_per_sample(family, theta_pv, X, Z, sigma)

    def analytic():
        Xt = X + sigma * Z
        resid = family.grad_x(theta_pv, Xt) - Z / sigma
        return family.grad_theta_dot_grad_x(theta_pv, Xt, resid).mean(axis=0)

    grad = _grad_auto(
        family, theta_pv, analytic,
        lambda tv: _dsm_per_sample(family, family.params(tv), X, Z, sigma).mean(),
        grad_mode,
    )
    aux = {"per_sample_loss_var": float(per.var(ddof=1)) if per.size > 1 else 0.0}
    return LossReport(loss=float(per.mean()), grad_theta=grad, aux=aux)


def dsm_control_variate(family: EnergyFamily, theta, X, Z, sigma: float) -> np.ndarray:
    """The zero-mean variate (2/sigma) z.grad log p(x) + (|z|^2 - d)/sigma^2.

    Exactly zero-mean for z ~ N(0, I) independent of x; positively correlated
    with the small-sigma divergence of the denoising objective.
    """
    X = as_batch(X, family.dim)
    Z = as_batch(Z, family.dim)
    score = -family.grad_x(theta, X)
    d = family.dim
    return (2.0 / sigma) * np.sum(Z * score, axis=1) + (
        np.sum(Z * Z, axis=1) - d
    ) / sigma**2


def dsm_cv_loss(family: EnergyFamily, theta, batch, sigma: float,
                rng: RngStream, grad_mode: str = "auto") -> LossReport:
    """Variance-reduced DSM: per sample 0.5 (|z/sigma + grad log p(x+sigma z)|^2
    - c(x, z)) with the SAME z in both pieces.

    Folding the control variate inside the half cancels the sigma^-1 and
    sigma^-2 divergent terms exactly at small sigma; the objective's mean is
    unchanged because c has expectation zero. At large sigma no reduction is
    promised (the aux fields record both variances either way).
    """
    if sigma <= 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    X = as_batch(batch, family.dim)
    Z = rng.normal(X.shape)
    theta_pv = theta if isinstance(theta, ParamVector) else family.params(theta)

    def per_sample(th):
        raw = _dsm_per_sample(family, th, X, Z, sigma)
        cv = dsm_control_variate(family, th, X, Z, sigma)
        return raw, raw - 0.5 * cv

    raw, adj = per_sample(theta_pv)

    def analytic():
        Xt = X + sigma * Z
        resid = family.grad_x(theta_pv, Xt) - Z / sigma
        rows = family.grad_theta_dot_grad_x(theta_pv, Xt, resid)
        # d/dtheta of -0.5 c = (1/sigma) d/dtheta (z . grad_x E)
        rows = rows + (1.0 / sigma) * family.grad_theta_dot_grad_x(theta_pv, X, Z)
        return rows.mean(axis=0)

    grad = _grad_auto(
        family, theta_pv, analytic,
        lambda tv: per_sample(family.params(tv))[1].mean(),
        grad_mode,
    )
    aux = {
        "per_sample_var_without_cv": float(raw.var(ddof=1)) if raw.size > 1 else 0.0,
        "per_sample_var_with_cv": float(adj.var(ddof=1)) if adj.size > 1 else 0.0,
    }
    return LossReport(loss=float(adj.mean()), grad_theta=grad, aux=aux)


# -- sliced score matching -----------------------------------------------------------


def _draw_slices(rng: RngStream, shape, projection: str) -> np.ndarray:
    if projection == "gaussian":
        return rng.normal(shape)
    return rng.rademacher(shape)


def _ssm_terms(family, theta, X, V, variance_reduced: bool) -> np.ndarray:
    """Per (sample, slice) objective values, shape (n, S)."""
    n, S, d = V.shape
    G = family.grad_x(theta, X)
    X_rep = np.repeat(X, S, axis=0)
    V_flat = V.reshape(n * S, d)
    hq = np.sum(V_flat * family.hvp_x(theta, X_rep, V_flat), axis=1).reshape(n, S)
    if variance_reduced:
        first = 0.5 * np.sum(G * G, axis=1)[:, None]
    else:
        first = 0.5 * np.sum(G[:, None, :] * V, axis=2) ** 2
    return first - hq


def ssm_loss(family: EnergyFamily, theta, batch, cfg: SliceConfig,
             rng: RngStream, grad_mode: str = "auto") -> LossReport:
    """Sliced score matching over random projections.

    Per sample and slice v: 0.5 (v . grad_x E)^2 - v . Hess(E) v, the
    Hessian term via exactly one Hessian-vector product per (sample, slice),
    which keeps the cost linear in the dimension. With
    ``cfg.variance_reduced`` the first-order term is replaced by its exact
    projection expectation 0.5 |grad_x E|^2 (valid whenever E[v v'] = I,
    which holds for both supported projections).
    """
    X = as_batch(batch, family.dim)
    n, d = X.shape
    S = cfg.num_slices
    V = _draw_slices(rng, (n, S, d), cfg.projection)
    theta_pv = theta if isinstance(theta, ParamVector) else family.params(theta)
    terms = _ssm_terms(family, theta_pv, X, V, cfg.variance_reduced)

    def analytic():
        G = family.grad_x(theta_pv, X)
        X_rep = np.repeat(X, S, axis=0)
        V_flat = V.reshape(n * S, d)
        hq_rows = family.grad_theta_hvp_quad(theta_pv, X_rep, V_flat)
        if cfg.variance_reduced:
            first_rows = np.repeat(
                family.grad_theta_dot_grad_x(theta_pv, X, G), S, axis=0
            )
        else:
            vg = np.sum(G[:, None, :] * V, axis=2).reshape(n * S)
            first_rows = vg[:, None] * family.grad_theta_dot_grad_x(
                theta_pv, X_rep, V_flat
            )
        return (first_rows - hq_rows).mean(axis=0)

    grad = _grad_auto(
        family, theta_pv, analytic,
        lambda tv: _ssm_terms(family, family.params(tv), X, V,
                              cfg.variance_reduced).mean(),
        grad_mode,
    )
    slice_var = float(terms.var(axis=1, ddof=1).mean()) if S > 1 else 0.0
    aux = {"slice_noise_var": slice_var}
    return LossReport(loss=float(terms.mean()), grad_theta=grad, aux=aux)


def ssm_objective_fixed_direction(family: EnergyFamily, theta, batch,
                                  v: np.ndarray) -> float:
    """Batch mean of 0.5 (v . grad_x E)^2 - v . Hess(E) v at one fixed v."""
    X = as_batch(batch, family.dim)
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    V = np.broadcast_to(v, X.shape).copy()
    G = family.grad_x(theta, X)
    hq = np.sum(V * family.hvp_x(theta, X, V), axis=1)
    first = 0.5 * np.sum(G * V, axis=1) ** 2
    return float((first - hq).mean())


# -- noise contrastive estimation ------------------------------------------------------


def nce_layout(family: EnergyFamily) -> tuple[LayoutField, ...]:
    """Family layout extended with the learnable log-partition scalar."""
    offset = family.param_count
    return family.layout + (LayoutField("log_z", offset, 1),)


def nce_params(family: EnergyFamily, family_values, log_z: float = 0.0) -> ParamVector:
    values = np.concatenate([np.asarray(family_values, dtype=np.float64).ravel(),
                             [float(log_z)]])
    return ParamVector(values, nce_layout(family))


def _split_nce_theta(family, theta, learn_log_z: bool):
    if isinstance(theta, ParamVector):
        vals = theta.values
        if learn_log_z:
            if not theta.has("log_z"):
                raise InvalidArgumentError(
                    "learn_log_z=True expects a theta with a trailing log_z entry"
                )
            return vals[:-1], float(vals[-1])
        if theta.has("log_z"):
            raise InvalidArgumentError("learn_log_z=False forbids a log_z entry")
        return vals, 0.0
    vals = np.asarray(theta, dtype=np.float64)
    if learn_log_z:
        return vals[:-1], float(vals[-1])
    return vals, 0.0


def nce_loss(family: EnergyFamily, theta, data_batch, noise_batch,
             cfg: NceConfig) -> LossReport:
    """Binary cross-entropy of the data-vs-noise classifier.

    The classifier logit for "came from the model" is
    log nu - E(x) - c - log p_noise(x), with c the learnable log-partition
    (fixed at zero in self-normalized mode). Loss is averaged over all
    N + M points, which matches nu = N/M when nu is left unset. The gradient
    is exact: it only needs grad_theta E and the unit direction for c.
    """
    X = as_batch(data_batch, family.dim)
    Y = as_batch(noise_batch, family.dim)
    n_data, n_noise = X.shape[0], Y.shape[0]
    nu = cfg.nu if cfg.nu is not None else n_data / n_noise
    fam_vals, c = _split_nce_theta(family, theta, cfg.learn_log_z)
    fam_theta = family.params(fam_vals)

    def logits(P):
        log_pn = cfg.noise.logpdf(P)
        if not np.all(np.isfinite(log_pn)):
            bad = int(np.argmin(np.isfinite(log_pn)))
            raise NumericError(
                f"noise density vanished at sample index {bad}: {P[bad]}"
            )
        return np.log(nu) - family.energy(fam_theta, P) - c - log_pn

    ld = logits(X)
    ln = logits(Y)
    total = n_data + n_noise
    loss = (np.sum(_softplus(-ld)) + np.sum(_softplus(ln))) / total

    coef_data = 1.0 - expit(ld)          # weight on +(dE + dc) from data points
    coef_noise = -expit(ln)              # and from noise points
    g_data = coef_data @ family.grad_theta(fam_theta, X)
    g_noise = coef_noise @ family.grad_theta(fam_theta, Y)
    g_fam = (g_data + g_noise) / total
    if cfg.learn_log_z:
        g_c = (np.sum(coef_data) + np.sum(coef_noise)) / total
        grad = np.concatenate([g_fam, [g_c]])
    else:
        grad = g_fam
    aux = {
        "mean_posterior_model_given_data": float(np.mean(expit(ld))),
        "nu": float(nu),
    }
    return LossReport(loss=float(loss), grad_theta=grad, aux=aux)


def shifted_nce_loss(family: EnergyFamily, theta, batch, v) -> LossReport:
    """Contrast against data shifted by a fixed vector v:

    mean over x of log(1 + exp(E(x) - E(x - v))) + log(1 + exp(E(x) - E(x + v))).

    Only energy differences enter, so constant shifts cancel; at v = 0 the
    objective degenerates to the constant 2 log 2 and is rejected.
    """
    X = as_batch(batch, family.dim)
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if v.shape != (family.dim,):
        raise InvalidArgumentError(f"v must have dimension {family.dim}")
    if np.all(v == 0.0):
        raise InvalidArgumentError("v must be nonzero (constant objective at v = 0)")
    e0 = family.energy(theta, X)
    a = e0 - family.energy(theta, X - v)
    b = e0 - family.energy(theta, X + v)
    loss = float(np.mean(_softplus(a) + _softplus(b)))
    g0 = family.grad_theta(theta, X)
    gm = family.grad_theta(theta, X - v)
    gp = family.grad_theta(theta, X + v)
    rows = expit(a)[:, None] * (g0 - gm) + expit(b)[:, None] * (g0 - gp)
    aux = {"v_norm": float(np.linalg.norm(v))}
    return LossReport(loss=loss, grad_theta=rows.mean(axis=0), aux=aux)


# -- kernelized Stein discrepancy --------------------------------------------------------


def ksd_u_statistic(X: np.ndarray, scores: np.ndarray, bandwidth: float,
                    block: int = 1024) -> tuple[float, float]:
    """U-statistic KSD estimate and a standard error valid under the null.

    Uses the RBF kernel k(x, y) = exp(-|x - y|^2 / (2 h^2)) and the closed
    form u(x, y) = s(x).k.s(y) + s(x).grad_y k + grad_x k.s(y)
    + trace(grad_x grad_y k); diagonal pairs are excluded, so the estimate is
    unbiased and may go slightly negative under the null.

    The returned SE combines both U-statistic variance components,
    4 var(row means)/n + 2 var(u)/(n(n-1)): the first-order term alone
    degenerates when model = data (the row means collapse with the sample
    average of the kernel eigenfunctions), which would make |value|/SE
    arbitrarily large under the exact null.
    """
    if bandwidth <= 0:
        raise InvalidArgumentError("bandwidth must be positive")
    n, d = X.shape
    if n < 2:
        raise InvalidArgumentError("KSD needs at least 2 points")
    h2 = bandwidth**2
    row_sums = np.zeros(n)
    total_sq = 0.0
    x_sq = np.sum(X * X, axis=1)
    for start in range(0, n, block):
        stop = min(start + block, n)
        Xa, Sa = X[start:stop], scores[start:stop]
        # pairwise pieces against the full set
        dots = Xa @ X.T
        sq = x_sq[start:stop, None] + x_sq[None, :] - 2.0 * dots
        K = np.exp(-0.5 * sq / h2)
        ss = Sa @ scores.T
        # s(x).(x - y) and (x - y).s(y) terms
        sx_x = np.sum(Sa * Xa, axis=1)[:, None]
        sx_y = Sa @ X.T
        sy_y = np.sum(scores * X, axis=1)[None, :]
        sy_x = Xa @ scores.T
        term = ss + (sx_x - sx_y) / h2 - (sy_x - sy_y) / h2 + d / h2 - sq / h2**2
        U = K * term
        idx = np.arange(start, stop)
        U[idx - start, idx] = 0.0
        row_sums[start:stop] = U.sum(axis=1)
        total_sq += float(np.sum(U * U))
    pairs = n * (n - 1)
    value = float(row_sums.sum()) / pairs
    g = row_sums / (n - 1)
    var_g = float(np.var(g, ddof=1))
    var_u = max(total_sq / pairs - value**2, 0.0)
    se = float(np.sqrt(4.0 * var_g / n + 2.0 * var_u / pairs))
    return value, se


def ksd(family: EnergyFamily, theta, batch, bandwidth: float) -> float:
    """Kernelized Stein discrepancy between the model and a sample batch."""
    X = as_batch(batch, family.dim)
    scores = -family.grad_x(theta, X)
    value, _ = ksd_u_statistic(X, scores, bandwidth)
    return value


def ksd_with_se(family: EnergyFamily, theta, batch, bandwidth: float) -> tuple[float, float]:
    X = as_batch(batch, family.dim)
    scores = -family.grad_x(theta, X)
    return ksd_u_statistic(X, scores, bandwidth)
