"""Parametric energy families with exact derivatives, plus Gaussian oracles.

Each family evaluates E(theta, x) and its exact derivatives in batch form
(``X`` has shape ``(n, d)``). Scale-like parameters are stored in log space so
every real vector is a valid parameter point; the chain rule through that
reparameterization is included in every theta-derivative.

Conventions fixed here:
  * The additive constant of the energy is pinned per family (no constant for
    the Gaussian family, explicit coeff_0 for polynomials, the output bias for
    the MLP). Nothing in this module ever computes a partition function; the
    closed-form Gaussian oracles at the bottom exist so tests can.
  * ``laplacian_x`` is defined as the sum of coordinate Hessian-vector
    products, and is computed exactly that way, so the two agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .errors import InvalidArgumentError, NumericError
from .numerics import RealVector, RngStream

LOG_2PI = float(np.log(2.0 * np.pi))


# -- parameter vectors --------------------------------------------------------


@dataclass(frozen=True)
class LayoutField:
    name: str
    offset: int
    length: int


@dataclass(frozen=True)
class ParamVector:
    """Flat parameter vector plus named-slice layout."""

    values: np.ndarray
    layout: tuple[LayoutField, ...]

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1:
            raise InvalidArgumentError("ParamVector values must be 1-D")
        if not np.all(np.isfinite(vals)):
            raise NumericError("ParamVector values must be finite")
        expected = 0
        for f in self.layout:
            if f.offset != expected or f.length < 1:
                raise InvalidArgumentError(
                    f"layout field {f.name!r} is not contiguous at offset {f.offset}"
                )
            expected += f.length
        if expected != vals.size:
            raise InvalidArgumentError(
                f"layout covers {expected} entries but values have {vals.size}"
            )
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return int(self.values.size)

    def get(self, name: str) -> np.ndarray:
        for f in self.layout:
            if f.name == name:
                return self.values[f.offset:f.offset + f.length].copy()
        raise InvalidArgumentError(f"no parameter named {name!r} in layout")

    def has(self, name: str) -> bool:
        return any(f.name == name for f in self.layout)

    def with_values(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(np.asarray(values, dtype=np.float64), self.layout)

    def replace(self, name: str, value) -> "ParamVector":
        vals = self.values.copy()
        for f in self.layout:
            if f.name == name:
                vals[f.offset:f.offset + f.length] = value
                return self.with_values(vals)
        raise InvalidArgumentError(f"no parameter named {name!r} in layout")

    def column_names(self) -> list[str]:
        """One flat name per scalar entry, for CSV headers."""
        names = []
        for f in self.layout:
            if f.length == 1:
                names.append(f.name)
            else:
                names.extend(f"{f.name}_{i}" for i in range(f.length))
        return names


def build_layout(*fields: tuple[str, int]) -> tuple[LayoutField, ...]:
    out = []
    offset = 0
    for name, length in fields:
        out.append(LayoutField(name, offset, length))
        offset += length
    return tuple(out)


# -- family base ---------------------------------------------------------------


class EnergyFamily:
    """Shared contract for parametric energies over R^d.

    Subclasses implement the batched primitives. ``grad_theta_*`` variants of
    the mixed second derivatives are optional (``has_analytic_mixed``); when
    absent, estimators fall back to common-random-number finite differences
    over theta.
    """

    kind: str
    dim: int
    layout: tuple[LayoutField, ...]
    has_analytic_mixed: bool = False

    @property
    def param_count(self) -> int:
        return sum(f.length for f in self.layout)

    # construction helpers

    def params(self, values) -> ParamVector:
        return ParamVector(np.asarray(values, dtype=np.float64), self.layout)

    def init_params(self) -> ParamVector:
        return self.params(np.zeros(self.param_count))

    def random_params(self, rng: RngStream, scale: float = 0.5) -> ParamVector:
        return self.params(scale * rng.normal(self.param_count))

    # validation

    def check_theta(self, theta: ParamVector) -> np.ndarray:
        if isinstance(theta, ParamVector):
            if theta.layout != self.layout:
                raise InvalidArgumentError(
                    f"theta layout does not match {self.kind} family layout"
                )
            return theta.values
        arr = np.asarray(theta, dtype=np.float64)
        if arr.shape != (self.param_count,):
            raise InvalidArgumentError(
                f"theta must have {self.param_count} entries, got shape {arr.shape}"
            )
        return arr

    def check_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None] if self.dim == 1 else X[None, :]
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise InvalidArgumentError(
                f"points must have shape (n, {self.dim}), got {X.shape}"
            )
        return X

    # primitives (batched); subclasses override

    def energy(self, theta, X) -> np.ndarray:
        raise NotImplementedError

    def grad_x(self, theta, X) -> np.ndarray:
        raise NotImplementedError

    def grad_theta(self, theta, X) -> np.ndarray:
        raise NotImplementedError

    def hvp_x(self, theta, X, V) -> np.ndarray:
        raise NotImplementedError

    def laplacian_x(self, theta, X) -> np.ndarray:
        """Sum of coordinate HVPs: sum_i e_i . hvp(e_i). Exact by definition."""
        X = self.check_batch(X)
        n = X.shape[0]
        lap = np.zeros(n)
        for i in range(self.dim):
            V = np.zeros_like(X)
            V[:, i] = 1.0
            lap += self.hvp_x(theta, X, V)[:, i]
        return lap

    # optional analytic mixed second derivatives

    def grad_theta_dot_grad_x(self, theta, X, R) -> np.ndarray:
        """Rows of d/dtheta of (R . grad_x E) for a per-sample vector R."""
        raise NotImplementedError(f"{self.kind} has no analytic mixed derivatives")

    def grad_theta_laplacian(self, theta, X) -> np.ndarray:
        raise NotImplementedError(f"{self.kind} has no analytic mixed derivatives")

    def grad_theta_hvp_quad(self, theta, X, V) -> np.ndarray:
        """Rows of d/dtheta of (V . hessian E . V)."""
        raise NotImplementedError(f"{self.kind} has no analytic mixed derivatives")


# -- Gaussian family -----------------------------------------------------------


class GaussianEnergy(EnergyFamily):
    """E(x) = 0.5 (x - mu)' P (x - mu) with P = L L' from a log-Cholesky factor.

    Parameters: mu (d), chol_diag (d, stored as log of the diagonal of L),
    chol_low (strict lower triangle of L, row-major; present only for d > 1).
    The precision P is symmetric positive definite for every real theta.
    """

    has_analytic_mixed = True

    def __init__(self, dim: int):
        if dim < 1:
            raise InvalidArgumentError("gaussian dimension must be >= 1")
        self.kind = f"gaussian({dim})"
        self.dim = dim
        fields = [("mu", dim), ("chol_diag", dim)]
        n_low = dim * (dim - 1) // 2
        if n_low:
            fields.append(("chol_low", n_low))
        self.layout = build_layout(*fields)
        self._low_idx = np.tril_indices(dim, k=-1)

    def _unpack(self, theta):
        vals = self.check_theta(theta)
        d = self.dim
        mu = vals[:d]
        L = np.zeros((d, d))
        np.fill_diagonal(L, np.exp(vals[d:2 * d]))
        if d > 1:
            L[self._low_idx] = vals[2 * d:]
        return mu, L

    def from_moments(self, mean, var_diag) -> ParamVector:
        """Theta whose model density is N(mean, diag(var_diag))."""
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        var = np.atleast_1d(np.asarray(var_diag, dtype=np.float64))
        if mean.size != self.dim or var.size != self.dim or np.any(var <= 0):
            raise InvalidArgumentError("bad moments for gaussian family")
        vals = np.zeros(self.param_count)
        vals[:self.dim] = mean
        vals[self.dim:2 * self.dim] = -0.5 * np.log(var)  # L_ii = 1/sqrt(var)
        return self.params(vals)

    def to_density(self, theta) -> "GaussianDensity":
        """The normalized density proportional to exp(-E); diagonal L only."""
        mu, L = self._unpack(theta)
        if self.dim > 1 and np.any(L[self._low_idx] != 0.0):
            raise InvalidArgumentError(
                "to_density requires a diagonal Cholesky factor"
            )
        diag = np.diag(L)
        return GaussianDensity(mu, 1.0 / diag**2)

    def energy(self, theta, X):
        mu, L = self._unpack(theta)
        X = self.check_batch(X)
        W = (X - mu) @ L
        return 0.5 * np.sum(W * W, axis=1)

    def grad_x(self, theta, X):
        mu, L = self._unpack(theta)
        X = self.check_batch(X)
        return ((X - mu) @ L) @ L.T

    def hvp_x(self, theta, X, V):
        _, L = self._unpack(theta)
        X = self.check_batch(X)
        V = self.check_batch(V)
        return (V @ L) @ L.T

    def grad_theta(self, theta, X):
        mu, L = self._unpack(theta)
        X = self.check_batch(X)
        Rd = X - mu
        W = Rd @ L
        out = np.empty((X.shape[0], self.param_count))
        out[:, :self.dim] = -(W @ L.T)
        d = self.dim
        diag = np.diag(L)
        # dE/dL_ij = r_i w_j; log-diagonal chain multiplies by L_ii
        out[:, d:2 * d] = Rd * W * diag
        if d > 1:
            li, lj = self._low_idx
            out[:, 2 * d:] = Rd[:, li] * W[:, lj]
        return out

    def grad_theta_dot_grad_x(self, theta, X, R):
        mu, L = self._unpack(theta)
        X = self.check_batch(X)
        R = self.check_batch(R)
        Rd = X - mu
        W = Rd @ L
        LtR = R @ L
        d = self.dim
        out = np.empty((X.shape[0], self.param_count))
        out[:, :d] = -((R @ L) @ L.T)
        diag = np.diag(L)
        out[:, d:2 * d] = (R * W + Rd * LtR) * diag
        if d > 1:
            li, lj = self._low_idx
            out[:, 2 * d:] = R[:, li] * W[:, lj] + Rd[:, li] * LtR[:, lj]
        return out

    def grad_theta_laplacian(self, theta, X):
        _, L = self._unpack(theta)
        X = self.check_batch(X)
        d = self.dim
        row = np.zeros(self.param_count)
        diag = np.diag(L)
        row[d:2 * d] = 2.0 * diag**2
        if d > 1:
            li, lj = self._low_idx
            row[2 * d:] = 2.0 * L[self._low_idx]
        return np.broadcast_to(row, (X.shape[0], self.param_count)).copy()

    def grad_theta_hvp_quad(self, theta, X, V):
        _, L = self._unpack(theta)
        X = self.check_batch(X)
        V = self.check_batch(V)
        LtV = V @ L
        d = self.dim
        out = np.zeros((X.shape[0], self.param_count))
        diag = np.diag(L)
        out[:, d:2 * d] = 2.0 * V * LtV * diag
        if d > 1:
            li, lj = self._low_idx
            out[:, 2 * d:] = 2.0 * V[:, li] * LtV[:, lj]
        return out


# -- polynomial family (1-D) -----------------------------------------------------


def _power_matrix(t: np.ndarray, max_exp: int) -> np.ndarray:
    """Columns t^0 .. t^max_exp by iterated multiplication (cheaper than **)."""
    out = np.empty((t.size, max_exp + 1))
    out[:, 0] = 1.0
    for j in range(1, max_exp + 1):
        out[:, j] = out[:, j - 1] * t
    return out


class Poly1dEnergy(EnergyFamily):
    """E(x) = sum_j a_j x^j over R with even degree and positive top coefficient.

    The top coefficient is stored as log(a_degree), which keeps exp(-E)
    normalizable for every real theta. coeff_0 is the explicit additive
    constant; derivatives in x never touch it.
    """

    has_analytic_mixed = True

    def __init__(self, degree: int):
        if degree < 2 or degree % 2 != 0:
            raise InvalidArgumentError("poly1d degree must be even and >= 2")
        self.kind = f"poly1d({degree})"
        self.dim = 1
        self.degree = degree
        self.layout = build_layout(("coeff", degree), ("log_lead", 1))

    def _coeffs(self, theta):
        vals = self.check_theta(theta)
        a = np.empty(self.degree + 1)
        a[:self.degree] = vals[:self.degree]
        a[self.degree] = np.exp(vals[self.degree])
        return a

    def energy(self, theta, X):
        a = self._coeffs(theta)
        t = self.check_batch(X)[:, 0]
        return np.polynomial.polynomial.polyval(t, a)

    def grad_x(self, theta, X):
        a = self._coeffs(theta)
        j = np.arange(1, self.degree + 1)
        d1 = a[1:] * j
        t = self.check_batch(X)[:, 0]
        return np.polynomial.polynomial.polyval(t, d1)[:, None]

    def hvp_x(self, theta, X, V):
        a = self._coeffs(theta)
        j = np.arange(2, self.degree + 1)
        d2 = a[2:] * j * (j - 1)
        t = self.check_batch(X)[:, 0]
        V = self.check_batch(V)
        return np.polynomial.polynomial.polyval(t, d2)[:, None] * V

    def grad_theta(self, theta, X):
        a = self._coeffs(theta)
        t = self.check_batch(X)[:, 0]
        powers = _power_matrix(t, self.degree)
        out = np.empty((t.size, self.param_count))
        out[:, :self.degree] = powers[:, :self.degree]
        out[:, self.degree] = powers[:, self.degree] * a[self.degree]
        return out

    def grad_theta_dot_grad_x(self, theta, X, R):
        a = self._coeffs(theta)
        t = self.check_batch(X)[:, 0]
        rho = self.check_batch(R)[:, 0]
        j = np.arange(1, self.degree + 1)
        powers = _power_matrix(t, self.degree - 1)
        out = np.zeros((t.size, self.param_count))
        out[:, 1:self.degree] = rho[:, None] * j[None, :-1] * powers[:, :-1]
        out[:, self.degree] = rho * self.degree * powers[:, -1] * a[self.degree]
        return out

    def grad_theta_laplacian(self, theta, X):
        a = self._coeffs(theta)
        t = self.check_batch(X)[:, 0]
        j = np.arange(2, self.degree + 1)
        powers = _power_matrix(t, self.degree - 2)
        out = np.zeros((t.size, self.param_count))
        out[:, 2:self.degree] = (j * (j - 1))[None, :-1] * powers[:, :-1]
        out[:, self.degree] = (
            self.degree * (self.degree - 1) * powers[:, -1] * a[self.degree]
        )
        return out

    def grad_theta_hvp_quad(self, theta, X, V):
        V = self.check_batch(V)
        return self.grad_theta_laplacian(theta, X) * (V[:, 0] ** 2)[:, None]


# -- RBF mixture family ----------------------------------------------------------


class MixtureRbfEnergy(EnergyFamily):
    """E(x) = -log sum_k softmax(w)_k N(x; mu_k, exp(2 ls_k) I).

    exp(-E) is itself a normalized mixture density, so the weights are
    normalized by construction and every real theta is valid.

    Parameters: weight (K raw logits), mu (K*d, row-major per component),
    log_sigma (K).
    """

    def __init__(self, n_components: int, dim: int):
        if n_components < 1 or dim < 1:
            raise InvalidArgumentError("mixture needs K >= 1 and dim >= 1")
        self.kind = f"mixture_rbf({n_components},{dim})"
        self.dim = dim
        self.n_components = n_components
        self.layout = build_layout(
            ("weight", n_components), ("mu", n_components * dim),
            ("log_sigma", n_components),
        )

    def _unpack(self, theta):
        vals = self.check_theta(theta)
        K, d = self.n_components, self.dim
        w = vals[:K]
        mu = vals[K:K + K * d].reshape(K, d)
        ls = vals[K + K * d:]
        return w, mu, ls

    def _responsibilities(self, theta, X):
        """Returns (r, diffs, inv_var, sq_over_var) used by every derivative."""
        w, mu, ls = self._unpack(theta)
        X = self.check_batch(X)
        log_pi = w - logsumexp(w)
        var = np.exp(2.0 * ls)
        diffs = X[:, None, :] - mu[None, :, :]            # (n, K, d)
        sq = np.sum(diffs * diffs, axis=2)                # (n, K)
        log_phi = -0.5 * self.dim * LOG_2PI - self.dim * ls - 0.5 * sq / var
        log_terms = log_pi + log_phi
        log_p = logsumexp(log_terms, axis=1)
        r = np.exp(log_terms - log_p[:, None])
        return r, diffs, 1.0 / var, sq / var, log_p, log_pi

    def energy(self, theta, X):
        _, _, _, _, log_p, _ = self._responsibilities(theta, X)
        return -log_p

    def grad_x(self, theta, X):
        r, diffs, inv_var, _, _, _ = self._responsibilities(theta, X)
        g = diffs * inv_var[None, :, None]                # (n, K, d)
        return np.sum(r[:, :, None] * g, axis=1)

    def hvp_x(self, theta, X, V):
        r, diffs, inv_var, _, _, _ = self._responsibilities(theta, X)
        V = self.check_batch(V)
        g = diffs * inv_var[None, :, None]
        gv = np.sum(g * V[:, None, :], axis=2)            # (n, K)
        comp = V[:, None, :] * inv_var[None, :, None] - g * gv[:, :, None]
        m1 = np.sum(r[:, :, None] * g, axis=1)
        m1v = np.sum(m1 * V, axis=1)
        return np.sum(r[:, :, None] * comp, axis=1) + m1 * m1v[:, None]

    def grad_theta(self, theta, X):
        r, diffs, inv_var, sq_over_var, _, log_pi = self._responsibilities(theta, X)
        X = self.check_batch(X)
        n = X.shape[0]
        K, d = self.n_components, self.dim
        pi = np.exp(log_pi)
        out = np.empty((n, self.param_count))
        out[:, :K] = pi[None, :] - r
        g = diffs * inv_var[None, :, None]
        out[:, K:K + K * d] = (-r[:, :, None] * g).reshape(n, K * d)
        out[:, K + K * d:] = -r * (sq_over_var - d)
        return out


# -- MLP family -------------------------------------------------------------------


def _softplus(z):
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


class MlpEnergy(EnergyFamily):
    """Fully connected energy with softplus hidden layers and a linear output.

    Softplus keeps all second derivatives defined everywhere. The output bias
    is the family's additive constant. Gradients are hand-rolled reverse mode;
    Hessian-vector products propagate a forward tangent through that reverse
    sweep.
    """

    def __init__(self, layer_sizes):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or sizes[-1] != 1 or any(s < 1 for s in sizes):
            raise InvalidArgumentError(
                "mlp layer sizes must be [d, hidden..., 1] with positive entries"
            )
        self.kind = "mlp(" + "x".join(str(s) for s in sizes) + ")"
        self.dim = sizes[0]
        self.sizes = sizes
        fields = []
        for l in range(1, len(sizes)):
            fields.append((f"w{l}", sizes[l] * sizes[l - 1]))
            fields.append((f"b{l}", sizes[l]))
        self.layout = build_layout(*fields)

    def _unpack(self, theta):
        vals = self.check_theta(theta)
        Ws, bs = [], []
        pos = 0
        for l in range(1, len(self.sizes)):
            out_n, in_n = self.sizes[l], self.sizes[l - 1]
            Ws.append(vals[pos:pos + out_n * in_n].reshape(out_n, in_n))
            pos += out_n * in_n
            bs.append(vals[pos:pos + out_n])
            pos += out_n
        return Ws, bs

    def _forward(self, Ws, bs, X):
        acts = [X]
        zs = []
        a = X
        for l in range(len(Ws) - 1):
            z = a @ Ws[l].T + bs[l]
            zs.append(z)
            a = _softplus(z)
            acts.append(a)
        z_out = a @ Ws[-1].T + bs[-1]
        return zs, acts, z_out[:, 0]

    def _backward(self, Ws, zs, acts):
        """Per-layer sensitivities u_l = dE/dz_l for the scalar energy."""
        us = [None] * len(zs)
        upstream = np.broadcast_to(Ws[-1][0], (acts[0].shape[0], Ws[-1].shape[1]))
        for l in range(len(zs) - 1, -1, -1):
            us[l] = expit(zs[l]) * upstream
            if l > 0:
                upstream = us[l] @ Ws[l]
        return us

    def energy(self, theta, X):
        Ws, bs = self._unpack(theta)
        X = self.check_batch(X)
        _, _, e = self._forward(Ws, bs, X)
        return e

    def grad_x(self, theta, X):
        Ws, bs = self._unpack(theta)
        X = self.check_batch(X)
        zs, acts, _ = self._forward(Ws, bs, X)
        if not zs:  # linear model: E = W x + b
            return np.broadcast_to(Ws[0][0], X.shape).copy()
        us = self._backward(Ws, zs, acts)
        return us[0] @ Ws[0]

    def grad_theta(self, theta, X):
        Ws, bs = self._unpack(theta)
        X = self.check_batch(X)
        zs, acts, _ = self._forward(Ws, bs, X)
        n = X.shape[0]
        us = self._backward(Ws, zs, acts) if zs else []
        cols = []
        for l in range(len(Ws)):
            if l == len(Ws) - 1:
                dz = np.ones((n, 1))
            else:
                dz = us[l]
            a_prev = acts[l]
            cols.append(np.einsum("ni,nj->nij", dz, a_prev).reshape(n, -1))
            cols.append(dz)
        return np.concatenate(cols, axis=1)

    def hvp_x(self, theta, X, V):
        Ws, bs = self._unpack(theta)
        X = self.check_batch(X)
        V = self.check_batch(V)
        zs, acts, _ = self._forward(Ws, bs, X)
        if not zs:
            return np.zeros_like(V)
        # forward tangents
        dzs = []
        da = V
        for l in range(len(Ws) - 1):
            dz = da @ Ws[l].T
            dzs.append(dz)
            da = expit(zs[l]) * dz
        # tangent of the reverse sweep
        n = X.shape[0]
        upstream = np.broadcast_to(Ws[-1][0], (n, Ws[-1].shape[1]))
        d_upstream = np.zeros_like(upstream)
        for l in range(len(zs) - 1, -1, -1):
            s = expit(zs[l])
            sp2 = s * expit(-zs[l])  # softplus second derivative
            du = sp2 * dzs[l] * upstream + s * d_upstream
            if l > 0:
                u = s * upstream
                upstream = u @ Ws[l]
                d_upstream = du @ Ws[l]
            else:
                return du @ Ws[0]
        raise AssertionError("unreachable")


# -- registry ----------------------------------------------------------------------


def make_family(kind: str, **kwargs) -> EnergyFamily:
    """Build a family from its config name."""
    kind = kind.lower()
    if kind == "gaussian":
        return GaussianEnergy(int(kwargs["dim"]))
    if kind == "mixture_rbf":
        return MixtureRbfEnergy(int(kwargs["k"]), int(kwargs["dim"]))
    if kind == "poly1d":
        return Poly1dEnergy(int(kwargs["degree"]))
    if kind == "mlp":
        sizes = kwargs["layer_sizes"]
        if isinstance(sizes, str):
            sizes = [int(s) for s in sizes.split(",")]
        return MlpEnergy(sizes)
    raise InvalidArgumentError(
        f"unknown family kind {kind!r}; expected gaussian, mixture_rbf, poly1d, or mlp"
    )


# -- single-point wrappers -----------------------------------------------------------


def _one(x, family: EnergyFamily) -> np.ndarray:
    arr = x.entries if isinstance(x, RealVector) else np.asarray(x, dtype=np.float64)
    arr = np.atleast_1d(arr)
    if arr.shape != (family.dim,):
        raise InvalidArgumentError(
            f"point must have dimension {family.dim}, got shape {arr.shape}"
        )
    return arr[None, :]


def energy(family: EnergyFamily, theta, x) -> float:
    return float(family.energy(theta, _one(x, family))[0])


def score(family: EnergyFamily, theta, x) -> RealVector:
    """grad_x log p = -grad_x E; the partition constant never enters."""
    return RealVector(-family.grad_x(theta, _one(x, family))[0])


def grad_theta_energy(family: EnergyFamily, theta, x) -> RealVector:
    return RealVector(family.grad_theta(theta, _one(x, family))[0])


def hvp_x(family: EnergyFamily, theta, x, v) -> RealVector:
    return RealVector(family.hvp_x(theta, _one(x, family), _one(v, family))[0])


def laplacian_x(family: EnergyFamily, theta, x) -> float:
    return float(family.laplacian_x(theta, _one(x, family))[0])


# -- Gaussian oracles ------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianDensity:
    """Diagonal-covariance Gaussian with exact log-density and score."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        var = np.atleast_1d(np.asarray(self.variance, dtype=np.float64))
        if var.shape != mean.shape:
            var = np.broadcast_to(var, mean.shape).copy()
        if np.any(var <= 0) or not np.all(np.isfinite(var)) or not np.all(np.isfinite(mean)):
            raise InvalidArgumentError("variance must be finite and positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)

    @property
    def dim(self) -> int:
        return int(self.mean.size)

    def logpdf(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None] if self.dim == 1 else X[None, :]
        z2 = (X - self.mean) ** 2 / self.variance
        return -0.5 * np.sum(z2 + np.log(self.variance) + LOG_2PI, axis=1)

    def score(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None] if self.dim == 1 else X[None, :]
        return -(X - self.mean) / self.variance

    def sample(self, rng: RngStream, n: int) -> np.ndarray:
        return self.mean + np.sqrt(self.variance) * rng.normal((n, self.dim))

    def smoothed(self, t: float) -> "GaussianDensity":
        """Density after adding N(0, t I) noise."""
        if t < 0:
            raise InvalidArgumentError("smoothing variance must be >= 0")
        return GaussianDensity(self.mean, self.variance + t)


def _check_pair(p: GaussianDensity, q: GaussianDensity):
    if p.dim != q.dim:
        raise InvalidArgumentError("dimension mismatch between densities")


def gaussian_kl(p: GaussianDensity, q: GaussianDensity) -> float:
    """KL(p || q) in closed form for diagonal Gaussians."""
    _check_pair(p, q)
    ratio = p.variance / q.variance
    quad = (p.mean - q.mean) ** 2 / q.variance
    return float(0.5 * np.sum(np.log(q.variance / p.variance) + ratio + quad - 1.0))


def gaussian_fisher_divergence(p: GaussianDensity, q: GaussianDensity) -> float:
    """0.5 E_p |grad log p - grad log q|^2 in closed form (diagonal case)."""
    _check_pair(p, q)
    var_term = p.variance * (1.0 / p.variance - 1.0 / q.variance) ** 2
    mean_term = (p.mean - q.mean) ** 2 / q.variance**2
    return float(0.5 * np.sum(var_term + mean_term))


def gaussian_fisher_theta_gradient(data: GaussianDensity,
                                   family: GaussianEnergy, theta) -> np.ndarray:
    """Exact d/dtheta of the Fisher divergence from `data` to the model.

    Model density is the normalized exp(-E) of a 1-D Gaussian family; the
    gradient is taken through the (mu, log-Cholesky) parameterization. Only
    the 1-D case has this closed form here (the diagonal oracle does not
    extend in off-diagonal Cholesky directions).
    """
    if family.dim != 1 or data.dim != 1:
        raise InvalidArgumentError("closed-form theta-gradient is 1-D only")
    vals = family.check_theta(theta)
    mu, s = vals[0], vals[1]
    P = np.exp(2.0 * s)
    v1 = float(data.variance[0])
    m = float(data.mean[0])
    d_mu = -(P**2) * (m - mu)
    d_P = v1 * (P - 1.0 / v1) + P * (m - mu) ** 2
    return np.array([d_mu, 2.0 * P * d_P])
