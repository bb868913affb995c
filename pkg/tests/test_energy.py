import numpy as np
import pytest

from ebmlab.energy import (
    GaussianDensity,
    GaussianEnergy,
    MixtureRbfEnergy,
    MlpEnergy,
    Poly1dEnergy,
    energy,
    gaussian_fisher_divergence,
    gaussian_fisher_theta_gradient,
    gaussian_kl,
    grad_theta_energy,
    hvp_x,
    laplacian_x,
    make_family,
    score,
)
from ebmlab.errors import InvalidArgumentError
from ebmlab.numerics import RngStream, finite_diff_gradient, relative_error

FAMILIES = [
    GaussianEnergy(1),
    GaussianEnergy(2),
    GaussianEnergy(3),
    MixtureRbfEnergy(3, 2),
    Poly1dEnergy(4),
    MlpEnergy([2, 6, 1]),
]


def _random_pair(family, rng):
    theta = family.random_params(rng, scale=0.6)
    x = rng.normal(family.dim) * 1.5
    return theta, x


# -- spec examples -------------------------------------------------------------


def test_gaussian_energy_values():
    fam = GaussianEnergy(1)
    theta = fam.from_moments(0.0, 1.0)
    assert energy(fam, theta, [0.0]) == 0.0
    assert energy(fam, theta, [2.0]) == pytest.approx(2.0)


def test_poly_energy_value():
    fam = Poly1dEnergy(4)
    theta = fam.params([0.0, 0.0, 0.0, 0.0, 0.0])  # log_lead = 0 -> a4 = 1
    assert energy(fam, theta, [2.0]) == pytest.approx(16.0)


def test_gaussian_score_value():
    fam = GaussianEnergy(1)
    theta = fam.from_moments(0.0, 1.0)
    assert score(fam, theta, [2.0]).entries[0] == pytest.approx(-2.0)


def test_gaussian_grad_theta_mu_component():
    fam = GaussianEnergy(1)
    theta = fam.from_moments(0.0, 1.0)
    g = grad_theta_energy(fam, theta, [2.0])
    assert g.entries[0] == pytest.approx(-2.0)  # dE/dmu = -prec (x - mu)


def test_single_component_mixture_matches_gaussian_score():
    mix = MixtureRbfEnergy(1, 2)
    gauss = GaussianEnergy(2)
    mu = np.array([0.4, -0.2])
    sigma = 0.8
    theta_mix = mix.params(np.concatenate([[0.0], mu, [np.log(sigma)]]))
    theta_g = gauss.from_moments(mu, sigma**2 * np.ones(2))
    X = RngStream(seed=4).normal((20, 2))
    np.testing.assert_allclose(
        mix.grad_x(theta_mix, X), gauss.grad_x(theta_g, X), rtol=1e-12
    )


def test_gaussian_hvp_is_precision_times_v():
    fam = GaussianEnergy(2)
    theta = fam.from_moments([0.0, 0.0], [1.0, 0.25])
    v = np.array([1.0, 2.0])
    out = hvp_x(fam, theta, [5.0, -3.0], v)
    np.testing.assert_allclose(out.entries, [1.0, 8.0], rtol=1e-12)


def test_gaussian_laplacian_is_trace_of_precision():
    fam = GaussianEnergy(2)
    theta = fam.from_moments([0.0, 0.0], [1.0, 0.25])  # precision diag(1, 4)
    assert laplacian_x(fam, theta, [0.3, 0.7]) == pytest.approx(5.0)


def test_poly_laplacian_value():
    fam = Poly1dEnergy(4)
    theta = fam.params([0.0, 0.0, 0.0, 0.0, 0.0])
    assert laplacian_x(fam, theta, [1.0]) == pytest.approx(12.0)


def test_mlp_final_bias_gradient_is_one():
    fam = MlpEnergy([2, 4, 1])
    vals = np.zeros(fam.param_count)
    theta = fam.params(vals)
    for x in ([0.0, 0.0], [3.0, -1.0], [-2.0, 5.0]):
        g = grad_theta_energy(fam, theta, x)
        assert g.entries[-1] == 1.0


# -- finite-difference oracle sweeps ------------------------------------------


@pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f.kind)
def test_score_matches_fd_oracle(family):
    rng = RngStream(seed=101)
    for _ in range(100):
        theta, x = _random_pair(family, rng)

        def e_of_x(xv):
            return family.energy(theta, xv[None, :])[0]

        fd = finite_diff_gradient(e_of_x, x)
        s = score(family, theta, x)
        assert relative_error(s.entries, -fd) < 1e-5


@pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f.kind)
def test_grad_theta_matches_fd_oracle(family):
    rng = RngStream(seed=102)
    for _ in range(100):
        theta, x = _random_pair(family, rng)

        def e_of_theta(tv):
            return family.energy(family.params(tv), x[None, :])[0]

        fd = finite_diff_gradient(e_of_theta, theta.values)
        g = grad_theta_energy(family, theta, x)
        assert relative_error(g.entries, fd) < 1e-5


@pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f.kind)
def test_hvp_matches_fd_of_gradient(family):
    rng = RngStream(seed=103)
    for _ in range(100):
        theta, x = _random_pair(family, rng)
        v = rng.normal(family.dim)
        h = 1e-5
        gp = family.grad_x(theta, (x + h * v)[None, :])[0]
        gm = family.grad_x(theta, (x - h * v)[None, :])[0]
        fd = (gp - gm) / (2.0 * h)
        out = family.hvp_x(theta, x[None, :], v[None, :])[0]
        assert relative_error(out, fd) < 1e-4


@pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f.kind)
def test_hvp_symmetric_and_linear(family):
    rng = RngStream(seed=104)
    for _ in range(20):
        theta, x = _random_pair(family, rng)
        u = rng.normal(family.dim)
        v = rng.normal(family.dim)
        hu = family.hvp_x(theta, x[None, :], u[None, :])[0]
        hv = family.hvp_x(theta, x[None, :], v[None, :])[0]
        assert abs(float(v @ hu) - float(u @ hv)) < 1e-10
        hsum = family.hvp_x(theta, x[None, :], (2.0 * u + v)[None, :])[0]
        np.testing.assert_allclose(hsum, 2.0 * hu + hv, atol=1e-10)


@pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f.kind)
def test_laplacian_equals_sum_of_coordinate_hvps(family):
    rng = RngStream(seed=105)
    theta, x = _random_pair(family, rng)
    X = rng.normal((5, family.dim))
    total = np.zeros(5)
    for i in range(family.dim):
        V = np.zeros_like(X)
        V[:, i] = 1.0
        total += family.hvp_x(theta, X, V)[:, i]
    assert np.array_equal(family.laplacian_x(theta, X), total)


@pytest.mark.parametrize(
    "family", [f for f in FAMILIES if f.has_analytic_mixed], ids=lambda f: f.kind
)
def test_analytic_mixed_derivatives_match_fd(family):
    rng = RngStream(seed=106)
    for _ in range(25):
        theta, x = _random_pair(family, rng)
        r = rng.normal(family.dim)
        v = rng.normal(family.dim)

        def rdotg(tv):
            return float(r @ family.grad_x(family.params(tv), x[None, :])[0])

        def lap(tv):
            return float(family.laplacian_x(family.params(tv), x[None, :])[0])

        def quad(tv):
            return float(v @ family.hvp_x(family.params(tv), x[None, :], v[None, :])[0])

        got = family.grad_theta_dot_grad_x(theta, x[None, :], r[None, :])[0]
        assert relative_error(got, finite_diff_gradient(rdotg, theta.values)) < 1e-5
        got = family.grad_theta_laplacian(theta, x[None, :])[0]
        fd = finite_diff_gradient(lap, theta.values)
        assert np.linalg.norm(got - fd) < 1e-5 * (1.0 + np.linalg.norm(fd))
        got = family.grad_theta_hvp_quad(theta, x[None, :], v[None, :])[0]
        fd = finite_diff_gradient(quad, theta.values)
        assert np.linalg.norm(got - fd) < 1e-5 * (1.0 + np.linalg.norm(fd))


def test_poly_constant_shift_only_moves_energy():
    fam = Poly1dEnergy(4)
    rng = RngStream(seed=107)
    theta = fam.random_params(rng)
    shifted = theta.replace("coeff", theta.get("coeff") + np.array([7.0, 0, 0, 0]))
    X = rng.normal((6, 1))
    V = rng.normal((6, 1))
    assert not np.allclose(fam.energy(theta, X), fam.energy(shifted, X))
    assert np.array_equal(fam.grad_x(theta, X), fam.grad_x(shifted, X))
    assert np.array_equal(fam.hvp_x(theta, X, V), fam.hvp_x(shifted, X, V))
    assert np.array_equal(fam.laplacian_x(theta, X), fam.laplacian_x(shifted, X))


# -- validation ----------------------------------------------------------------


def test_dim_mismatch_rejected():
    fam = GaussianEnergy(2)
    theta = fam.init_params()
    with pytest.raises(InvalidArgumentError):
        energy(fam, theta, [1.0, 2.0, 3.0])


def test_layout_mismatch_rejected():
    fam = GaussianEnergy(2)
    other = GaussianEnergy(3)
    with pytest.raises(InvalidArgumentError):
        energy(fam, other.init_params(), [0.0, 0.0])


def test_poly_degree_must_be_even():
    with pytest.raises(InvalidArgumentError):
        Poly1dEnergy(3)


def test_make_family_registry():
    assert make_family("gaussian", dim=2).kind == "gaussian(2)"
    assert make_family("mixture_rbf", k=2, dim=1).kind == "mixture_rbf(2,1)"
    assert make_family("poly1d", degree=4).kind == "poly1d(4)"
    assert make_family("mlp", layer_sizes="1,8,1").kind == "mlp(1x8x1)"
    with pytest.raises(InvalidArgumentError):
        make_family("boltzmann")


# -- Gaussian oracles ------------------------------------------------------------


def test_kl_zero_for_identical():
    p = GaussianDensity([0.3], [1.7])
    assert gaussian_kl(p, p) == 0.0


def test_kl_unit_variance_mean_shift():
    p = GaussianDensity([0.0], [1.0])
    q = GaussianDensity([1.0], [1.0])
    assert gaussian_kl(p, q) == pytest.approx(0.5)


def test_kl_nonnegative_on_random_pairs():
    rng = RngStream(seed=201)
    for _ in range(100):
        d = int(rng.integers(1, 4))
        p = GaussianDensity(rng.normal(d), np.exp(rng.normal(d)))
        q = GaussianDensity(rng.normal(d), np.exp(rng.normal(d)))
        assert gaussian_kl(p, q) >= 0.0


def test_fisher_zero_for_identical():
    p = GaussianDensity([0.1, -0.2], [0.5, 2.0])
    assert gaussian_fisher_divergence(p, p) == 0.0


def test_fisher_unit_variance_mean_shift():
    m = 0.7
    p = GaussianDensity([0.0], [1.0])
    q = GaussianDensity([m], [1.0])
    assert gaussian_fisher_divergence(p, q) == pytest.approx(0.5 * m**2)


def test_fisher_agrees_with_monte_carlo():
    p = GaussianDensity([0.4], [1.3])
    q = GaussianDensity([-0.5], [0.8])
    X = p.sample(RngStream(seed=202), 1_000_000)
    sq = np.sum((p.score(X) - q.score(X)) ** 2, axis=1)
    mc = 0.5 * sq.mean()
    se = 0.5 * sq.std() / np.sqrt(sq.size)
    assert abs(mc - gaussian_fisher_divergence(p, q)) < 3.0 * se


def test_fisher_rejects_dim_mismatch():
    with pytest.raises(InvalidArgumentError):
        gaussian_fisher_divergence(GaussianDensity([0.0], [1.0]),
                                   GaussianDensity([0.0, 0.0], [1.0, 1.0]))


def test_density_rejects_non_pd_variance():
    with pytest.raises(InvalidArgumentError):
        GaussianDensity([0.0], [0.0])


def test_fisher_theta_gradient_matches_fd_of_closed_form():
    fam = GaussianEnergy(1)
    data = GaussianDensity([0.5], [1.0])
    theta = fam.params([0.1, 0.2])

    def closed(tv):
        return gaussian_fisher_divergence(data, fam.to_density(fam.params(tv)))

    fd = finite_diff_gradient(closed, theta.values)
    got = gaussian_fisher_theta_gradient(data, fam, theta)
    assert relative_error(got, fd) < 1e-7


def test_gaussian_from_moments_roundtrip():
    fam = GaussianEnergy(2)
    theta = fam.from_moments([0.5, -1.0], [4.0, 0.25])
    dens = fam.to_density(theta)
    np.testing.assert_allclose(dens.mean, [0.5, -1.0])
    np.testing.assert_allclose(dens.variance, [4.0, 0.25])
