import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from betagas.kernels import KernelModel, available_backends
from betagas.model import (
    AdmissibilityWarning,
    EffectiveField,
    EnsembleSpec,
    ExternalField,
    FourierQuadrature,
    GridMeasure,
    InteractionPotential,
    QuadratureWarning,
    convolve,
    double_convolve,
    grad_hamiltonian,
    grad_u,
    hamiltonian,
    hoeffding_terms,
    u_direct,
    u_fourier,
)

GAUSS = InteractionPotential.gaussian(1.0, 1.0)


def central_difference(fn, x, step=1e-6):
    g = np.empty_like(x)
    for i in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        g[i] = (fn(xp) - fn(xm)) / (2 * step)
    return g


def random_measure(rng, n_cells=64, left=-2.0, right=2.0):
    return GridMeasure.from_unnormalized(left, right, rng.random(n_cells))


class TestExternalField:
    def test_even(self):
        rng = np.random.default_rng(0)
        t = rng.uniform(-4, 4, 100)
        for Q in (ExternalField.gaussian(), ExternalField("even-polynomial", (0.0, 1.0, 0.1)),
                  ExternalField("gaussian-plus-bump", (1.0, 0.2, 1.0))):
            np.testing.assert_array_equal(Q(t), Q(-t))

    def test_strong_convexity_recorded(self):
        assert ExternalField.gaussian(1.0).alpha == pytest.approx(2.0)
        Q = ExternalField("gaussian-plus-bump", (1.0, 0.2, 1.0))
        grid = np.linspace(-4, 4, 4001)
        assert Q.alpha == pytest.approx(np.min(Q.second_derivative(grid)))
        assert 0 < Q.alpha < 2

    def test_non_convex_rejected(self):
        with pytest.raises(ValueError, match="strongly convex"):
            ExternalField("gaussian-plus-bump", (1.0, 2.0, 1.0))
        with pytest.raises(ValueError):
            ExternalField("quartic", (1.0,))

    def test_growth(self):
        assert ExternalField.gaussian().growth_ok(2.0)

    def test_derivatives_match_differences(self):
        Q = ExternalField("even-polynomial", (0.5, 1.0, 0.05))
        t = np.linspace(-3, 3, 13)
        d = (Q(t + 1e-6) - Q(t - 1e-6)) / 2e-6
        np.testing.assert_allclose(Q.derivative(t), d, rtol=1e-7, atol=1e-7)
        dd = (Q.derivative(t + 1e-6) - Q.derivative(t - 1e-6)) / 2e-6
        np.testing.assert_allclose(Q.second_derivative(t), dd, rtol=1e-7, atol=1e-7)

    def test_dict_round_trip(self):
        Q = ExternalField("gaussian-plus-bump", (1.0, 0.2, 1.0), 5.0)
        assert ExternalField.from_dict(Q.to_dict()) == Q


class TestInteractionPotential:
    def test_even_and_bounded(self):
        h = InteractionPotential(((0.3, 1.0), (-0.1, 4.0)))
        t = np.linspace(-10, 10, 201)
        np.testing.assert_array_equal(h(t), h(-t))
        assert np.all(np.abs(h(t)) <= h.sup_abs)
        assert abs(float(h(50.0))) < 1e-300

    def test_fourier_matches_quadrature(self):
        from scipy.integrate import quad
        h = InteractionPotential(((0.3, 1.0), (0.2, 0.25)))
        for t in (0.0, 0.7, 2.5):
            num = quad(lambda s: float(h(s)) * math.cos(t * s), -np.inf, np.inf)[0] / math.sqrt(2 * math.pi)
            assert float(h.fourier(t)) == pytest.approx(num, rel=1e-9)

    def test_curvature_bound(self):
        h = InteractionPotential.gaussian(0.1, 1.0)
        grid = np.linspace(-5, 5, 20001)
        assert h.alpha_h == pytest.approx(np.max(-h.second_derivative(grid)), rel=1e-6)
        assert h.alpha_h == pytest.approx(0.2, rel=1e-6)

    def test_positive_semidefinite(self):
        assert InteractionPotential.gaussian(0.1).is_positive_semidefinite
        assert not InteractionPotential.gaussian(-0.1).is_positive_semidefinite
        assert InteractionPotential.zero().is_zero

    def test_invalid_width(self):
        with pytest.raises(ValueError):
            InteractionPotential(((1.0, 0.0),))


class TestEnsembleSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            EnsembleSpec(0, 2.0)
        with pytest.raises(ValueError):
            EnsembleSpec(3, 0.0)

    def test_admissibility(self):
        spec = EnsembleSpec(10, 2.0, ExternalField.gaussian(), InteractionPotential.gaussian(0.1))
        assert spec.admissible and spec.certified
        spec = EnsembleSpec(10, 2.0, ExternalField.gaussian(), InteractionPotential.gaussian(2.0))
        assert not spec.admissible

    def test_non_psd_is_advisory(self):
        with pytest.warns(AdmissibilityWarning):
            spec = EnsembleSpec(10, 2.0, ExternalField.gaussian(), InteractionPotential.gaussian(-0.1))
        assert not spec.certified


class TestGridMeasure:
    def test_normalization_enforced(self):
        with pytest.raises(ValueError, match="normalized"):
            GridMeasure(-1, 1, 2, np.array([0.5, 0.6]))
        with pytest.raises(ValueError):
            GridMeasure(-1, 1, 2, np.array([1.5, -0.5]))

    def test_support(self):
        w = np.zeros(10)
        w[3:7] = 0.25
        mu = GridMeasure(0.0, 10.0, 10, w)
        assert mu.support() == (3.0, 7.0)

    def test_weights_read_only(self):
        mu = GridMeasure.uniform(-1, 1, 8)
        with pytest.raises(ValueError):
            mu.weights[0] = 1.0


class TestConvolutions:
    def test_zero_interaction(self):
        mu = random_measure(np.random.default_rng(1))
        s = np.linspace(-3, 3, 7)
        np.testing.assert_array_equal(convolve(InteractionPotential.zero(), mu, s), 0.0)
        assert double_convolve(InteractionPotential.zero(), mu) == 0.0

    def test_point_mass(self):
        s = np.linspace(-3, 3, 7)
        mu = GridMeasure.point_mass(0.7)
        np.testing.assert_allclose(convolve(GAUSS, mu, s), np.exp(-(0.7 - s) ** 2), rtol=1e-15)
        assert double_convolve(GAUSS, mu) == pytest.approx(1.0)

    def test_even_measure_gives_even_convolution(self):
        w = np.random.default_rng(2).random(32)
        mu = GridMeasure.from_unnormalized(-2, 2, w + w[::-1])
        s = np.linspace(-3, 3, 25)
        np.testing.assert_allclose(convolve(GAUSS, mu, s), convolve(GAUSS, mu, -s), rtol=1e-13)

    def test_two_atoms(self):
        mu = GridMeasure(-1.5, 1.5, 3, np.array([0.5, 0.0, 0.5]))
        assert double_convolve(GAUSS, mu) == pytest.approx(0.5 * (1 + math.exp(-4)), rel=1e-15)

    def test_unnormalized_rejected(self):
        mu = GridMeasure.uniform(-1, 1, 4)
        object.__setattr__(mu, "weights", np.full(4, 0.3))
        with pytest.raises(ValueError):
            convolve(GAUSS, mu, np.zeros(1))


class TestHamiltonian:
    spec = EnsembleSpec(2, 2.0, ExternalField.gaussian())

    def test_hand_value(self):
        assert hamiltonian([0.0, 1.0], self.spec) == pytest.approx(2.0, rel=1e-15)

    def test_coincidence_is_infinite(self):
        assert hamiltonian([0.0, 0.0], self.spec) == math.inf

    def test_pair_term(self):
        spec = EnsembleSpec(2, 2.0, ExternalField.gaussian(), GAUSS)
        assert hamiltonian([0.0, 1.0], spec) == pytest.approx(2.0 + math.exp(-1.0), rel=1e-15)

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            hamiltonian([0.0, math.nan], self.spec)

    def test_gradient_single_particle(self):
        spec = EnsembleSpec(1, 2.0, ExternalField.gaussian())
        np.testing.assert_allclose(grad_hamiltonian([0.5], spec), [1.0])

    def test_gradient_finite_differences(self):
        rng = np.random.default_rng(3)
        spec = EnsembleSpec(6, 2.0, ExternalField("gaussian-plus-bump", (1.0, 0.2, 1.0)),
                            InteractionPotential(((0.3, 1.0), (0.1, 0.3))))
        x = np.sort(rng.uniform(-1.5, 1.5, 6))
        fd = central_difference(lambda y: hamiltonian(y, spec), x)
        g = grad_hamiltonian(x, spec)
        assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) <= 1e-5

    def test_gradient_antisymmetric(self):
        g = grad_hamiltonian([-0.4, 0.4], self.spec)
        assert g[0] == -g[1]

    def test_gradient_coincidence_raises(self):
        with pytest.raises(ValueError):
            grad_hamiltonian([0.2, 0.2], self.spec)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(4)
        spec = EnsembleSpec(7, 2.0, ExternalField.gaussian(), GAUSS)
        mu = random_measure(rng)
        x = rng.normal(size=7)
        p = rng.permutation(7)
        assert hamiltonian(x, spec) == hamiltonian(x[p], spec)
        assert u_direct(x, GAUSS, mu) == u_direct(x[p], GAUSS, mu)


class TestFluctuationTerm:
    def test_zero_interaction(self):
        rng = np.random.default_rng(5)
        mu = random_measure(rng)
        x = rng.normal(size=5)
        assert u_direct(x, InteractionPotential.zero(), mu) == 0.0
        assert u_fourier(x, InteractionPotential.zero(), mu) == 0.0
        np.testing.assert_array_equal(grad_u(x, InteractionPotential.zero(), mu), 0.0)

    def test_single_particle_point_mass(self):
        mu = GridMeasure.point_mass(0.0)
        for x1 in (0.0, 0.3, -1.2):
            assert u_direct([x1], GAUSS, mu) == pytest.approx(float(GAUSS(x1)) - 1.0, abs=1e-15)

    def test_decomposition_identity(self):
        rng = np.random.default_rng(6)
        h = InteractionPotential(((0.4, 0.8), (-0.1, 3.0)))
        x = rng.normal(size=8)
        mu = random_measure(rng)
        t = hoeffding_terms(x, h, mu)
        lhs = t["pair_sum"]
        rhs = t["constant"] + t["one_body"] - t["U"]
        assert abs(lhs - rhs) <= 1e-10 * max(abs(v) for v in t.values())

    def test_fourier_matches_direct(self):
        rng = np.random.default_rng(7)
        h = InteractionPotential.gaussian(0.5, 1.3)
        mu = random_measure(rng)
        x = rng.normal(size=8)
        assert abs(u_fourier(x, h, mu) - u_direct(x, h, mu)) <= 1e-6

    def test_fourier_matches_direct_uneven_measure(self):
        rng = np.random.default_rng(8)
        mu = GridMeasure.from_unnormalized(0.0, 3.0, rng.random(40))
        x = rng.normal(size=6)
        assert abs(u_fourier(x, GAUSS, mu) - u_direct(x, GAUSS, mu)) <= 1e-6

    def test_small_window_warns(self):
        mu = GridMeasure.uniform(-1, 1, 16)
        with pytest.warns(QuadratureWarning):
            u_fourier(np.array([0.1, 0.5]), GAUSS, mu, FourierQuadrature(t_max=1.0))

    def test_gradient_finite_differences(self):
        rng = np.random.default_rng(9)
        h = InteractionPotential(((0.4, 0.8), (0.2, 3.0)))
        mu = random_measure(rng)
        x = rng.normal(size=6)
        fd = central_difference(lambda y: u_direct(y, h, mu), x)
        g = grad_u(x, h, mu)
        assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) <= 1e-5

    def test_gradient_antisymmetric_under_reflection(self):
        w = np.random.default_rng(10).random(32)
        mu = GridMeasure.from_unnormalized(-2, 2, w + w[::-1])
        x = np.array([-1.1, -0.3, 0.3, 1.1])
        g = grad_u(x, GAUSS, mu)
        np.testing.assert_allclose(g, -g[::-1], atol=1e-14)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), N=st.integers(1, 32),
           amps=st.lists(st.floats(0.01, 2.0), min_size=1, max_size=3),
           widths=st.lists(st.floats(0.1, 5.0), min_size=3, max_size=3))
    def test_sign_law_and_identity(self, seed, N, amps, widths):
        rng = np.random.default_rng(seed)
        h = InteractionPotential(tuple(zip(amps, widths)))
        mu = random_measure(rng, n_cells=int(rng.integers(1, 50)), left=-3.0, right=float(rng.uniform(-2.9, 3)))
        x = rng.normal(scale=1.5, size=N)
        assert u_direct(x, h, mu) <= 1e-12
        t = hoeffding_terms(x, h, mu)
        rhs = t["constant"] + t["one_body"] - t["U"]
        assert abs(t["pair_sum"] - rhs) <= 1e-10 * max(abs(v) for v in t.values())


class TestEffectiveField:
    def test_matches_direct_convolution(self):
        from betagas.equilibrium import semicircle_measure
        mu = semicircle_measure(math.sqrt(2), -3, 3, 256)
        V = EffectiveField(ExternalField.gaussian(), GAUSS, mu)
        t = np.linspace(-4, 4, 97)
        np.testing.assert_allclose(V(t), t * t + convolve(GAUSS, mu, t), atol=1e-9)
        d = (V(t + 1e-6) - V(t - 1e-6)) / 2e-6
        np.testing.assert_allclose(V.derivative(t), d, atol=1e-6)


class TestBackends:
    @pytest.mark.skipif(len(available_backends()) < 2, reason="compiled kernels not built")
    def test_backends_agree(self):
        rng = np.random.default_rng(11)
        spec = EnsembleSpec(12, 2.0, ExternalField("gaussian-plus-bump", (1.0, 0.2, 1.0)), GAUSS)
        py, cy = KernelModel(spec, "python"), KernelModel(spec, "cython")
        x = np.sort(rng.normal(size=12))
        assert py.energy(x) == pytest.approx(cy.energy(x), rel=1e-13)
        np.testing.assert_allclose(py.gradient(x), cy.gradient(x), rtol=1e-12)
        sites = rng.integers(0, 12, 2000)
        inc = rng.normal(scale=0.1, size=2000)
        log_u = np.log(rng.random(2000))
        xa, xb = x.copy(), x.copy()
        na = py.metropolis_block(xa, sites, inc, log_u)
        nb = cy.metropolis_block(xb, sites, inc, log_u)
        assert na == nb
        np.testing.assert_array_equal(xa, xb)

    @pytest.mark.parametrize("backend", available_backends())
    def test_energy_matches_reference(self, backend):
        rng = np.random.default_rng(12)
        spec = EnsembleSpec(9, 2.5, ExternalField("even-polynomial", (0.0, 1.0, 0.1)), GAUSS)
        x = rng.normal(size=9)
        assert KernelModel(spec, backend).energy(x) == pytest.approx(hamiltonian(x, spec), rel=1e-12)
        np.testing.assert_allclose(KernelModel(spec, backend).gradient(x), grad_hamiltonian(x, spec),
                                   rtol=1e-10)
