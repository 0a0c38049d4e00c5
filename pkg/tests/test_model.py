"""test the model module."""

import numpy as np
import pytest

from tamdlab.errors import ConfigError
from tamdlab.model import (CollectiveVariable, Domain, Separable, State,
                           TamdParams, TiltedCoupling, TrigSeries, ZBiased,
                           derivatives, evaluate, parse_terms, wrap)

TWO_PI = 2 * np.pi


def numeric_derivatives(pot, q, z, h=1e-6, h2=1e-4):
    """Central differences of U in q and z."""
    dq = (evaluate(pot, q + h, z) - evaluate(pot, q - h, z)) / (2 * h)
    dz = (evaluate(pot, q, z + h) - evaluate(pot, q, z - h)) / (2 * h)
    dzz = (evaluate(pot, q, z + h2) - 2 * evaluate(pot, q, z)
           + evaluate(pot, q, z - h2)) / h2**2
    return dq, dz, dzz


class TestDomain:
    """Test the Domain class."""

    def test_validation(self):
        """Test invalid fields raise ConfigError."""
        with pytest.raises(ConfigError, match="lq"):
            Domain(lq=0)
        with pytest.raises(ConfigError, match="d"):
            Domain(d=0)

    def test_wrap(self):
        """Test positions are wrapped and momenta kept."""
        domain = Domain(lq=2.0, lz=1.0)
        state = wrap(domain, State([2.5], -0.25, [3.0]))
        assert state.q[0] == pytest.approx(0.5)
        assert state.z == pytest.approx(0.75)
        assert state.p[0] == 3.0

    def test_wrap_tiny_negative(self):
        """Test values just below zero wrap to 0 rather than the period."""
        domain = Domain()
        # test np.mod alone rounds -1e-18 up to the period
        assert np.mod(-1e-18, domain.lz) == domain.lz
        assert domain.wrap_z(-1e-18) == 0.0
        state = wrap(domain, State([-1e-18], -1e-18))
        assert state.q[0] == 0.0
        assert state.z == 0.0
        # test arrays keep every value in [0, L)
        z = domain.wrap_z(np.array([-1e-18, -0.25, 1.0, 0.5]))
        assert np.array_equal(z, [0.0, 0.75, 0.0, 0.5])


class TestTrigSeries:
    """Test the TrigSeries class."""

    series = TrigSeries(((1, 1.0, 0.0), (2, 0.0, 0.5)), 1.0)

    def test_value(self):
        """Test value and derivatives against the closed form."""
        x = np.linspace(0, 1, 7)
        assert np.allclose(self.series.value(x),
                           np.cos(TWO_PI * x) + 0.5 * np.sin(2 * TWO_PI * x))
        assert np.allclose(self.series.d1(x),
                           -TWO_PI * np.sin(TWO_PI * x)
                           + 0.5 * 2 * TWO_PI * np.cos(2 * TWO_PI * x))

    def test_curvature_bound(self):
        """Test the bound sums |a| + |b| times the squared frequency."""
        assert self.series.curvature_bound() == pytest.approx(
            TWO_PI**2 + 0.5 * (2 * TWO_PI) ** 2
        )
        assert self.series.max_frequency == 2

    def test_bad_frequency(self):
        """Test non-integer frequencies are rejected."""
        with pytest.raises(ConfigError, match="frequency"):
            TrigSeries(((1.5, 1.0, 0.0),))


def test_parse_terms():
    """Test parse_terms function."""
    assert parse_terms("1:1, 2:0.5:-0.25") == ((1, 1.0, 0.0), (2, 0.5, -0.25))
    assert parse_terms("") == ()
    with pytest.raises(ConfigError, match="frequency:cos"):
        parse_terms("1")
    with pytest.raises(ConfigError):
        parse_terms("a:1")


class TestPotentials:
    """Test analytic derivatives of every potential kind."""

    q = np.array([[0.13], [0.71], [0.42]])
    z = np.array([0.05, 0.37, 0.88])

    @pytest.mark.parametrize(
        "pot",
        [
            Separable(((1, 1.0, 0.0),), ((1, 1.0, 0.0), (2, 0.3, 0.2))),
            TiltedCoupling(1.0, 0.5, 0.3),
            CollectiveVariable(((1, 0.5, 0.0),), 2.0, (1,)),
            ZBiased(TiltedCoupling(1.0, 0.5), ((2, 1.5, 0.0),)),
        ],
    )
    def test_derivatives(self, pot):
        """Test derivatives against central differences."""
        der = derivatives(pot, self.q, self.z)
        dq, dz, dzz = numeric_derivatives(pot, self.q, self.z)
        assert np.allclose(der.grad_q[:, 0], dq, atol=1e-6)
        assert np.allclose(der.dz, dz, atol=1e-6)
        assert np.allclose(der.dzz, dzz, atol=1e-3)
        # test gradient agrees with derivatives
        grad_q, grad_z = pot.gradient(self.q, self.z)
        assert np.allclose(grad_q, der.grad_q)
        assert np.allclose(grad_z, der.dz)

    @pytest.mark.parametrize(
        "pot", [TiltedCoupling(1.0, 0.5, 0.3), CollectiveVariable((), 2.0, (1,))]
    )
    def test_cross_term_order(self, pot):
        """Test grad_q_dz against central differences of grad_q in z."""
        exact = derivatives(pot, self.q, self.z).grad_q_dz
        errors = []
        for h in (2e-2, 1e-2, 5e-3):
            plus = derivatives(pot, self.q, self.z + h).grad_q
            minus = derivatives(pot, self.q, self.z - h).grad_q
            errors.append(np.abs((plus - minus) / (2 * h) - exact).max())
        # test second order convergence under halving
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all(orders >= 1.9)

    def test_separable_cross_term(self):
        """Test the separable mixed derivative vanishes."""
        pot = Separable(((1, 1.0, 0.0),), ((1, 1.0, 0.0),))
        assert np.all(derivatives(pot, self.q, self.z).grad_q_dz == 0)

    def test_curvature_bound(self):
        """Test curvature bounds of the tilted coupling."""
        pot = TiltedCoupling(1.0, 0.5)
        kappa_q, kappa_z = pot.curvature_bound()
        assert kappa_q == pytest.approx(1.5 * TWO_PI**2)
        assert kappa_z == pytest.approx(0.5 * TWO_PI**2)
        # test the bias adds its own curvature in z
        biased = ZBiased(pot, ((2, 1.0, 0.0),))
        assert biased.curvature_bound()[1] == pytest.approx(
            0.5 * TWO_PI**2 + (2 * TWO_PI) ** 2
        )

    def test_describe(self):
        """Test describe names the kind and its parameters."""
        assert TiltedCoupling(1.0, 0.5).describe() == {
            "kind": "tilted", "a": 1.0, "eps": 0.5, "phase": 0.0}
        base = Separable(((1, 1.0, 0.0),), ())
        assert base.describe() == {"kind": "separable", "v": ((1, 1.0, 0.0),), "w": ()}
        # test the bias nests its base
        biased = ZBiased(base, ((2, 0.75, 0.0),))
        assert biased.describe() == {
            "kind": "biased", "base": base.describe(), "w": ((2, 0.75, 0.0),)}

    def test_collective_periodic(self):
        """Test the collective coupling is periodic and minimal at xi(q) = z."""
        pot = CollectiveVariable((), 1.0, (1,))
        assert evaluate(pot, np.array([0.3]), 0.3) == pytest.approx(0.0)
        assert evaluate(pot, np.array([0.3]), 1.3) == pytest.approx(0.0)
        assert evaluate(pot, np.array([0.3]), 0.8) > 0
        with pytest.raises(ConfigError, match="xi"):
            CollectiveVariable((), 1.0, (1, 1), Domain(d=1))


class TestTamdParams:
    """Test the TamdParams class."""

    def test_validation(self):
        """Test out of range parameters name their field."""
        with pytest.raises(ConfigError, match="delta"):
            TamdParams(delta=0)
        with pytest.raises(ConfigError, match="beta_bar"):
            TamdParams(beta_bar=-1)
        with pytest.raises(ConfigError, match="stride"):
            TamdParams(stride=0)

    def test_plain(self):
        """Test the plain reduction sets delta = 1 and beta_bar = beta."""
        params = TamdParams(beta=4.0, beta_bar=1.0, delta=0.1)
        plain = params.plain()
        assert (plain.delta, plain.beta_bar, plain.beta) == (1.0, 4.0, 4.0)
        assert params.with_delta(0.05).delta == 0.05
        assert params.delta == 0.1
