import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar
from scipy.special import xlogy

from omasgan import autodiff as ad
from omasgan.errors import ContractError
from omasgan.nets import ParamSet, critic_spec, evaluate
from omasgan.task3_retrain import (
    c_loss,
    c_objective,
    c_value_discrete,
    gprime_loss,
    j_loss,
    j_objective,
    optimal_c,
)


def const(p, n=5):
    return ad.Tensor(np.full(n, p))


class TestCLoss:
    def test_half_everywhere(self):
        val = c_objective(const(0.5), const(0.5), const(0.5), const(0.5), 0.35, 0.7, 0.35).item()
        assert val == pytest.approx(2.4 * math.log(0.5), abs=1e-12)
        assert val == pytest.approx(-1.6636, abs=1e-4)

    def test_degenerate_weights(self):
        rng = np.random.default_rng(0)
        gp = rng.uniform(0.1, 0.9, 6)
        others = [ad.Tensor(rng.uniform(0.1, 0.9, 6)) for _ in range(3)]
        val = c_objective(ad.Tensor(gp), *others, 0.0, 0.0, 0.0).item()
        assert val == pytest.approx(np.mean(np.log1p(-gp)), abs=1e-14)

    def test_loss_is_negated_objective(self):
        args = [const(0.3), const(0.6), const(0.2), const(0.7)]
        assert c_loss(*args, 0.35, 0.7, 0.35).item() == -c_objective(*args, 0.35, 0.7, 0.35).item()

    def test_clamp_keeps_loss_finite(self):
        assert np.isfinite(c_loss(const(1.0), const(0.0), const(1.0), const(0.0), 0.35, 0.7, 0.35).item())

    def test_gradient(self):
        rng = np.random.default_rng(1)
        fixed = [rng.uniform(0.05, 0.95, 4) for _ in range(3)]
        x = rng.uniform(0.05, 0.95, 4)
        f = lambda t: c_loss(t, *map(ad.Tensor, fixed), 0.35, 0.7, 0.35)
        leaf = ad.Tensor(x)
        np.testing.assert_allclose(ad.backward(f(leaf))[leaf],
                                   ad.finite_difference_gradient(lambda v: f(ad.Tensor(v)).item(), x),
                                   rtol=1e-6)


class TestGPrimeLoss:
    def test_half(self):
        assert gprime_loss(const(0.5)).item() == pytest.approx(-0.6931, abs=1e-4)

    def test_monotone_decreasing_in_c(self):
        vals = [gprime_loss(const(p)).item() for p in (0.1, 0.5, 0.9, 0.999)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        ns = [gprime_loss(const(p), nonsaturating=True).item() for p in (0.1, 0.5, 0.9)]
        assert all(a > b for a, b in zip(ns, ns[1:]))

    def test_gradient(self):
        x = np.random.default_rng(2).uniform(0.05, 0.95, 5)
        leaf = ad.Tensor(x)
        np.testing.assert_allclose(ad.backward(gprime_loss(leaf))[leaf],
                                   ad.finite_difference_gradient(lambda v: gprime_loss(ad.Tensor(v)).item(), x),
                                   rtol=1e-6)


class TestJLoss:
    def test_half(self):
        assert j_objective(const(0.5), const(0.5), const(0.5), 0.5).item() == pytest.approx(-1.3863, abs=1e-4)

    def test_delta_one_ignores_gprime(self):
        a = j_objective(const(0.7), const(0.2), const(0.1), 1.0).item()
        b = j_objective(const(0.7), const(0.2), const(0.9), 1.0).item()
        assert a == b

    def test_delta_range(self):
        with pytest.raises(ContractError):
            j_loss(const(0.5), const(0.5), const(0.5), 1.5)

    def test_gradient(self):
        rng = np.random.default_rng(3)
        jb, jx = rng.uniform(0.05, 0.95, (2, 4))
        x = rng.uniform(0.05, 0.95, 4)
        f = lambda t: j_loss(ad.Tensor(jb), ad.Tensor(jx), t, 0.5)
        leaf = ad.Tensor(x)
        np.testing.assert_allclose(ad.backward(f(leaf))[leaf],
                                   ad.finite_difference_gradient(lambda v: f(ad.Tensor(v)).item(), x),
                                   rtol=1e-6)


def test_untrained_sigmoid_critic_is_half():
    spec = critic_spec(2, 16)
    j = ParamSet(spec, np.zeros(spec.n_params))
    v = evaluate(j, np.random.default_rng(0).normal(size=(10, 2)))
    np.testing.assert_array_equal(0.5 * (1 + np.tanh(0.5 * v)), 0.5)


# ------------------------------------------------------------ optimum oracles


def brute_force_value(q, p_x, p_b, apg, beta):
    """Retraining objective at the pointwise optimal C, computed independently with xlogy."""
    pos = apg * p_x
    neg = q + beta * p_b
    tot = pos + neg
    return np.sum(xlogy(neg, neg) - xlogy(neg, tot) + xlogy(pos, pos) - xlogy(pos, tot), axis=-1)


def simplex_argmin(p_x, p_b, apg, beta, step=0.01):
    k = int(round(1 / step))
    i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
    keep = i + j <= k
    q = np.stack([i[keep], j[keep], k - i[keep] - j[keep]], axis=1) * step
    return q[np.argmin(brute_force_value(q, p_x, p_b, apg, beta))]


def target(p_x, p_b, beta):
    t = np.maximum(0.0, (1 + beta) * p_x - beta * p_b)
    return t / t.sum()


def test_c_star_formula_matches_scalar_maximisation():
    apg, beta, p_x, p_gp, p_b = 0.7, 0.7, 0.5, 0.3, 0.2
    res = minimize_scalar(lambda c: -(apg * p_x * np.log(c) + (p_gp + beta * p_b) * np.log1p(-c)),
                          bounds=(1e-9, 1 - 1e-9), method="bounded", options={"xatol": 1e-10})
    c_star = optimal_c(p_x, p_gp, p_b, apg, beta)
    assert c_star == pytest.approx(0.35 / 0.79, abs=1e-12)
    assert abs(res.x - c_star) < 1e-4


def test_discrete_value_agrees_with_oracle_formula():
    rng = np.random.default_rng(4)
    for _ in range(20):
        p_x, p_b, q = rng.dirichlet(np.ones(3), size=3)
        c = optimal_c(p_x, q, p_b, 0.7, 0.7)
        assert c_value_discrete(p_x, q, p_b, c, 0.7, 0.7) == pytest.approx(
            brute_force_value(q, p_x, p_b, 0.7, 0.7), abs=1e-12)


def test_documented_instance():
    p_x, p_b = np.array([0.5, 0.3, 0.2]), np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose((1.7) * p_x - 0.7 * p_b, [0.71, 0.30, -0.01], atol=1e-12)
    np.testing.assert_allclose(target(p_x, p_b, 0.7), [0.703, 0.297, 0.0], atol=1e-3)
    # the unconstrained optimum sits just outside the simplex, so the grid argmin lands on its face
    assert np.abs(simplex_argmin(p_x, p_b, 0.7, 0.7) - target(p_x, p_b, 0.7)).sum() < 0.05


def test_simplex_optimum_oracle():
    rng = np.random.default_rng(5)
    done = 0
    while done < 20:
        p_x, p_b = rng.dirichlet(np.ones(3), size=2)
        beta = rng.uniform(0.0, 1.0)
        if np.any((1 + beta) * p_x - beta * p_b < 0):
            continue
        best = simplex_argmin(p_x, p_b, 0.7, beta)
        assert np.abs(best - target(p_x, p_b, beta)).sum() < 0.05
        done += 1
