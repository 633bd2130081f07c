import logging
import math

import numpy as np
import pytest

from omasgan import autodiff as ad
from omasgan.divergence import DivergenceKind as K
from omasgan.errors import ContractError
from omasgan.nets import ParamSet, critic_spec, forward, generator_spec, init
from omasgan.task2_boundary import (
    boundary_loss,
    chamfer_distance,
    chamfer_distance_t,
    pointset_distance,
    pointset_distance_t,
    scattering,
    scattering_t,
)


def brute_min_dist(p, refs):
    best = math.inf
    for r in refs:
        best = min(best, math.sqrt(sum((a - b) ** 2 for a, b in zip(p, r))))
    return best


class TestPointsetDistance:
    def test_example(self):
        assert pointset_distance([0, 0], [[1, 0], [0, 2], [3, 3]]) == 1.0

    def test_member(self):
        refs = np.random.default_rng(0).normal(size=(10, 3))
        assert pointset_distance(refs[4], refs) == 0.0

    def test_empty(self):
        with pytest.raises(ContractError):
            pointset_distance([0, 0], np.zeros((0, 2)))

    def test_brute_force(self):
        rng = np.random.default_rng(1)
        refs = rng.normal(size=(50, 2))
        pts = rng.normal(size=(200, 2))
        for p in pts:
            assert pointset_distance(p, refs) == brute_min_dist(p.tolist(), refs.tolist())

    def test_tape_matches_plain(self):
        rng = np.random.default_rng(2)
        refs, pts = rng.normal(size=(30, 2)), rng.normal(size=(20, 2))
        got = pointset_distance_t(ad.Tensor(pts), refs).value
        np.testing.assert_allclose(got, [pointset_distance(p, refs) for p in pts], rtol=1e-14)


class TestChamfer:
    def test_identical(self):
        a = np.random.default_rng(3).normal(size=(8, 2))
        assert chamfer_distance(a, a) == 0.0

    def test_analytic(self):
        assert chamfer_distance([[0, 0]], [[3, 4]]) == 10.0

    def test_brute_force(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            a, b = rng.normal(size=(rng.integers(1, 8), 2)), rng.normal(size=(rng.integers(1, 8), 2))
            ref = np.mean([brute_min_dist(p, b.tolist()) for p in a.tolist()]) + \
                np.mean([brute_min_dist(q, a.tolist()) for q in b.tolist()])
            assert chamfer_distance(a, b) == pytest.approx(ref, abs=1e-14)

    def test_tape(self):
        rng = np.random.default_rng(5)
        a, b = rng.normal(size=(6, 2)), rng.normal(size=(9, 2))
        assert chamfer_distance_t(ad.Tensor(a), b).item() == pytest.approx(chamfer_distance(a, b), abs=1e-14)

    def test_empty(self):
        with pytest.raises(ContractError):
            chamfer_distance(np.zeros((0, 2)), [[1, 1]])


class TestScattering:
    def test_single_ratio(self):
        assert scattering([[0, 0], [3, 0]], [[0, 0], [1, 0]], 0) == 3.0

    def test_isometry(self):
        rng = np.random.default_rng(6)
        z = rng.normal(size=(12, 2))
        theta = 0.7
        rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        b = z @ rot.T + [1.0, -2.0]
        for i in range(12):
            assert scattering(z, b, i) == pytest.approx(1.0, abs=1e-12)

    def test_scale_laws(self):
        rng = np.random.default_rng(7)
        z, b = rng.normal(size=(10, 2)), rng.normal(size=(10, 2))
        for c in (0.5, 3.0):
            for i in range(10):
                assert scattering(z, c * b, i) == pytest.approx(scattering(z, b, i) / c, rel=1e-12)
                assert scattering(c * z, b, i) == pytest.approx(scattering(z, b, i) * c, rel=1e-12)

    def test_coincident_outputs_warn(self, caplog):
        with caplog.at_level(logging.WARNING):
            v = scattering([[0, 0], [1, 0]], [[1, 1], [1, 1]], 0)
        assert np.isfinite(v) and "coincident" in caplog.text

    def test_tape_rows(self):
        rng = np.random.default_rng(8)
        z, b = rng.normal(size=(7, 2)), rng.normal(size=(7, 2))
        np.testing.assert_allclose(scattering_t(z, ad.Tensor(b)).value,
                                   [scattering(z, b, i) for i in range(7)], rtol=1e-13)

    def test_needs_two(self):
        with pytest.raises(ContractError):
            scattering([[0, 0]], [[0, 0]], 0)


class TestBoundaryLoss:
    def setup_method(self):
        rng = np.random.default_rng(9)
        self.z = rng.normal(size=(8, 2))
        self.g = rng.normal(size=(8, 2))
        self.b = rng.normal(size=(8, 2)) * 1.5
        self.critic = init(critic_spec(2, 8), 3)

    def test_unweighted_is_negated_metric(self):
        from omasgan.divergence import variational_bound
        from omasgan.nets import evaluate
        loss, (m, d, s) = boundary_loss(K.KL, self.critic, ad.Tensor(self.b), self.g, self.z, 0.0, 0.0)
        expect = variational_bound(K.KL, evaluate(self.critic, self.b), evaluate(self.critic, self.g))
        assert loss.item() == pytest.approx(-expect, abs=1e-12) and m == pytest.approx(expect, abs=1e-12)

    def test_zero_critic_composition(self):
        spec = critic_spec(2, 8)
        zero = ParamSet(spec, np.zeros(spec.n_params))
        loss, (m, d, s) = boundary_loss(K.JensenShannonGAN, zero, ad.Tensor(self.b), self.g, self.z, 0.2, 0.25)
        dist = np.mean([pointset_distance(p, self.g) for p in self.b])
        scat = np.mean([scattering(self.z, self.b, i) for i in range(8)])
        assert m == pytest.approx(-0.2877, abs=1e-4)
        assert loss.item() == pytest.approx(0.2877 + 0.2 * dist + 0.25 * scat, abs=1e-4)
        assert (d, s) == (pytest.approx(dist, abs=1e-12), pytest.approx(scat, abs=1e-12))

    def test_gradient_wrt_boundary_params(self):
        bs = generator_spec(2, 2, 6)
        p = init(bs, 4).values

        def f(t):
            out = forward(bs, t, self.z)
            return boundary_loss(K.GAN, self.critic, out, self.g, self.z, 0.2, 0.25)[0]

        leaf = ad.Tensor(p.copy())
        g = ad.backward(f(leaf))[leaf]
        fd = ad.finite_difference_gradient(lambda v: f(ad.Tensor(v)).item(), p)
        np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-7)

    def test_negative_weights(self):
        with pytest.raises(ContractError):
            boundary_loss(K.GAN, self.critic, ad.Tensor(self.b), self.g, self.z, -1.0, 0.0)



@pytest.fixture(scope="module")
def small_task1():
    from omasgan.config import TrainConfig
    from omasgan.data import gen_disk
    from omasgan.task1_gan import train_task1
    cfg = TrainConfig(n_samples=512, batch_size=64, pool_size=256, hidden=16, epochs_task1=60)
    return cfg, train_task1(cfg, gen_disk(1.0, 512, 0).points)


def short_run(small_task1, epochs=30, on_epoch=None, **kw):
    from omasgan.task2_boundary import train_task2
    cfg, t1 = small_task1
    return train_task2(cfg.replace(epochs_task2=epochs, **kw), t1, on_epoch=on_epoch)


def test_large_mu_keeps_b_closer_to_g(small_task1):
    near = np.mean([t[2] for t in short_run(small_task1, mu=5.0).trace[-10:]])
    far = np.mean([t[2] for t in short_run(small_task1, mu=0.2).trace[-10:]])
    assert near < far


def test_scattering_spreads_b(small_task1):
    from omasgan.task1_gan import generate

    def spread(out):
        x = generate(out.b, 400, 1)
        return np.linalg.norm(x[:, None] - x[None], axis=2).mean()

    assert spread(short_run(small_task1, mu=5.0, nu=0.0)) < spread(short_run(small_task1, mu=5.0, nu=0.25))


def test_trace_and_callback(small_task1):
    seen = []
    out = short_run(small_task1, epochs=3, on_epoch=lambda e, b, c: seen.append(e))
    assert seen == [1, 2, 3] and [t[0] for t in out.trace] == [1, 2, 3]
    assert np.all(np.isfinite(np.array(out.trace)))
