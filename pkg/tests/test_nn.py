import numpy as np
import pytest

from feal.losses import total_loss
from feal.evidential import alpha_from_logits
from feal.nn import (
    AdamState,
    ModelParams,
    adam_step,
    backward,
    forward,
    init_params,
    load_params,
    save_params,
)


class TestInitParams:
    def test_deterministic(self):
        a = init_params((4, 8, 3), 5)
        b = init_params((4, 8, 3), 5)
        assert np.array_equal(a.flat(), b.flat())

    def test_flat_length(self):
        p = init_params((4, 8, 3), 0)
        assert p.flat().size == 4 * 8 + 8 + 8 * 3 + 3 == p.n_params

    def test_seeds_differ(self):
        assert not np.array_equal(init_params((4, 8, 3), 0).flat(), init_params((4, 8, 3), 1).flat())

    def test_glorot_bounds_and_zero_biases(self):
        p = init_params((10, 20, 2), 3)
        bound0 = np.sqrt(6.0 / 30)
        assert np.all(np.abs(p.weights[0]) <= bound0)
        assert all(np.all(b == 0) for b in p.biases)

    def test_rejects_shallow_arch(self):
        with pytest.raises(ValueError):
            init_params((4, 3), 0)


class TestFlatRoundTrip:
    def test_exact(self):
        p = init_params((5, 7, 7, 4), 11)
        q = ModelParams.from_flat(p.arch, p.flat())
        assert np.array_equal(p.flat(), q.flat())
        assert p.arch == q.arch

    def test_length_mismatch(self):
        p = init_params((5, 7, 4), 11)
        with pytest.raises(ValueError):
            ModelParams.from_flat(p.arch, p.flat()[:-1])


class TestForward:
    def test_zero_network_uniform_posterior(self):
        p = init_params((4, 6, 3), 0)
        p = ModelParams.from_flat(p.arch, np.zeros(p.n_params))
        out = forward(p, np.ones(4))
        assert np.array_equal(out.logits, np.zeros(3))
        d = alpha_from_logits(out.logits)
        assert np.allclose(d.alpha, 1.0)

    def test_output_row_permutation_permutes_logits(self):
        p = init_params((4, 6, 3), 2)
        x = np.arange(4.0)
        base = forward(p, x).logits
        w_last = p.weights[-1].copy()
        w_last[:, [0, 1]] = w_last[:, [1, 0]]
        q = ModelParams(p.arch, p.weights[:-1] + (w_last,), p.biases)
        swapped = forward(q, x).logits
        assert np.allclose(swapped, base[[1, 0, 2]])

    def test_purity(self):
        p = init_params((4, 6, 3), 2)
        x = np.arange(4.0)
        assert np.array_equal(forward(p, x).logits, forward(p, x).logits)

    def test_batch_matches_single(self):
        p = init_params((4, 6, 3), 2)
        xs = np.random.default_rng(0).normal(size=(5, 4))
        batch = forward(p, xs)
        for i in range(5):
            single = forward(p, xs[i])
            assert np.allclose(batch.logits[i], single.logits)
            assert np.allclose(batch.embedding[i], single.embedding)

    def test_embedding_self_similarity(self):
        p = init_params((4, 6, 3), 2)
        e = forward(p, np.ones(4)).embedding
        assert abs(np.dot(e, e) / np.dot(e, e) - 1.0) < 1e-12

    def test_shape_mismatch(self):
        p = init_params((4, 6, 3), 2)
        with pytest.raises(ValueError):
            forward(p, np.ones(5))


class TestBackward:
    def test_zero_grad_logits(self):
        p = init_params((4, 6, 3), 2)
        cache = forward(p, np.ones(4))
        g = backward(p, cache, np.zeros(3))
        assert np.all(g.flat() == 0)

    def test_single_layer_closed_form(self):
        # linear map only: dL/dW = outer(x, grad_logits), dL/db = grad_logits
        p = init_params((3, 2, 2), 0)
        x = np.array([1.0, -2.0, 0.5])
        cache = forward(p, x)
        gl = np.array([0.3, -0.7])
        g = backward(p, cache, gl)
        assert np.allclose(g.weights[-1], np.outer(cache.embedding, gl))
        assert np.allclose(g.biases[-1], gl)

    def test_finite_difference_on_parameters(self):
        p = init_params((4, 6, 6, 3), 7)
        rng = np.random.default_rng(7)
        x = rng.normal(size=4)
        y = np.array([0.0, 1.0, 0.0])

        def loss_of(flat):
            q = ModelParams.from_flat(p.arch, flat)
            z = forward(q, x).logits
            return total_loss(alpha_from_logits(z), z, y, lam=1e-2).value

        cache = forward(p, x)
        z = cache.logits
        r = total_loss(alpha_from_logits(z), z, y, lam=1e-2)
        analytic = backward(p, cache, r.grad_logits).flat()

        flat = p.flat()
        idx = rng.choice(flat.size, size=50, replace=False)
        h = 1e-5
        for j in idx:
            fp, fm = flat.copy(), flat.copy()
            fp[j] += h
            fm[j] -= h
            num = (loss_of(fp) - loss_of(fm)) / (2 * h)
            assert abs(analytic[j] - num) / max(abs(num), 1e-7) < 1e-4

    def test_shape_drift_rejected(self):
        p = init_params((4, 6, 3), 2)
        cache = forward(p, np.ones(4))
        with pytest.raises(ValueError):
            backward(p, cache, np.zeros(4))


class TestAdam:
    def test_lr_zero_keeps_params(self):
        p = init_params((4, 6, 3), 2)
        state = AdamState.fresh(p.n_params, lr=0.0)
        g = ModelParams.from_flat(p.arch, np.ones(p.n_params))
        q, _ = adam_step(state, p, g)
        assert np.array_equal(q.flat(), p.flat())

    def test_first_step_unit_gradient(self):
        p = init_params((4, 6, 3), 2)
        state = AdamState.fresh(p.n_params, lr=1e-3, weight_decay=0.0)
        g = ModelParams.from_flat(p.arch, np.ones(p.n_params))
        q, _ = adam_step(state, p, g)
        # bias-corrected first step moves every weight by -lr up to eps
        moved = q.flat() - p.flat()
        assert np.max(np.abs(moved + 1e-3)) < 1e-8

    def test_zero_grad_zero_decay_keeps_params(self):
        p = init_params((4, 6, 3), 2)
        state = AdamState.fresh(p.n_params, lr=1e-3, weight_decay=0.0)
        g = ModelParams.from_flat(p.arch, np.zeros(p.n_params))
        q, _ = adam_step(state, p, g)
        assert np.array_equal(q.flat(), p.flat())

    def test_decay_is_decoupled(self):
        p = init_params((4, 6, 3), 2)
        lr, wd = 1e-2, 0.1
        state = AdamState.fresh(p.n_params, lr=lr, weight_decay=wd)
        g = ModelParams.from_flat(p.arch, np.zeros(p.n_params))
        q, _ = adam_step(state, p, g)
        assert np.allclose(q.flat(), p.flat() * (1 - lr * wd))

    def test_nonfinite_gradient_raises(self):
        p = init_params((4, 6, 3), 2)
        state = AdamState.fresh(p.n_params)
        bad = np.zeros(p.n_params)
        bad[0] = np.nan
        with pytest.raises(FloatingPointError):
            adam_step(state, p, ModelParams.from_flat(p.arch, bad))

    def test_training_halves_loss_on_separable_data(self):
        for seed in (1, 2, 3):
            rng = np.random.default_rng(seed)
            x = np.concatenate([rng.normal(-2, 0.5, (25, 2)), rng.normal(2, 0.5, (25, 2))])
            y = np.concatenate([np.tile([1.0, 0.0], (25, 1)), np.tile([0.0, 1.0], (25, 1))])
            p = init_params((2, 16, 2), seed)
            state = AdamState.fresh(p.n_params, lr=5e-3, weight_decay=0.0)

            def mean_loss(q):
                z = forward(q, x).logits
                return float(
                    np.mean([
                        total_loss(alpha_from_logits(zi), zi, yi, lam=1e-2).value
                        for zi, yi in zip(z, y)
                    ])
                )

            initial = mean_loss(p)
            for _ in range(200):
                cache = forward(p, x)
                grads = np.zeros_like(cache.logits)
                for i, (zi, yi) in enumerate(zip(cache.logits, y)):
                    grads[i] = total_loss(alpha_from_logits(zi), zi, yi, lam=1e-2).grad_logits
                g = backward(p, cache, grads / x.shape[0])
                p, state = adam_step(state, p, g)
            assert mean_loss(p) < 0.5 * initial


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        p = init_params((4, 6, 3), 2)
        path = tmp_path / "model.txt"
        save_params(p, path)
        q = load_params(path)
        assert q.arch == p.arch
        assert np.array_equal(q.flat(), p.flat())

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("not-a-checkpoint\n")
        with pytest.raises(ValueError):
            load_params(path)
