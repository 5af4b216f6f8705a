import numpy as np
import pytest

from ldl_age import (
    AgeGrid,
    HybridLossConfig,
    InvalidParameterError,
    InvalidStateError,
    backward,
    forward,
    hybrid_loss_gradient,
    init_head,
    load_checkpoint,
    save_checkpoint,
)
from ldl_age.errors import DataFormatError
from ldl_age.inference import predict_ages
from ldl_age.model import Layer, ModelHead

import oracles


def as_nested(head):
    return [(l.weight.tolist(), l.bias.tolist(), l.relu) for l in head.layers]


class TestInit:
    def test_default_architecture(self):
        head = init_head(400, [256], 100, seed=7)
        assert [l.weight.shape for l in head.layers] == [(256, 400), (100, 256)]
        assert [l.relu for l in head.layers] == [True, False]

    def test_no_hidden(self):
        head = init_head(4, [], 3, seed=0)
        assert len(head.layers) == 1
        assert head.layers[0].weight.shape == (3, 4)
        np.testing.assert_array_equal(head.layers[0].bias, 0.0)

    def test_deterministic(self):
        assert init_head(10, [8, 6], 5, seed=3).equals(init_head(10, [8, 6], 5, seed=3))
        assert not init_head(10, [8], 5, seed=3).equals(init_head(10, [8], 5, seed=4))

    def test_fan_in_scale(self):
        w = init_head(2000, [], 500, seed=1).layers[0].weight
        assert abs(w.mean()) < 0.01 * np.sqrt(2 / 2000)
        assert w.std() == pytest.approx(np.sqrt(2 / 2000), rel=0.02)

    @pytest.mark.parametrize("args", [(0, [4], 3), (4, [0], 3), (4, [4], 1)])
    def test_invalid(self, args):
        with pytest.raises(InvalidParameterError):
            init_head(*args, seed=0)

    def test_output_layer_must_be_linear(self):
        with pytest.raises(InvalidParameterError):
            ModelHead([Layer(np.zeros((3, 2)), np.zeros(3), relu=True)])


class TestForward:
    def test_zero_head_gives_midpoint(self):
        head = init_head(5, [7], 21, seed=0)
        for l in head.layers:
            l.weight[:] = 0.0
        logits, _ = forward(head, np.ones(5))
        np.testing.assert_array_equal(logits, 0.0)
        assert predict_ages(head, np.ones(5), AgeGrid(30, 50))[0] == pytest.approx(40.0)

    def test_identity_layer(self):
        head = ModelHead([Layer(np.eye(4), np.zeros(4), relu=False)])
        x = np.array([0.3, -1.0, 2.0, 5.5])
        np.testing.assert_array_equal(forward(head, x)[0], x)

    def test_matches_independent_matmul(self):
        rng = np.random.default_rng(0)
        head = init_head(12, [9, 7], 6, seed=2)
        for l in head.layers:
            l.bias[:] = rng.normal(size=l.bias.shape)
        x = rng.normal(size=12)
        logits, _ = forward(head, x)
        np.testing.assert_allclose(logits, oracles.head_logits(as_nested(head), x), rtol=1e-12)
        bound = np.linalg.norm(x)
        for l in head.layers:
            bound = np.linalg.norm(l.weight, 2) * bound + np.linalg.norm(l.bias)
        assert np.all(np.isfinite(logits)) and np.max(np.abs(logits)) <= bound

    def test_batch_rows_match_single(self):
        head = init_head(6, [5], 4, seed=1)
        X = np.random.default_rng(1).normal(size=(3, 6))
        batch, _ = forward(head, X)
        for i in range(3):
            np.testing.assert_allclose(batch[i], forward(head, X[i])[0], rtol=1e-14)

    def test_side_effect_free(self):
        head = init_head(6, [5], 4, seed=1)
        before = head.copy()
        forward(head, np.ones(6))
        assert head.equals(before)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidParameterError):
            forward(init_head(6, [5], 4, seed=1), np.ones(5))


class TestBackward:
    def test_zero_upstream(self):
        head = init_head(6, [5], 4, seed=1)
        _, trace = forward(head, np.ones(6))
        grads = backward(head, trace, np.zeros(4))
        assert all(not g.any() for g in grads.params())

    def test_single_layer_outer_product(self):
        head = init_head(4, [], 3, seed=0)
        x = np.array([1.0, -2.0, 0.5, 3.0])
        _, trace = forward(head, x)
        g = np.array([0.1, -0.4, 2.0])
        grads = backward(head, trace, g)
        np.testing.assert_array_equal(grads.weights[0], np.outer(g, x))
        np.testing.assert_array_equal(grads.biases[0], g)

    def test_mismatched_trace(self):
        h1 = init_head(4, [3], 3, seed=0)
        h2 = init_head(4, [], 3, seed=0)
        _, trace = forward(h1, np.ones(4))
        with pytest.raises(InvalidStateError):
            backward(h2, trace, np.ones(3))
        with pytest.raises(InvalidStateError):
            backward(h1, trace, np.ones(5))

    def test_small_head_finite_differences(self):
        # 4 -> 3 -> 3 head, linear upstream loss c . logits
        rng = np.random.default_rng(9)
        head = init_head(4, [3], 3, seed=5)
        for l in head.layers:
            l.bias[:] = rng.normal(0, 0.3, l.bias.shape)
        x = rng.normal(size=4)
        c = rng.normal(size=3)
        _, trace = forward(head, x)
        grads = backward(head, trace, c)
        for p, g in zip(head.params(), grads.params()):
            def f(v, p=p):
                saved = p.copy()
                p[...] = v
                out = float(c @ oracles.head_logits(as_nested(head), x))
                p[...] = saved
                return out
            numeric = oracles.central_difference(f, p.copy())
            assert oracles.max_relative_error(g, numeric) < 1e-4

    @pytest.mark.parametrize("seed", range(5))
    def test_end_to_end_with_hybrid_loss(self, seed):
        rng = np.random.default_rng(100 + seed)
        grid = AgeGrid(18, 37)
        head = init_head(5, [6], grid.K, seed=seed)
        x = rng.normal(size=5)
        t = rng.uniform(18, 37)
        lams = rng.choice([0.0, 0.1, 1.0, 10.0], 3)
        if not lams.any():
            lams[1] = 1.0
        sigma = float(rng.choice([0.5, 1.0, 3.0]))
        cfg = HybridLossConfig(*lams, sigma=sigma)
        logits, trace = forward(head, x)
        grads = backward(head, trace, hybrid_loss_gradient(cfg, t, logits, grid))
        for p, g in zip(head.params(), grads.params()):
            def f(v, p=p):
                saved = p.copy()
                p[...] = v
                z = oracles.head_logits(as_nested(head), x)
                p[...] = saved
                return oracles.hybrid_total(lams, sigma, t, z, grid.a_min)
            numeric = oracles.central_difference(f, p.copy())
            assert oracles.max_relative_error(g, numeric) < 1e-4


class TestCheckpoint:
    def test_round_trip_is_bitwise(self, tmp_path):
        grid = AgeGrid(10, 70)
        head = init_head(8, [16], grid.K, seed=4)
        for l in head.layers:
            l.bias[:] = np.random.default_rng(0).normal(size=l.bias.shape) / 3
        cfg = HybridLossConfig(1, 1, 0.1, 1)
        path = save_checkpoint(tmp_path / "c.json", head, grid, cfg, "LDL")
        ck = load_checkpoint(path)
        assert ck.head.equals(head)
        assert ck.grid == grid and ck.loss == cfg and ck.method == "LDL"
        X = np.random.default_rng(1).normal(size=(50, 8))
        np.testing.assert_array_equal(predict_ages(ck.head, X, grid), predict_ages(head, X, grid))

    def test_text_is_self_describing(self, tmp_path):
        head = init_head(3, [], 4, seed=0)
        text = save_checkpoint(tmp_path / "c.json", head, AgeGrid(1, 4)).read_text()
        assert '"format": "ldl-age-checkpoint"' in text
        assert '"version": 1' in text
        w = head.layers[0].weight[0, 0]
        assert format(w, ".17g") in text

    def test_grid_mismatch_refused(self, tmp_path):
        with pytest.raises(InvalidParameterError):
            save_checkpoint(tmp_path / "c.json", init_head(3, [], 4, seed=0), AgeGrid(1, 5))

    def test_garbage(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(DataFormatError):
            load_checkpoint(p)
        p.write_text('{"format": "other"}')
        with pytest.raises(DataFormatError):
            load_checkpoint(p)
