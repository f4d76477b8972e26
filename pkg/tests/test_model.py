import numpy as np
import pytest

from vtr.errors import ConfigError, ShapeError
from vtr.model import (
    VtrConfig,
    count_macs,
    count_params,
    embed,
    encoder_layer,
    forward,
    layer_norm,
    lsa_attention,
    mac_breakdown,
    mlp_block,
    weightset_from_tensors,
    expected_shapes,
)
from vtr.spt import TokenMatrix
from vtr.weights_io import random_init

TOY = VtrConfig(image_h=32, image_w=32, patch=8, dim=32, depth=2, heads=2, num_classes=4)


@pytest.fixture(scope="module")
def toy_weights():
    return random_init(TOY, seed=123)


def zero_weights(cfg):
    tensors = {}
    for name, shape in expected_shapes(cfg).items():
        if name.endswith(".temperature"):
            tensors[name] = np.float32(1.0)
        elif name.endswith(".gamma"):
            tensors[name] = np.ones(shape, np.float32)
        else:
            tensors[name] = np.zeros(shape, np.float32)
    return weightset_from_tensors(cfg, tensors)


class TestLayerNorm:
    def test_constant_row_collapses_to_beta(self):
        out = layer_norm(np.full((1, 4), 5.0, np.float32), np.ones(4), np.zeros(4))
        np.testing.assert_allclose(out, np.zeros((1, 4)), atol=1e-3)

    def test_already_normalized_row(self):
        out = layer_norm(np.array([[1.0, -1.0]], np.float32), np.ones(2), np.zeros(2), eps=1e-12)
        np.testing.assert_allclose(out, [[1.0, -1.0]], atol=1e-5)

    def test_statistics_random(self):
        x = np.random.default_rng(0).standard_normal((121, 320)).astype(np.float32)
        out = layer_norm(x, np.ones(320), np.zeros(320))
        assert np.abs(out.mean(axis=1)).max() < 1e-5
        assert np.abs(out.std(axis=1) - 1.0).max() < 1e-3

    def test_bad_affine_length(self):
        with pytest.raises(ShapeError):
            layer_norm(np.ones((2, 3), np.float32), np.ones(2), np.zeros(2))


class TestEmbed:
    def test_output_shape_table2_geometry(self):
        cfg = VtrConfig(image_h=88, image_w=88, patch=8, dim=44, depth=1, heads=2)
        w = random_init(cfg, 0)
        tokens = TokenMatrix(121, 320, np.zeros((121, 320), np.float32))
        assert embed(tokens, w).shape == (122, 44)

    def test_zero_everything_leaves_cls_row(self):
        cfg = TOY
        w = zero_weights(cfg)
        w.cls_token[:] = 7.0
        tokens = TokenMatrix(cfg.n_tokens, cfg.raw_dim,
                             np.zeros((cfg.n_tokens, cfg.raw_dim), np.float32))
        z = embed(tokens, w)
        np.testing.assert_array_equal(z[0], np.full(cfg.dim, 7.0, np.float32))
        assert not z[1:].any()

    def test_dim_mismatch(self):
        w = random_init(TOY, 0)
        with pytest.raises(ShapeError):
            embed(TokenMatrix(4, 10, np.zeros((4, 10), np.float32)), w)


class TestLsaAttention:
    def test_two_token_forced_scores(self):
        cfg = VtrConfig(image_h=8, image_w=8, patch=8, shifts=0, dim=4, depth=1, heads=1,
                        num_classes=2)
        w = random_init(cfg, 5)
        lw = w.layers[0]
        z = np.random.default_rng(1).standard_normal((2, 4)).astype(np.float32)
        out, scores = lsa_attention(z, lw, cfg, return_scores=True)
        np.testing.assert_array_equal(scores, [[0.0, 1.0], [1.0, 0.0]])
        v = z @ lw.wv + lw.bv
        want = np.ascontiguousarray(v[::-1]) @ lw.proj_w + lw.proj_b
        np.testing.assert_allclose(out, want, rtol=1e-5, atol=1e-8)

    def test_rows_sum_to_one_diag_masked(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            dim = int(rng.choice([8, 16])) * 2
            heads = int(rng.choice([1, 2, 4]))
            if dim % heads:
                continue
            cfg = VtrConfig(image_h=16, image_w=16, patch=8, dim=dim, depth=1, heads=heads,
                            num_classes=2)
            w = random_init(cfg, int(rng.integers(1 << 31)))
            z = rng.standard_normal((cfg.seq_len, dim)).astype(np.float32)
            _, scores = lsa_attention(z, w.layers[0], cfg, return_scores=True)
            per_head = scores.reshape(heads, cfg.seq_len, cfg.seq_len)
            np.testing.assert_allclose(per_head.sum(axis=2), 1.0, atol=1e-6)
            for h in range(heads):
                assert np.diagonal(per_head[h]).max() < 1e-6

    def test_temperature_does_not_move_offdiag_argmax(self):
        cfg = VtrConfig(image_h=16, image_w=16, patch=8, dim=8, depth=1, heads=1, num_classes=2)
        w = random_init(cfg, 9)
        z = np.random.default_rng(3).standard_normal((cfg.seq_len, 8)).astype(np.float32)
        argmaxes = []
        for lam in (0.5, 2.0, 8.0):
            w.layers[0].temperature = np.float32(lam)
            _, s = lsa_attention(z, w.layers[0], cfg, return_scores=True)
            argmaxes.append(np.argmax(s, axis=1))
        np.testing.assert_array_equal(argmaxes[0], argmaxes[1])
        np.testing.assert_array_equal(argmaxes[1], argmaxes[2])

    def test_non_positive_temperature_rejected(self):
        w = random_init(TOY, 0)
        w.layers[0].temperature = np.float32(0.0)
        z = np.zeros((TOY.seq_len, TOY.dim), np.float32)
        with pytest.raises(ConfigError):
            lsa_attention(z, w.layers[0], TOY)


class TestMlpBlock:
    def test_zero_input_zero_biases(self):
        out = mlp_block(np.zeros((3, 4), np.float32), np.ones((4, 16), np.float32),
                        np.zeros(16), np.ones((16, 4), np.float32), np.zeros(4))
        assert not out.any()

    def test_scalar_gelu_case(self):
        out = mlp_block(np.array([[1.0]], np.float32), np.array([[1.0]], np.float32),
                        np.zeros(1), np.array([[1.0]], np.float32), np.zeros(1))
        assert out[0, 0] == pytest.approx(0.841345, abs=1e-4)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mlp_block(np.ones((2, 3), np.float32), np.ones((4, 8), np.float32),
                      np.zeros(8), np.ones((8, 3), np.float32), np.zeros(3))


class TestEncoderLayer:
    def test_zero_weights_is_identity(self):
        w = zero_weights(TOY)
        z = np.random.default_rng(4).standard_normal((TOY.seq_len, TOY.dim)).astype(np.float32)
        np.testing.assert_array_equal(encoder_layer(z, w.layers[0], TOY), z)

    def test_token_permutation_equivariance(self):
        w = random_init(TOY, 11)
        rng = np.random.default_rng(5)
        z = rng.standard_normal((TOY.seq_len, TOY.dim)).astype(np.float32)
        perm = np.concatenate([[0], 1 + rng.permutation(TOY.n_tokens)])
        out = encoder_layer(z, w.layers[0], TOY)
        out_perm = encoder_layer(z[perm], w.layers[0], TOY)
        np.testing.assert_allclose(out_perm, out[perm], atol=1e-5)

    def test_trace_stages_recorded(self):
        w = random_init(TOY, 12)
        z = np.zeros((TOY.seq_len, TOY.dim), np.float32)
        sink = {}
        encoder_layer(z, w.layers[0], TOY, trace=sink, prefix="layer0")
        assert set(sink) == {
            "layer0.ln1", "layer0.attn_scores", "layer0.msa_out",
            "layer0.res1", "layer0.ln2", "layer0.mlp_out", "layer0.out",
        }


class TestForward:
    def test_logits_length_and_determinism(self, toy_weights):
        img = np.random.default_rng(6).random((32, 32, 1), dtype=np.float32)
        logits = forward(img, toy_weights, TOY)
        assert logits.shape == (TOY.num_classes,)
        assert np.isfinite(logits).all()
        np.testing.assert_array_equal(logits, forward(img, toy_weights, TOY))

    def test_mstar_head_size(self):
        cfg = VtrConfig(image_h=88, image_w=88, patch=8, dim=44, depth=1, heads=2,
                        num_classes=10)
        w = random_init(cfg, 7)
        img = np.zeros((88, 88, 1), np.float32)
        assert forward(img, w, cfg).shape == (10,)

    def test_shape_chain_via_trace(self, toy_weights):
        img = np.random.default_rng(8).random((32, 32, 1), dtype=np.float32)
        _, trace = forward(img, toy_weights, TOY, trace=True)
        s, d = TOY.seq_len, TOY.dim
        assert trace["embed"].shape == (s, d)
        for i in range(TOY.depth):
            assert trace[f"layer{i}.ln1"].shape == (s, d)
            assert trace[f"layer{i}.attn_scores"].shape == (TOY.heads * s, s)
            assert trace[f"layer{i}.msa_out"].shape == (s, d)
            assert trace[f"layer{i}.out"].shape == (s, d)
        assert trace["head_ln"].shape == (s, d)
        assert trace["logits"].shape == (1, TOY.num_classes)

    def test_wrong_image_shape(self, toy_weights):
        with pytest.raises(ShapeError):
            forward(np.zeros((16, 16, 1), np.float32), toy_weights, TOY)


class TestCounters:
    @pytest.mark.parametrize(
        "patch,dim,depth,heads,classes,want_k",
        [
            (8, 44, 4, 2, 10, 109.99),
            (8, 44, 6, 2, 10, 157.33),
            (8, 88, 12, 4, 10, 1156.0),
            (11, 44, 4, 2, 10, 123.10),
        ],
    )
    def test_paper_comparable_counts(self, patch, dim, depth, heads, classes, want_k):
        cfg = VtrConfig(image_h=88, image_w=88, patch=patch, dim=dim, depth=depth,
                        heads=heads, num_classes=classes)
        got = count_params(cfg, paper_comparable=True)
        assert abs(got - want_k * 1e3) / (want_k * 1e3) < 0.02

    def test_per_layer_delta(self):
        mk = lambda depth: VtrConfig(image_h=88, image_w=88, patch=8, dim=44, depth=depth,
                                     heads=2, num_classes=10)
        delta = (count_params(mk(6), True) - count_params(mk(4), True)) / 2
        assert delta == pytest.approx(23.67e3, rel=0.01)

    def test_full_count_matches_materialized(self, toy_weights):
        assert count_params(TOY) == toy_weights.n_elements()

    def test_macs_reference_value(self):
        cfg = VtrConfig(image_h=88, image_w=88, patch=8, dim=44, depth=4, heads=2,
                        num_classes=10)
        assert count_macs(cfg) == pytest.approx(18.3e6, rel=0.01)

    def test_macs_zero_depth(self):
        cfg = VtrConfig(image_h=88, image_w=88, patch=8, dim=44, depth=0, heads=2,
                        num_classes=10)
        parts = mac_breakdown(cfg)
        assert parts["encoder"] == 0
        assert count_macs(cfg) == parts["embedding"] + parts["head"]

    def test_macs_linear_in_depth(self):
        mk = lambda depth: VtrConfig(image_h=88, image_w=88, patch=8, dim=44, depth=depth,
                                     heads=2, num_classes=10)
        per_layer = count_macs(mk(1)) - count_macs(mk(0))
        assert count_macs(mk(8)) == count_macs(mk(4)) + 4 * per_layer

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            VtrConfig(image_h=88, image_w=88, patch=7)
        with pytest.raises(ConfigError):
            VtrConfig(image_h=88, image_w=88, patch=8, dim=44, heads=3)
