import numpy as np
import pytest

from metalgraph import autodiff as ad
from metalgraph.errors import InvalidArgumentError
from metalgraph.nn import Adam, BatchNorm2d, Conv2d, Mlp2, Parameter, adam_step
from metalgraph.oracles import gradcheck, leaf, oracle_conv2d
from metalgraph.polar import PolarField, build_artifact_graph


def rand(seed, *shape):
    return np.random.default_rng(seed).standard_normal(shape)


# ---------------------------------------------------------------- conv2d

def test_conv_identity_1x1():
    x = ad.constant(rand(0, 2, 3, 5, 5).astype(np.float32))
    w = np.zeros((3, 3, 1, 1), np.float32)
    for i in range(3):
        w[i, i, 0, 0] = 1.0
    out = ad.conv2d(x, ad.constant(w), ad.constant(np.zeros(3, np.float32)))
    assert np.array_equal(out.value, x.value)


def test_conv_zero_weights_bias_only():
    x = ad.constant(rand(1, 1, 2, 4, 4).astype(np.float32))
    w = ad.constant(np.zeros((5, 2, 3, 3), np.float32))
    b = ad.constant(np.arange(5, dtype=np.float32))
    out = ad.conv2d(x, w, b)
    for i in range(5):
        assert np.allclose(out.value[:, i], float(i))


def test_conv_matches_six_loop_oracle():
    x = rand(2, 1, 2, 4, 5)
    w = rand(3, 3, 2, 3, 3)
    b = rand(4, 3)
    out = ad.conv2d(ad.constant(x), ad.constant(w), ad.constant(b))
    assert np.abs(out.value - oracle_conv2d(x, w, b)).max() < 1e-5


def test_conv_stride2_matches_oracle():
    x = rand(5, 2, 3, 8, 8)
    w = rand(6, 4, 3, 3, 3)
    b = rand(7, 4)
    out = ad.conv2d(ad.constant(x), ad.constant(w), ad.constant(b), stride=2)
    ref = oracle_conv2d(x, w, b, stride=2)
    assert out.value.shape == (2, 4, 4, 4)
    assert np.abs(out.value - ref).max() < 1e-5


def test_conv_shape_mismatch():
    with pytest.raises(InvalidArgumentError):
        ad.conv2d(ad.constant(np.zeros((1, 3, 4, 4))),
                  ad.constant(np.zeros((2, 4, 3, 3))),
                  ad.constant(np.zeros(2)))


def test_conv_gradcheck():
    for seed in range(5):
        r = np.random.default_rng(seed)
        x = leaf(r.standard_normal((2, 2, 4, 5)))
        w = leaf(r.standard_normal((3, 2, 3, 3)) * 0.4)
        b = leaf(r.standard_normal(3) * 0.2)
        proj = r.standard_normal((2, 3, 4, 5))
        gradcheck(lambda: ad.reduce_mean(ad.mul(ad.conv2d(x, w, b),
                                                ad.constant(proj))),
                  [x, w, b], rtol=1e-4)


# ------------------------------------------------------------- batch norm

def test_bn_train_normalizes():
    x = ad.constant(rand(0, 8, 3, 6, 6).astype(np.float32))
    bn = BatchNorm2d(3, name="bn")
    y = bn(x, train=True).value
    assert np.abs(y.mean(axis=(0, 2, 3))).max() < 1e-4
    assert np.abs(y.var(axis=(0, 2, 3)) - 1).max() < 1e-3


def test_bn_affine():
    x = ad.constant(rand(1, 8, 2, 5, 5).astype(np.float32))
    bn = BatchNorm2d(2, name="bn")
    bn.gamma.value[:] = 2.0
    bn.beta.value[:] = 3.0
    y = bn(x, train=True).value
    assert np.abs(y.mean(axis=(0, 2, 3)) - 3.0).max() < 1e-4
    assert np.abs(y.std(axis=(0, 2, 3)) - 2.0).max() < 1e-3


def test_bn_batch_of_one_rejected_in_train():
    bn = BatchNorm2d(2, name="bn")
    with pytest.raises(InvalidArgumentError):
        bn(ad.constant(np.zeros((1, 2, 4, 4), np.float32)), train=True)
    bn(ad.constant(np.zeros((1, 2, 4, 4), np.float32)), train=False)  # eval fine


def test_bn_gradcheck():
    for seed in range(5):
        r = np.random.default_rng(40 + seed)
        x = leaf(r.standard_normal((3, 2, 4, 4)))
        g = leaf(r.uniform(0.5, 1.5, 2))
        b = leaf(r.standard_normal(2) * 0.3)
        state = {"running_mean": np.zeros(2, np.float32),
                 "running_var": np.ones(2, np.float32)}
        proj = r.standard_normal((3, 2, 4, 4))
        gradcheck(lambda: ad.reduce_mean(ad.mul(
            ad.batch_norm(x, g, b, state, train=True), ad.constant(proj))),
            [x, g, b], rtol=1e-3)


def test_bn_eval_uses_running_stats():
    bn = BatchNorm2d(1, name="bn")
    bn.state["running_mean"][:] = 2.0
    bn.state["running_var"][:] = 4.0
    x = ad.constant(np.full((1, 1, 2, 2), 4.0, np.float32))
    y = bn(x, train=False).value
    assert np.allclose(y, (4.0 - 2.0) / np.sqrt(4.0 + 1e-5), atol=1e-6)


# ------------------------------------------------- relu / softmax / embeds

def test_relu_and_gradcheck():
    x = leaf(rand(3, 4, 5) + 0.3)
    proj = rand(4, 4, 5)
    gradcheck(lambda: ad.reduce_mean(ad.mul(ad.relu(x), ad.constant(proj))), [x])


def test_softmax_uniform_logits():
    x = ad.constant(np.zeros((1, 7, 2, 2), np.float32))
    y = ad.softmax_channels(x).value
    assert np.allclose(y, 1.0 / 7)


def test_softmax_sums_to_one_positive():
    x = ad.constant(rand(6, 2, 5, 3, 3).astype(np.float32) * 4)
    y = ad.softmax_channels(x).value
    assert np.allclose(y.sum(axis=1), 1.0, atol=1e-5)
    assert (y > 0).all()


def test_sinusoidal_embed_zero_angle():
    e = ad.sinusoidal_embed(np.zeros((2, 2)), 6)
    flat = e[:, 0, 0]
    assert np.allclose(flat, [0, 1, 0, 1, 0, 1])


def test_sinusoidal_embed_frequencies():
    theta = np.full((1, 1), 0.37)
    e = ad.sinusoidal_embed(theta, 8)[:, 0, 0]
    for j in range(4):
        assert e[2 * j] == pytest.approx(np.sin(2 ** j * 0.37), abs=1e-6)
        assert e[2 * j + 1] == pytest.approx(np.cos(2 ** j * 0.37), abs=1e-6)


def test_sinusoidal_embed_odd_width_rejected():
    with pytest.raises(InvalidArgumentError):
        ad.sinusoidal_embed(np.zeros((2, 2)), 5)


def test_mlp2_gradcheck():
    for seed in range(3):
        r = np.random.default_rng(60 + seed)
        mlp = Mlp2(4, seed=seed, name=f"m{seed}")
        for p in mlp.params():
            p.value = p.value.astype(np.float64)
            if p.value.std() == 0:
                p.value += r.standard_normal(p.value.shape) * 0.2
        x = leaf(r.standard_normal((2, 1, 3, 3)))
        proj = r.standard_normal((2, 4, 3, 3))
        gradcheck(lambda: ad.reduce_mean(ad.mul(mlp(x), ad.constant(proj))),
                  [x] + mlp.params(), rtol=1e-4)


# ------------------------------------------------------------------- gcn

def _small_adjacency(seed, h, w):
    rng = np.random.default_rng(seed)
    m = np.zeros((h, w), np.uint8)
    m[rng.integers(h), rng.integers(w)] = 1
    polar = PolarField(
        radius=rng.uniform(0, 5, (h, w)).astype(np.float32),
        theta=rng.uniform(-np.pi, np.pi, (h, w)).astype(np.float32))
    return build_artifact_graph(polar, rng.random((h, w)).astype(np.float32), 1,
                                k_ang=3, k_rad=2)


def test_gcn_zero_weight_zero_bias():
    adj = _small_adjacency(0, 3, 3)
    x = ad.constant(rand(1, 1, 2, 3, 3).astype(np.float32))
    out = ad.gcn_layer(x, [adj], ad.constant(np.zeros((2, 2), np.float32)),
                       ad.constant(np.zeros(2, np.float32)))
    assert not out.value.any()


def test_gcn_empty_graph_bias_broadcast():
    from metalgraph.polar import empty_adjacency
    adj = empty_adjacency(9)
    x = ad.constant(rand(2, 1, 2, 3, 3).astype(np.float32))
    b = np.array([0.5, -1.5], np.float32)
    out = ad.gcn_layer(x, [adj], ad.constant(rand(3, 2, 2).astype(np.float32)),
                       ad.constant(b))
    assert np.allclose(out.value[0, 0], 0.5) and np.allclose(out.value[0, 1], -1.5)


def test_gcn_matches_dense_oracle():
    adj = _small_adjacency(4, 2, 5)   # 10 nodes
    rng = np.random.default_rng(5)
    hfeat = rng.standard_normal((10, 3)).astype(np.float32)
    w = rng.standard_normal((3, 3)).astype(np.float32)
    b = rng.standard_normal(3).astype(np.float32)
    x = ad.constant(hfeat.T.reshape(1, 3, 2, 5).copy())
    out = ad.gcn_layer(x, [adj], ad.constant(w), ad.constant(b))
    ref = adj.to_dense().astype(np.float64) @ hfeat @ w + b
    got = out.value[0].reshape(3, 10).T
    assert np.abs(got - ref).max() < 1e-5


def test_gcn_gradcheck():
    adj = _small_adjacency(6, 2, 3)
    r = np.random.default_rng(7)
    x = leaf(r.standard_normal((2, 2, 2, 3)))
    w = leaf(r.standard_normal((2, 2)))
    b = leaf(r.standard_normal(2))
    proj = r.standard_normal((2, 2, 2, 3))
    gradcheck(lambda: ad.reduce_mean(ad.mul(
        ad.gcn_layer(x, [adj, adj], w, b), ad.constant(proj))), [x, w, b],
        rtol=1e-4)


def test_gcn_unfinalized_rejected():
    from metalgraph.errors import StateError
    from metalgraph.polar import SparseAdjacency
    adj = SparseAdjacency(n=4)
    x = ad.constant(np.zeros((1, 2, 2, 2), np.float32))
    with pytest.raises(StateError):
        ad.gcn_layer(x, [adj], ad.constant(np.zeros((2, 2), np.float32)),
                     ad.constant(np.zeros(2, np.float32)))


# ------------------------------------------------- structural / misc ops

def test_fanout_accumulates():
    x = leaf(rand(8, 3, 3))
    y = ad.add(ad.mul(x, x), ad.mul(x, x))   # f(x) + f(x)
    ad.reduce_sum(y).backward()
    assert np.allclose(x.grad, 4 * x.value)  # d/dx 2x^2


def test_upsample_and_resize_gradchecks():
    r = np.random.default_rng(11)
    x = leaf(r.standard_normal((1, 2, 3, 3)))
    proj = r.standard_normal((1, 2, 6, 6))
    gradcheck(lambda: ad.reduce_mean(ad.mul(ad.upsample_nearest2x(x),
                                            ad.constant(proj))), [x], rtol=1e-4)
    proj2 = r.standard_normal((1, 2, 5, 4))
    gradcheck(lambda: ad.reduce_mean(ad.mul(ad.bilinear_resize(x, (5, 4)),
                                            ad.constant(proj2))), [x], rtol=1e-4)


def test_concat_narrow_gradcheck():
    r = np.random.default_rng(12)
    a = leaf(r.standard_normal((1, 2, 3, 3)))
    b = leaf(r.standard_normal((1, 3, 3, 3)))
    proj = r.standard_normal((1, 2, 3, 3))
    gradcheck(lambda: ad.reduce_mean(ad.mul(
        ad.narrow(ad.concat([a, b], axis=1), 1, 1, 2), ad.constant(proj[:, :2]))),
        [a, b], rtol=1e-4)


def test_minmax_norm_values_and_constant_case():
    x = ad.constant(np.array([0.0, 5.0, 10.0]))
    assert np.allclose(ad.minmax_norm(x).value, [0, 0.5, 1.0])
    c = ad.constant(np.full((3, 3), 2.5))
    assert not ad.minmax_norm(c).value.any()


def test_elementwise_gradchecks():
    r = np.random.default_rng(13)
    x = leaf(r.uniform(0.5, 2.0, (4, 4)))
    y = leaf(r.uniform(0.5, 2.0, (4, 4)))
    proj = r.standard_normal((4, 4))
    gradcheck(lambda: ad.reduce_mean(ad.mul(ad.div(x, y), ad.constant(proj))),
              [x, y], rtol=1e-4)
    gradcheck(lambda: ad.reduce_mean(ad.mul(ad.log(x), ad.constant(proj))),
              [x], rtol=1e-4)
    gradcheck(lambda: ad.reduce_mean(ad.mul(ad.exp(x), ad.constant(proj))),
              [x], rtol=1e-4)
    z = leaf(r.standard_normal((4, 4)) + 0.2)
    gradcheck(lambda: ad.reduce_mean(ad.mul(ad.absolute(z), ad.constant(proj))),
              [z], rtol=1e-4)


def test_broadcast_mul_channel():
    r = np.random.default_rng(14)
    w = leaf(r.random((2, 1, 3, 3)))
    u = leaf(r.standard_normal((2, 4, 3, 3)))
    proj = r.standard_normal((2, 4, 3, 3))
    gradcheck(lambda: ad.reduce_mean(ad.mul(ad.mul(w, u), ad.constant(proj))),
              [w, u], rtol=1e-4)


# ------------------------------------------------------------------ adam

def test_adam_zero_gradient_unchanged():
    p = Parameter(np.array([1.0, -2.0], np.float32), "p")
    p.grad = np.zeros(2, np.float32)
    adam_step([p], lr=0.1, step=1)
    assert np.array_equal(p.value, [1.0, -2.0])
    assert p.grad is None


def test_adam_descends_on_square():
    p = Parameter(np.array([1.0], np.float32), "p")
    x = p
    loss = ad.mul(x, x)
    ad.reduce_sum(loss).backward()
    adam_step([p], lr=0.1, step=1)
    assert p.value[0] < 1.0


def test_adam_converges_on_quadratic():
    # f(x) = (x0 - 3)^2 + 2*(x1 + 1)^2, minimizer (3, -1); 200 steps
    p = Parameter(np.zeros(2, np.float32), "p")
    opt = Adam([p], lr=0.1)
    target = np.array([3.0, -1.0], np.float32)
    scale = np.array([1.0, 2.0], np.float32)
    for _ in range(200):
        d = ad.sub(p, ad.constant(target))
        loss = ad.reduce_sum(ad.mul(ad.mul(d, d), ad.constant(scale)))
        loss.backward()
        opt.step()
    assert np.abs(p.value - target).max() < 1e-3


def test_conv_layer_checkpointable_names():
    c = Conv2d(2, 3, 3, seed=0, name="layer")
    assert [p.name for p in c.params()] == ["layer.w", "layer.b"]
    c2 = Conv2d(2, 3, 3, seed=0, name="layer")
    assert np.array_equal(c.w.value, c2.w.value)   # same name+seed -> same init
