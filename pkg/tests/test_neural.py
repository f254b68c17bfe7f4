import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hoir.neural import tensor as T
from hoir.neural.checkpoint import load_checkpoint, save_checkpoint
from hoir.neural.gradcheck import gradient_errors, micro_model, micro_views
from hoir.neural.layers import Encoder, FusionEncoder, Head, MultiHead, attention
from hoir.neural.model import (ARCHITECTURES, AblationConfig, EncoderConfig, FusionConfig, HeadConfig,
                               InvalidConfigError, ModelConfig, build_model, legal_ablations, loss)
from hoir.neural.tensor import Tensor, no_grad
from hoir.neural.train import Adam, train_step
from hoir.oracles import bilinear, central_difference

F64 = np.float64


def _param(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def _check_op(fn, inputs, rng, tol=1e-6):
    """Backward of sum(w * fn(inputs)) against central differences."""
    out = fn(*inputs)
    w = rng.standard_normal(out.shape)
    for t in inputs:
        t.grad = None
    T.sum_(T.mul(out, Tensor(w))).backward()

    def f():
        with no_grad():
            return float((fn(*inputs).data * w).sum())

    numeric = central_difference(f, [t.data for t in inputs], h=1e-5)
    for t, g in zip(inputs, numeric):
        assert t.grad is not None
        np.testing.assert_allclose(t.grad, g, rtol=tol, atol=tol)


# -- autodiff engine ----------------------------------------------------------------------

def test_trivial_backward(rng):
    w = _param(rng, 4, 3)
    T.sum_(w).backward()
    np.testing.assert_array_equal(w.grad, np.ones((4, 3)))
    w.grad = None
    T.sum_(T.square(w)).backward()
    np.testing.assert_allclose(w.grad, 2 * w.data)


def test_backward_needs_a_scalar(rng):
    with pytest.raises(ValueError):
        _param(rng, 3).backward()


def test_shared_nodes_accumulate(rng):
    w = _param(rng, 3)
    y = T.mul(w, w)
    T.sum_(T.add(y, y)).backward()
    np.testing.assert_allclose(w.grad, 4 * w.data)


OPS = {
    "add_broadcast": (lambda a, b: T.add(a, b), [(3, 4), (4,)]),
    "mul_broadcast": (lambda a, b: T.mul(a, b), [(2, 3, 4), (3, 1)]),
    "matmul": (lambda a, b: T.matmul(a, b), [(5, 3), (3, 2)]),
    "batched_matmul": (lambda a, b: a @ b, [(2, 4, 3), (2, 3, 5)]),
    "sigmoid": (T.sigmoid, [(6,)]),
    "silu": (T.silu, [(2, 5)]),
    "softmax": (lambda a: T.softmax(a, axis=-1), [(3, 4)]),
    "sum_axis": (lambda a: T.sum_(a, axis=1), [(3, 4, 2)]),
    "mean_axis": (lambda a: T.mean(a, axis=0), [(3, 4)]),
    "reshape_transpose": (lambda a: T.transpose(T.reshape(a, (3, 2, 2)), (2, 0, 1)), [(4, 3)]),
    "concat": (lambda a, b: T.concat([a, b], axis=-1), [(3, 2), (3, 4)]),
    "getitem": (lambda a: a[1:, ::2], [(4, 5)]),
    "stack_tokens": (lambda a, b: T.stack_tokens([a, b]), [(3, 4), (3, 4)]),
    "conv_pad": (lambda x, w, b: T.conv2d(x, w, b, 1, 1), [(2, 3, 6, 6), (4, 3, 3, 3), (4,)]),
    "conv_stride": (lambda x, w, b: T.conv2d(x, w, b, 2, 1), [(1, 2, 8, 8), (3, 2, 3, 3), (3,)]),
    "conv_1x1": (lambda x, w: T.conv2d(x, w), [(1, 3, 4, 4), (2, 3, 1, 1)]),
    "avgpool": (T.avgpool2, [(2, 3, 4, 6)]),
    "upsample": (T.upsample2, [(1, 2, 3, 3)]),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients(name, rng):
    fn, shapes = OPS[name]
    _check_op(fn, [_param(rng, *s) for s in shapes], rng)


def test_bilinear_sample_gradient(rng):
    feat = _param(rng, 3, 5, 6)
    fu, fv = rng.uniform(-0.5, 5.5, 7), rng.uniform(-0.5, 4.5, 7)
    valid = np.array([1, 1, 1, 0, 1, 1, 1], bool)
    _check_op(lambda f: T.bilinear_sample(f, fu, fv, valid), [feat], rng)


# -- pixel-aligned indexing --------------------------------------------------------------

def test_bilinear_nodes_and_midpoints(rng):
    feat = Tensor(rng.standard_normal((4, 5, 6)))
    valid = np.ones(2, bool)
    out = T.bilinear_sample(feat, np.array([2.0, 2.5]), np.array([3.0, 3.0]), valid).data
    np.testing.assert_array_equal(out[0], feat.data[:, 3, 2])
    np.testing.assert_allclose(out[1], 0.5 * (feat.data[:, 3, 2] + feat.data[:, 3, 3]), atol=1e-15)


def test_bilinear_matches_oracle(rng):
    feat = Tensor(rng.standard_normal((3, 8, 9)))
    fu, fv = rng.uniform(0, 8, 100), rng.uniform(0, 7, 100)
    out = T.bilinear_sample(feat, fu, fv, np.ones(100, bool)).data
    ref = np.array([bilinear(feat.data, x, y) for x, y in zip(fu, fv)])
    assert np.abs(out - ref).max() < 1e-9


def test_out_of_image_points_get_zero_features():
    model = build_model(seed=0, dtype=F64)
    fmap = Tensor(np.ones((32, 16, 16)))
    uv = np.array([[-3.0, 10.0], [70.0, 5.0], [10.0, 10.0]])
    out = model._pixel_features(fmap, uv, (64, 64)).data
    assert np.all(out[:2] == 0) and np.all(out[2] == 1)


# -- attention ---------------------------------------------------------------------------

def _softmax_rows(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def test_attention_trivial_cases(rng):
    Q, V = rng.standard_normal((3, 4)), rng.standard_normal((1, 5))
    np.testing.assert_array_equal(attention(Q, rng.standard_normal((1, 4)), V).data, np.repeat(V, 3, 0))
    K = np.repeat(rng.standard_normal((1, 4)), 6, 0)
    V = rng.standard_normal((6, 2))
    np.testing.assert_allclose(attention(Q, K, V).data, np.repeat(V.mean(0, keepdims=True), 3, 0), atol=1e-12)


def test_attention_matches_oracle(rng):
    Q, K, V = rng.standard_normal((3, 4)), rng.standard_normal((5, 4)), rng.standard_normal((5, 2))
    w = _softmax_rows(Q @ K.T / math.sqrt(4))
    assert np.abs(attention(Q, K, V).data - w @ V).max() < 1e-9
    assert np.all(w >= 0) and np.allclose(w.sum(1), 1, atol=1e-9)


def test_attention_shape_errors(rng):
    with pytest.raises(ValueError):
        attention(rng.random((2, 3)), rng.random((2, 4)), rng.random((2, 1)))


def test_single_head_with_identity_projections_is_attention(rng):
    mh = MultiHead(4, 1, 4, rng, F64)
    for lin in (mh.q, mh.k, mh.v, mh.o):
        lin.W.data = np.eye(4)
        lin.b.data[:] = 0
    x = rng.standard_normal((3, 2, 4))
    np.testing.assert_allclose(mh(Tensor(x)).data, attention(x, x, x).data, atol=1e-12)
    with pytest.raises(ValueError):
        mh(Tensor(rng.standard_normal((3, 2, 5))))
    with pytest.raises(ValueError):
        MultiHead(10, 3, 3, rng, F64)


def test_multihead_permutation_equivariance(rng):
    mh = MultiHead(6, 2, 3, rng, F64)
    x = rng.standard_normal((4, 2, 6))
    y = mh(Tensor(x)).data
    assert y.shape == x.shape
    np.testing.assert_allclose(mh(Tensor(x[:, ::-1])).data, y[:, ::-1], atol=1e-12)


def test_fusion_identity_value_path_gives_token_mean(rng):
    fe = FusionEncoder(4, 2, 2, rng, F64)
    for _, p in fe.named_parameters():
        p.data[...] = 0
    fe.mha.v.W.data = np.eye(4)
    fe.mha.o.W.data = np.eye(4)
    x = rng.standard_normal((5, 2, 4))
    np.testing.assert_allclose(fe(Tensor(x)).data, x.mean(axis=1), atol=1e-12)


def test_fusion_sees_the_global_token(rng):
    fe = FusionEncoder(6, 2, 3, rng, F64)
    local, glob = rng.standard_normal((3, 6)), rng.standard_normal((3, 6))
    a = fe(T.stack_tokens([Tensor(local), Tensor(glob)])).data
    b = fe(T.stack_tokens([Tensor(local), Tensor(glob + 0.1)])).data
    assert np.abs(a - b).max() > 1e-6


# -- encoder and head ---------------------------------------------------------------------

def test_encoder_shape_and_zero_params(rng):
    enc = Encoder(5, EncoderConfig(), rng, np.float32)
    x = rng.standard_normal((1, 5, 64, 64)).astype(np.float32)
    assert enc(x).shape == (1, 32, 16, 16)
    for _, p in enc.named_parameters():
        p.data[...] = 0
    assert np.all(enc(x).data == 0)
    with pytest.raises(ValueError):
        enc(rng.standard_normal((1, 5, 30, 30)))
    with pytest.raises(ValueError):
        enc(rng.standard_normal((1, 4, 64, 64)))


def test_encoder_step_reduces_loss(rng):
    enc = Encoder(2, EncoderConfig(out_channels=3, hidden=4, downsample=2, depth=1), rng, F64)
    x = rng.standard_normal((1, 2, 8, 8))
    target = rng.standard_normal((1, 3, 4, 4))

    def objective():
        return T.mean(T.square(enc(x) - Tensor(target)))

    opt = Adam(enc.named_parameters(), lr=1e-2)
    before = objective()
    before.backward()
    opt.step()
    with no_grad():
        assert float(objective().data) < float(before.data)


def test_head_zero_output_and_monotone_bias(rng):
    head = Head((5, 8, 4, 1), (2,), rng, F64)
    x = Tensor(rng.standard_normal((7, 5)))
    for _, p in head.named_parameters():
        p.data[...] = 0
    np.testing.assert_array_equal(head(x).data, 0.5)
    head = Head((5, 8, 4, 1), (2,), rng, F64)
    outs = []
    for b in (-1.0, 0.0, 1.0):
        head.layers[-1].b.data[:] = b
        outs.append(head(x).data)
    assert np.all(np.diff(np.stack(outs), axis=0) > 0)
    assert np.all((outs[1] > 0) & (outs[1] < 1))
    with pytest.raises(ValueError):
        head(Tensor(rng.standard_normal((2, 4))))


def test_head_gradients(rng):
    head = Head((5, 8, 6, 4, 1), (2, 3), rng, F64)
    x = Tensor(rng.standard_normal((6, 5)))
    y = rng.random(6)
    params = [p.data for _, p in head.named_parameters()]

    def f():
        with no_grad():
            return float(T.mse(head(x), y).data)

    head.zero_grad()
    T.mse(head(x), y).backward()
    for (name, p), g in zip(head.named_parameters(), central_difference(f, params)):
        err = np.linalg.norm(p.grad - g) / max(np.linalg.norm(g), 1e-8)
        assert err < 1e-4, name


# -- loss and optimiser -------------------------------------------------------------------

def test_loss_trivial_values():
    y = np.array([0.0, 1.0, 1.0, 0.0])
    L, Lh, Lo = loss(Tensor(y), y, Tensor(y[:3]), y[:3])
    assert float(L.data) == 0.0
    half = Tensor(np.full(4, 0.5))
    L, Lh, Lo = loss(half, y, half, y)
    assert float(Lh.data) == 0.25 and float(Lo.data) == 0.25 and float(L.data) == 0.5


def test_loss_matches_two_pass_oracle(rng):
    ph, lh = rng.random(301), (rng.random(301) < 0.5).astype(float)
    po, lo = rng.random(77), (rng.random(77) < 0.5).astype(float)
    L, Lh, Lo = loss(Tensor(ph), lh, Tensor(po), lo)

    def two_pass(p, t):
        total = 0.0
        for a, b in zip(p, t):
            total += (a - b) ** 2
        return total / len(p)

    assert abs(float(Lh.data) - two_pass(ph, lh)) < 1e-12
    assert abs(float(Lo.data) - two_pass(po, lo)) < 1e-12
    assert float(L.data) == float(Lh.data) + float(Lo.data)
    with pytest.raises(ValueError):
        loss(Tensor(ph), lh[:-1], Tensor(po), lo)


def test_adam_with_zero_lr_changes_nothing(rng):
    model = micro_model("full")
    before = {n: p.data.copy() for n, p in model.named_parameters()}
    train_step(model, Adam(model.named_parameters(), lr=0.0), micro_views(), lr=0.0)
    for n, p in model.named_parameters():
        np.testing.assert_array_equal(p.data, before[n])


def test_adam_converges_on_a_quadratic(rng):
    w = Tensor(rng.standard_normal(5) * 3, requires_grad=True)
    target = rng.standard_normal(5)
    opt = Adam([("w", w)], lr=0.05)
    for _ in range(2000):
        w.grad = None
        L = T.sum_(T.square(w - Tensor(target)))
        L.backward()
        opt.step()
    assert float(L.data) < 1e-6


def test_train_step_reduces_loss_and_rejects_nan():
    model = micro_model("full", seed=1)
    views = micro_views(1)
    opt = Adam(model.named_parameters(), lr=1e-2)
    first = train_step(model, opt, views)
    assert first.L == pytest.approx(first.L_h + first.L_o)
    for i in range(5):
        rec = train_step(model, opt, views, step=i)
    assert rec.L < first.L
    with pytest.raises(ValueError):
        train_step(model, opt, views, terms="x")
    views[0].points["h"].prior_h[0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        train_step(model, opt, views)


def test_single_terms_only_train_one_head():
    model = micro_model("full", seed=2)
    opt = Adam(model.named_parameters(), lr=1e-2)
    before = {n: p.data.copy() for n, p in model.named_parameters()}
    train_step(model, opt, micro_views(2), terms="h")
    changed = {n for n, p in model.named_parameters() if not np.array_equal(p.data, before[n])}
    assert any(n.startswith("head_h") for n in changed)
    assert not any(n.startswith("head_o") for n in changed)


def test_training_is_deterministic():
    recs = []
    for _ in range(2):
        model = micro_model("full", seed=3)
        opt = Adam(model.named_parameters(), lr=1e-2)
        recs.append([train_step(model, opt, micro_views(3), step=i).L for i in range(4)])
    assert recs[0] == recs[1]


# -- wiring and ablations -----------------------------------------------------------------

def test_legal_ablation_count():
    combos = legal_ablations()
    assert len(combos) == 134
    assert {c.architecture for c in combos} == set(ARCHITECTURES)


@pytest.mark.parametrize("bad", [
    dict(architecture="nope"),
    dict(use_If=False, use_Ih=False, use_Io=False, use_Sn=False),
    dict(use_Ih=False),                     # S_N without I_h
    dict(architecture="concat_trans", use_If=False),
])
def test_invalid_ablations(bad):
    with pytest.raises(InvalidConfigError):
        AblationConfig(**bad).validate()


def test_invalid_model_configs():
    with pytest.raises(InvalidConfigError):
        ModelConfig(head=HeadConfig((10, 8, 1))).validate()
    with pytest.raises(InvalidConfigError):
        ModelConfig(fusion=FusionConfig(heads=4, d_k=7)).validate()
    with pytest.raises(InvalidConfigError):
        ModelConfig(AblationConfig("single_all"), fusion=FusionConfig(4, 8, prior_in_tokens=False)).validate()
    with pytest.raises(InvalidConfigError):
        ModelConfig(prior_scale=(1.0, np.inf, 1.0)).validate()
    with pytest.raises(InvalidConfigError):
        EncoderConfig(downsample=3).validate()


def test_structure():
    full = build_model(AblationConfig("full"))
    single = build_model(AblationConfig("single_all"))
    assert full.n_parameters() > single.n_parameters()
    concat = build_model(AblationConfig("concat_trans"))
    assert not any(n.startswith("enc_f") for n, _ in concat.named_parameters())
    assert set(concat.sources) == {"h", "o"}


def test_no_trans_differs_from_full():
    views = micro_views(4)
    outs = []
    for arch in ("full", "no_trans"):
        model = micro_model(arch, seed=5)
        feats = model.encode(model.stack_inputs([views[0].images]))
        with no_grad():
            outs.append(model.predict(feats, 0, views[0].points["h"], "h", (8, 8)).data)
    assert np.abs(outs[0] - outs[1]).max() > 1e-6


def test_prior_switch_keeps_width():
    views = micro_views(5)
    pts = views[0].points["h"]
    with_p, without = micro_model("full", seed=6), micro_model("full", seed=6, use_prior=False)
    assert with_p._prior(pts.prior_h).shape == without._prior(pts.prior_h).shape
    assert np.all(without._prior(pts.prior_h).data == 0)
    feats = without.encode(without.stack_inputs([views[0].images]))
    a = without.predict(feats, 0, pts, "h", (8, 8)).data
    pts.prior_h[:] += 5
    assert np.array_equal(a, without.predict(feats, 0, pts, "h", (8, 8)).data)


def test_every_combination_takes_a_step():
    views = micro_views(6, n_views=1, n_points=4)
    for ab in legal_ablations():
        model = micro_model(ab.architecture, seed=0, **{k: getattr(ab, k) for k in
                                                        ("use_Sn", "use_prior", "use_If", "use_Ih", "use_Io")})
        rec = train_step(model, Adam(model.named_parameters(), lr=1e-3), views)
        assert np.isfinite(rec.L), ab


@pytest.mark.slow
@pytest.mark.parametrize("arch", [a for a in ARCHITECTURES if a != "full"])
def test_gradients_every_architecture(arch):
    errors = gradient_errors(micro_model(arch, seed=1), micro_views(1))
    worst = max(errors, key=errors.get)
    assert errors[worst] < 1e-4, (worst, errors[worst])


def test_gradients_without_token_priors():
    model = build_model(AblationConfig("full"), EncoderConfig(1, 4, 2, 3, 1), FusionConfig(2, 2, False),
                        HeadConfig((7, 5, 3, 1), (2,)), seed=2, dtype=F64, prior_scale=(1, 1, 1))
    errors = gradient_errors(model, micro_views(2, n_views=1, n_points=4))
    assert max(errors.values()) < 1e-4


# -- checkpoints -----------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    views = micro_views(7, n_views=1, size=16)
    small = build_model(AblationConfig("single_trans", use_Sn=False), EncoderConfig(1, 4, 2, 3, 1),
                        FusionConfig(1, 7), HeadConfig((7, 5, 1), (1,)), seed=4)
    opt = Adam(small.named_parameters(), lr=3e-4)
    train_step(small, opt, views)
    save_checkpoint(tmp_path / "a.hock", small, opt, {"note": "x"})
    again, opt2, extra = load_checkpoint(tmp_path / "a.hock")
    assert extra == {"note": "x"} and opt2.t == opt.t and again.cfg == small.cfg
    for (n, p), (_, q) in zip(small.named_parameters(), again.named_parameters()):
        np.testing.assert_array_equal(p.data, q.data)
        np.testing.assert_array_equal(opt.m[n], opt2.m[n])
        np.testing.assert_array_equal(opt.v[n], opt2.v[n])
    save_checkpoint(tmp_path / "b.hock", again, opt2, {"note": "x"})
    assert (tmp_path / "a.hock").read_bytes() == (tmp_path / "b.hock").read_bytes()


def test_checkpoint_rejects_bad_files(tmp_path):
    model = build_model(seed=0)
    save_checkpoint(tmp_path / "m.hock", model)
    raw = bytearray((tmp_path / "m.hock").read_bytes())
    (tmp_path / "magic.hock").write_bytes(b"XXXX" + raw[4:])
    raw[4] = 9
    (tmp_path / "version.hock").write_bytes(bytes(raw))
    for name in ("magic", "version"):
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / f"{name}.hock")


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1000, 1000), min_size=1, max_size=20))
def test_sigmoid_strictly_inside_unit_interval(xs):
    y = T.sigmoid(Tensor(np.array(xs))).data
    assert np.all((y > 0) & (y < 1))


def test_sigmoid_single_precision_stays_inside():
    y = T.sigmoid(Tensor(np.array([-200, -30, 0, 30, 200], np.float32))).data
    assert y.dtype == np.float32 and np.all((y > 0) & (y < 1))
