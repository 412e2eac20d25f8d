import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gnssjam.nnet import (
    CLASSIFICATION,
    REGRESSION,
    EmptyDataset,
    MissingLabel,
    ShapeMismatch,
    TaskHead,
    TrainConfig,
    calibrate_scales,
    dump_checkpoint,
    encode,
    forward,
    init_params,
    load_checkpoint,
    loss,
    loss_and_grad,
    lr_at_epoch,
    parse_checkpoint,
    predict,
    save_checkpoint,
    train,
)
from gnssjam.nnet import layers as L
from gnssjam.nnet.checkpoint import CheckpointError
from gnssjam.nnet.gradcheck import check_gradients
from oracles import conv2d_loop

TYPE7 = TaskHead("type", CLASSIFICATION, 7)
BWREG = TaskHead("bw", REGRESSION, 1)


def numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def random_net(seed=0, heads=(TYPE7, BWREG), n=4, n_t=5):
    rng = np.random.default_rng(seed)
    p = init_params(list(heads), seed=seed, dtype=np.float64)
    x = rng.random((n, 1024, n_t))
    calibrate_scales(p, x)
    for k in p.weights:
        if k.startswith("head"):
            p.weights[k] = rng.standard_normal(p.weights[k].shape) * 0.1
    p.target_stats = {"bw": (10.0, 5.0)}
    return p, x


# ---------------------------------------------------------------- layers

@pytest.mark.parametrize("shape,k,stride", [((2, 8, 5, 3), 3, (1, 1)), ((2, 9, 7, 2), 3, (2, 2)),
                                            ((1, 8, 4, 3), 3, (2, 1)), ((2, 6, 5, 4), 1, (2, 2)),
                                            ((1, 4, 1, 2), 3, (1, 1)), ((1, 5, 3, 2), 3, (2, 2))])
def test_conv_forward_matches_loop(shape, k, stride):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(shape)
    w = rng.standard_normal((k, k, shape[-1], 3))
    b = rng.standard_normal(3)
    s = rng.uniform(0.5, 2, 3)
    out, _ = L.conv2d_forward(x, w, b, s, stride)
    assert np.allclose(out, conv2d_loop(x, w, stride) * s + b, atol=1e-12)


@pytest.mark.parametrize("shape,k,stride", [((2, 6, 5, 2), 3, (1, 1)), ((2, 7, 5, 2), 3, (2, 2)),
                                            ((1, 6, 3, 2), 3, (2, 1)), ((2, 6, 5, 3), 1, (2, 2)),
                                            ((1, 4, 1, 2), 3, (1, 1))])
def test_conv_backward_matches_finite_differences(shape, k, stride):
    rng = np.random.default_rng(1)
    x = rng.standard_normal(shape)
    w = rng.standard_normal((k, k, shape[-1], 2))
    b = rng.standard_normal(2)
    s = rng.uniform(0.5, 2, 2)
    out, cache = L.conv2d_forward(x, w, b, s, stride)
    r = rng.standard_normal(out.shape)

    def f():
        return float(np.sum(L.conv2d_forward(x, w, b, s, stride)[0] * r))

    dx, dw, db = L.conv2d_backward(r, cache)
    assert np.allclose(dx, numeric_grad(f, x), atol=1e-7)
    assert np.allclose(dw, numeric_grad(f, w), atol=1e-7)
    assert np.allclose(db, numeric_grad(f, b), atol=1e-7)


def test_pool_gap_linear_backward():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 8, 3, 2))
    r = rng.standard_normal((2, 4, 3, 2))
    out, c = L.avgpool_freq_forward(x, 2)
    assert np.allclose(L.avgpool_freq_backward(r, c),
                       numeric_grad(lambda: float(np.sum(L.avgpool_freq_forward(x, 2)[0] * r)), x), atol=1e-8)
    rg = rng.standard_normal((2, 2))
    emb, shape = L.global_avgpool_forward(x)
    assert np.allclose(L.global_avgpool_backward(rg, shape),
                       numeric_grad(lambda: float(np.sum(L.global_avgpool_forward(x)[0] * rg)), x), atol=1e-8)
    w = rng.standard_normal((2, 3))
    b = rng.standard_normal(3)
    z = rng.standard_normal((4, 2))
    rl = rng.standard_normal((4, 3))
    dz, dw, db = L.linear_backward(rl, z, w)

    def f():
        return float(np.sum(L.linear_forward(z, w, b)[0] * rl))

    assert np.allclose(dz, numeric_grad(f, z), atol=1e-8)
    assert np.allclose(dw, numeric_grad(f, w), atol=1e-8)
    assert np.allclose(db, numeric_grad(f, b), atol=1e-8)


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=12), st.floats(-500, 500))
def test_softmax_normalised(logits, shift):
    z = np.array([logits]) + shift
    p = L.softmax(z)
    assert abs(p.sum() - 1) <= 1e-12
    assert np.allclose(np.exp(L.log_softmax(z)), p, atol=1e-15)


# ---------------------------------------------------------------- forward

def test_zero_head_gives_uniform_softmax():
    p = init_params([TYPE7], seed=0)
    probs = predict(p, np.random.default_rng(0).random((3, 1024, 4)))["type"]
    assert np.allclose(probs, 1 / 7, atol=1e-12)


def test_identical_inputs_identical_rows():
    p, _ = random_net()
    g = np.random.default_rng(5).random((1024, 6))
    out = forward(p, np.stack([g, g]))
    assert np.array_equal(out["type"][0], out["type"][1])
    assert out["type"].shape == (2, 7) and out["bw"].shape == (2,)


def test_forward_accepts_every_snapshot_length():
    p, _ = random_net()
    for n_t in range(1, 35):
        emb = encode(p, np.random.default_rng(n_t).random((1, 1024, n_t)))
        assert emb.shape == (1, 64)


@given(col_seed=st.integers(0, 1000), n_t=st.integers(1, 12), extra=st.integers(1, 22))
def test_pooling_invariance_on_constant_in_time_input(col_seed, n_t, extra):
    p, _ = random_net()
    col = np.random.default_rng(col_seed).random((1, 1024, 1))
    a = encode(p, np.repeat(col, n_t, axis=2))
    b = encode(p, np.repeat(col, n_t + extra, axis=2))
    assert np.allclose(a, b, atol=1e-10, rtol=0)


def test_shape_mismatch():
    p, _ = random_net()
    with pytest.raises(ShapeMismatch):
        forward(p, np.zeros((1, 2, 1024, 3, 1)))
    with pytest.raises(ShapeMismatch):
        forward(p, np.zeros((1, 1024, 3, 2)))


# ---------------------------------------------------------------- loss

def test_loss_examples():
    p = init_params([TYPE7, BWREG], seed=0)
    out = {"type": np.zeros((5, 7)), "bw": np.array([1.0, 2.0, 3.0, 4.0, 5.0])}
    lab = {"type": np.array([0, 3, 6, 2, 1]), "bw": np.array([1.0, 2.0, 3.0, 4.0, 5.0])}
    lb = loss(p, out, lab)
    assert lb.per_head["type"] == pytest.approx(math.log(7), abs=1e-12)
    assert math.log(7) == pytest.approx(1.945910, abs=1e-6)
    assert lb.per_head["bw"] == 0.0
    # CE = 1 with logits (a, 0) and target 0, RMSE = 0.5 from a constant offset
    two = init_params([TaskHead("c", CLASSIFICATION, 2), TaskHead("r", REGRESSION)], seed=0)
    a = -math.log(math.e - 1)
    out = {"c": np.array([[a, 0.0]] * 3), "r": np.array([0.5, 1.5, -0.5])}
    lb = loss(two, out, {"c": np.zeros(3, dtype=int), "r": np.array([0.0, 1.0, -1.0])})
    assert lb.per_head["c"] == pytest.approx(1.0, abs=1e-12)
    assert lb.per_head["r"] == pytest.approx(0.5, abs=1e-12)
    assert lb.total == pytest.approx(1.5, abs=1e-12)
    assert lb.total == sum(lb.per_head.values())


def test_loss_masks_missing_targets():
    p = init_params([TYPE7, BWREG], seed=0)
    out = {"type": np.zeros((3, 7)), "bw": np.array([1.0, 99.0, 3.0])}
    lb = loss(p, out, {"type": np.array([0, -1, 2]), "bw": np.array([1.0, np.nan, 3.0])})
    assert lb.per_head["bw"] == 0.0
    assert lb.per_head["type"] == pytest.approx(math.log(7))


def test_missing_label():
    p = init_params([TYPE7, BWREG], seed=0)
    with pytest.raises(MissingLabel):
        loss(p, {"type": np.zeros((1, 7)), "bw": np.zeros(1)}, {"type": np.array([0])})


def test_weighted_total():
    heads = [TaskHead("type", CLASSIFICATION, 7, 2.0), TaskHead("bw", REGRESSION, 1, 0.5)]
    p, x = random_net(heads=heads)
    lab = {"type": np.array([0, 1, 2, 3]), "bw": np.array([5.0, 10.0, 15.0, 20.0])}
    lb = loss(p, forward(p, x), lab)
    assert lb.total == pytest.approx(2.0 * lb.per_head["type"] + 0.5 * lb.per_head["bw"], rel=1e-15)


# ---------------------------------------------------------------- gradients

def test_gradient_check_all_layer_types():
    p, x = random_net(n=3, n_t=4)
    lab = {"type": np.array([0, 3, 6]), "bw": np.array([5.0, np.nan, 20.0])}
    r = check_gradients(p, x, lab, n_params=210)
    assert len(r.names) >= 200
    assert len(set(zip(r.names, r.indices))) == len(r.names)
    covered = {n.rsplit(".", 1)[0] for n in r.names}
    assert {"stem", "b0.conv1", "b0.conv2", "b1.proj", "b2.proj", "head.type", "head.bw"} <= covered
    assert r.max_rel_error < 1e-4


def test_inactive_head_gradient_is_zero():
    heads = [TYPE7, TaskHead("bw", REGRESSION, 1, 0.0)]
    p, x = random_net(heads=heads)
    _, g = loss_and_grad(p, x, {"type": np.array([0, 1, 2, 3]), "bw": np.array([1.0, 2.0, 3.0, 4.0])})
    assert not np.any(g["head.bw.w"]) and not np.any(g["head.bw.b"])


def test_gradient_determinism():
    p, x = random_net()
    lab = {"type": np.array([0, 1, 2, 3]), "bw": np.array([1.0, 2.0, 3.0, 4.0])}
    _, g1 = loss_and_grad(p, x, lab)
    _, g2 = loss_and_grad(p, x, lab)
    assert all(g1[k].tobytes() == g2[k].tobytes() for k in g1)


# ---------------------------------------------------------------- training

def test_lr_schedule():
    cfg = TrainConfig(epochs=30)
    assert cfg.milestones() == [15, 22]
    lrs = [lr_at_epoch(cfg, e) for e in range(30)]
    assert lrs[:15] == [0.01] * 15
    assert all(lr == pytest.approx(0.001) for lr in lrs[15:22])
    assert all(lr == pytest.approx(0.0001) for lr in lrs[22:])
    with pytest.raises(ValueError):
        TrainConfig(lr_milestones=[5, 5])
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)


def test_train_trace_records_lr_and_loss():
    rng = np.random.default_rng(0)
    x = rng.random((6, 1024, 2)).astype(np.float32)
    cfg = TrainConfig(epochs=8, batch_size=4)
    _, trace = train(x, {"type": np.arange(6) % 7}, [TYPE7], cfg)
    assert trace.lr == [lr_at_epoch(cfg, e) for e in range(8)]
    assert len(trace.loss) == 8 and len(trace.accuracy) == 8


def test_single_sample_loss_nonincreasing():
    x = np.random.default_rng(3).random((1, 1024, 3))
    cfg = TrainConfig(epochs=25, dtype="float64")
    _, trace = train(x, {"type": np.array([4])}, [TYPE7], cfg)
    assert all(b <= a + 1e-12 for a, b in zip(trace.loss, trace.loss[1:]))
    assert trace.loss[-1] < trace.loss[0]


def test_empty_dataset():
    with pytest.raises(EmptyDataset):
        train(np.zeros((0, 1024, 2)), {"type": np.zeros(0, dtype=int)}, [TYPE7], TrainConfig(epochs=1))


def test_training_is_deterministic():
    rng = np.random.default_rng(1)
    x = rng.random((10, 1024, 2)).astype(np.float32)
    lab = {"type": np.arange(10) % 7}
    a, _ = train(x, lab, [TYPE7], TrainConfig(epochs=2, batch_size=4, seed=5))
    b, _ = train(x, lab, [TYPE7], TrainConfig(epochs=2, batch_size=4, seed=5))
    c, _ = train(x, lab, [TYPE7], TrainConfig(epochs=2, batch_size=4, seed=6))
    assert dump_checkpoint(a) == dump_checkpoint(b)
    assert dump_checkpoint(a) != dump_checkpoint(c)


# ---------------------------------------------------------------- checkpoints

def test_checkpoint_round_trip(tmp_path):
    p, x = random_net()
    p = p.astype(np.float32)
    blob = dump_checkpoint(p)
    q = parse_checkpoint(blob)
    assert dump_checkpoint(q) == blob
    assert q.heads == p.heads and q.arch == p.arch and q.target_stats == p.target_stats
    a, b = predict(p, x), predict(q, x)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    save_checkpoint(tmp_path / "m.gjnn", p)
    assert (tmp_path / "m.gjnn").read_bytes()[:4] == b"GJNN"
    assert dump_checkpoint(load_checkpoint(tmp_path / "m.gjnn")) == blob


def test_checkpoint_corruption():
    p, _ = random_net()
    blob = dump_checkpoint(p)
    with pytest.raises(CheckpointError):
        parse_checkpoint(b"XXXX" + blob[4:])
    with pytest.raises(CheckpointError):
        parse_checkpoint(blob[:4] + b"\x09\x00" + blob[6:])
    with pytest.raises(CheckpointError):
        parse_checkpoint(blob[:-3])
    with pytest.raises(CheckpointError):
        parse_checkpoint(blob + b"\x00")
