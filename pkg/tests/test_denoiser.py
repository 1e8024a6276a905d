import numpy as np
import pytest

from hfsdiff import field as fc
from hfsdiff.acquisition import make_phantom
from hfsdiff.denoiser import (Architecture, DenoiserNet, DenoiserScore, TrainConfig, TrainLog, load_checkpoint,
                              save_checkpoint, train_denoiser)
from hfsdiff.diffusion import DiffusionSpec
from hfsdiff.errors import IOFormatError, ParameterError
from hfsdiff.kernels import _accel
from hfsdiff.kernels import conv
from hfsdiff.rng import RngStream

from conftest import rand_field
from oracles import fd_param_grad

SPEC = DiffusionSpec("HFS_VP", n_l=2)
SMALL = (3, 8, 8, 2)


def small_net(seed=0):
    net = DenoiserNet(SPEC, Architecture(SMALL), seed=seed)
    # nonzero biases so their gradients are exercised away from the origin
    net.set_flat(net.flat() + 0.05 * RngStream(seed, 5).normal(net.n_params))
    return net


def toy_data(count=8, n=8, seed=0):
    rng = RngStream(seed)
    return [make_phantom("shepp_logan", n, n, rng, jitter=0.1).image for _ in range(count)]


def test_architecture_counts():
    assert Architecture(SMALL).n_params() == (27 * 8 + 8) + (72 * 8 + 8) + (72 * 2 + 2)
    assert Architecture().n_params() == (27 * 32 + 32) + (288 * 32 + 32) + (288 * 2 + 2)
    with pytest.raises(ParameterError):
        Architecture((2, 8, 2))


def test_gradients_match_central_differences():
    net = small_net(1)
    assert net.n_params <= 2000
    xt = rand_field((2, 8, 8), 2)
    t = np.array([0.3, 0.8])
    target = fc.apply_fh(rand_field((2, 8, 8), 3), SPEC.freq_mask((8, 8)))
    _, grads = net.loss_and_grad(xt, t, target)
    analytic = np.concatenate([g.ravel() for g in grads])
    probe = small_net(1)

    def loss(vec):
        probe.set_flat(vec)
        return probe.loss_and_grad(xt, t, target)[0]

    fd = fd_param_grad(loss, net.flat())
    floor = 1e-6 * np.linalg.norm(fd)
    pos = 0
    for shape in net.arch.shapes():
        n = int(np.prod(shape))
        a, f = analytic[pos:pos + n], fd[pos:pos + n]
        assert np.linalg.norm(a - f) / max(np.linalg.norm(f), floor) <= 1e-4
        pos += n
    # the output bias is a constant field: pure DC, removed by F_h
    assert np.linalg.norm(analytic[-2:]) < 1e-12


def test_output_is_high_band():
    net = small_net(4)
    score = DenoiserScore(net, which="params")
    m = SPEC.freq_mask((8, 8))
    for seed in range(5):
        x = rand_field((8, 8), seed)
        s = score.evaluate(x, 0.1 + 0.2 * seed)
        assert np.linalg.norm(fc.apply_fl(s, m)) <= 1e-10 * np.linalg.norm(s)


def test_forward_deterministic_and_batched():
    net = small_net(5)
    x = rand_field((3, 8, 8), 6)
    t = np.array([0.2, 0.5, 0.9])
    a = net.predict(x, t, "params")
    assert np.array_equal(a, net.predict(x, t, "params"))
    for b in range(3):
        np.testing.assert_allclose(net.predict(x[b], t[b], "params"), a[b], rtol=1e-12, atol=1e-14)


def test_score_clamps_small_time():
    net = small_net(7)
    s = DenoiserScore(net, which="params")
    x = rand_field((8, 8), 8)
    assert np.array_equal(s.evaluate(x, 0.0), s.evaluate(x, 1e-3))


def test_one_step_ema_zero_copies():
    net = train_denoiser(toy_data(), SPEC, TrainConfig(iterations=1, ema_rate=0.0, widths=SMALL))
    for p, e in zip(net.params, net.ema_params):
        assert np.array_equal(p, e)


def test_ema_update_rule():
    cfg = TrainConfig(iterations=1, ema_rate=0.9, widths=SMALL, seed=3)
    init = DenoiserNet(SPEC, Architecture(SMALL), seed=3).flat()
    net = train_denoiser(toy_data(), SPEC, cfg)
    np.testing.assert_allclose(net.flat("ema_params"), 0.9 * init + 0.1 * net.flat(), rtol=1e-14, atol=1e-16)


def test_training_is_deterministic():
    cfg = TrainConfig(iterations=5, widths=SMALL, seed=9)
    a = train_denoiser(toy_data(), SPEC, cfg)
    b = train_denoiser(toy_data(), SPEC, cfg)
    assert np.array_equal(a.flat(), b.flat())
    assert np.array_equal(a.flat("ema_params"), b.flat("ema_params"))


def test_training_log_and_validation():
    log = TrainLog(window=3)
    train_denoiser(toy_data(), SPEC, TrainConfig(iterations=6, widths=SMALL, window=3), log)
    assert len(log.losses) == 6 and all(np.isfinite(log.losses))
    assert log.running("initial") == pytest.approx(np.mean(log.losses[:3]))
    with pytest.raises(ParameterError):
        train_denoiser([], SPEC, TrainConfig(iterations=1))
    with pytest.raises(ParameterError):
        TrainConfig(eps_t=0.0)


def test_checkpoint_roundtrip(tmp_path):
    net = train_denoiser(toy_data(), SPEC, TrainConfig(iterations=3, widths=SMALL))
    path = save_checkpoint(net, tmp_path / "ckpt")
    back = load_checkpoint(path)
    assert back.spec == net.spec and back.arch == net.arch
    assert np.array_equal(back.flat(), net.flat())
    assert np.array_equal(back.flat("ema_params"), net.flat("ema_params"))
    (tmp_path / "ckpt.bin").write_bytes(b"\0" * 8)
    with pytest.raises(IOFormatError):
        load_checkpoint(path)


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba unavailable")
def test_conv_backends_identical():
    x = RngStream(1).normal((2, 6, 7, 3))
    cols = conv.im2col_nb(x)
    assert np.array_equal(cols, conv.im2col_np(x))
    assert np.array_equal(conv.col2im_nb(cols, 3), conv.col2im_np(cols, 3))


def test_col2im_is_adjoint_of_im2col():
    x = RngStream(2).normal((1, 5, 5, 2))
    c = RngStream(3).normal(conv.im2col_np(x).shape)
    lhs = np.sum(conv.im2col_np(x) * c)
    rhs = np.sum(x * conv.col2im_np(c, 2))
    assert lhs == pytest.approx(rhs, rel=1e-12)
