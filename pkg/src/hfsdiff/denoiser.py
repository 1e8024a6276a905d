"""Toy convolutional noise predictor with hand-written reverse mode, Adam and EMA.

The network sees ``(Re x, Im x, t)`` as three channels and returns two channels
read as a complex field, projected onto the diffused subspace. It predicts the
noise ``F_h z``; the deployed score is ``-net(x, t) / sqrt(v(t))``.
"""
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import field as fc
from .diffusion import DiffusionSpec, kernel_coeffs
from .errors import IOFormatError, ParameterError, TrainingError
from .kernels import _accel
from .kernels import conv as _conv
from .rng import RngStream

EPS_T = 1e-3


def _im2col(x):
    return _conv.im2col_nb(x) if _accel.USE_NUMBA else _conv.im2col_np(x)


def _col2im(cols, c):
    return _conv.col2im_nb(cols, c) if _accel.USE_NUMBA else _conv.col2im_np(cols, c)


def _silu(u):
    sig = 0.5 * (1.0 + np.tanh(0.5 * u))
    return u * sig, sig


@dataclass(frozen=True)
class Architecture:
    """Channel widths of the 3x3 conv stack, input first and output last."""

    widths: tuple = (3, 32, 32, 2)

    def __post_init__(self):
        w = tuple(int(c) for c in self.widths)
        if len(w) < 2 or w[0] != 3 or w[-1] != 2 or min(w) < 1:
            raise ParameterError(f"widths must start at 3 and end at 2, got {w}")
        object.__setattr__(self, "widths", w)

    def shapes(self):
        """Parameter shapes in blob order: (W1, b1, W2, b2, ...), W as (9 * c_in, c_out)."""
        out = []
        for cin, cout in zip(self.widths[:-1], self.widths[1:]):
            out += [(9 * cin, cout), (cout,)]
        return out

    def n_params(self):
        return int(sum(np.prod(s) for s in self.shapes()))


class DenoiserNet:
    """Noise predictor. ``params`` are trained, ``ema_params`` are what gets deployed."""

    def __init__(self, spec, arch=None, params=None, ema_rate=0.995, seed=0):
        self.spec = spec
        self.arch = arch or Architecture()
        self.ema_rate = float(ema_rate)
        self.seed = int(seed)
        if params is None:
            params = self._init_params(RngStream(seed, stream_id=0x1A17))
        self.params = [np.asarray(p, dtype=np.float64) for p in params]
        self.ema_params = [p.copy() for p in self.params]

    def _init_params(self, rng):
        out = []
        for shape in self.arch.shapes():
            if len(shape) == 2:
                out.append(rng.normal(shape) / np.sqrt(shape[0]))
            else:
                out.append(np.zeros(shape))
        return out

    @property
    def n_params(self):
        return self.arch.n_params()

    def flat(self, which="params"):
        return np.concatenate([p.ravel() for p in getattr(self, which)])

    def set_flat(self, vec, which="params"):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.n_params:
            raise ParameterError(f"expected {self.n_params} parameters, got {vec.size}")
        out, pos = [], 0
        for shape in self.arch.shapes():
            n = int(np.prod(shape))
            out.append(vec[pos:pos + n].reshape(shape).copy())
            pos += n
        setattr(self, which, out)

    # forward / backward -------------------------------------------------

    def _inputs(self, x, t):
        x = fc.as_field(x)
        batch = x.reshape((-1,) + x.shape[-2:])
        t = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1), (batch.shape[0],))
        tt = np.broadcast_to(t[:, None, None], batch.shape)
        return np.stack([batch.real, batch.imag, tt], axis=-1)

    def _forward(self, h, params):
        nb, rows, cols, _ = h.shape
        cache = []
        n_layers = len(params) // 2
        for layer in range(n_layers):
            w, b = params[2 * layer], params[2 * layer + 1]
            col = _im2col(h)
            u = (col.reshape(-1, col.shape[-1]) @ w + b).reshape(nb, rows, cols, -1)
            if layer < n_layers - 1:
                h, sig = _silu(u)
                cache.append((col, u, sig))
            else:
                h = u
                cache.append((col, None, None))
        return h, cache

    def _project(self, out, shape):
        z = out[..., 0] + 1j * out[..., 1]
        return fc.apply_fh(z, self.spec.freq_mask(shape[-2:]))

    def predict(self, x, t, which="ema_params"):
        """Projected noise estimate for ``x`` at time(s) ``t``."""
        x = fc.as_field(x)
        out, _ = self._forward(self._inputs(x, t), getattr(self, which))
        return self._project(out, x.shape).reshape(x.shape)

    def loss_and_grad(self, xt, t, target, which="params"):
        """Mean over the batch of ``||target - F_h net(xt, t)||^2`` and its parameter gradient.

        ``target`` should already be F_h-projected noise.
        """
        xt = fc.as_field(xt)
        params = getattr(self, which)
        out, cache = self._forward(self._inputs(xt, t), params)
        pred = self._project(out, xt.shape).reshape(xt.shape)
        target = np.asarray(target).reshape(xt.shape)
        r = target - pred
        nb = int(np.prod(xt.shape[:-2], dtype=np.int64)) or 1
        loss = float(np.sum(r.real ** 2 + r.imag ** 2)) / nb
        # d loss / d pred = -2 r / nb; F_h is a symmetric projection on (Re, Im)
        g = fc.apply_fh(-2.0 * r / nb, self.spec.freq_mask(xt.shape[-2:]))
        g = g.reshape((-1,) + xt.shape[-2:])
        du = np.stack([g.real, g.imag], axis=-1)
        grads = [None] * len(params)
        for layer in range(len(params) // 2 - 1, -1, -1):
            col, u, sig = cache[layer]
            if u is not None:
                du = du * (sig * (1.0 + u * (1.0 - sig)))
            flat = du.reshape(-1, du.shape[-1])
            grads[2 * layer] = col.reshape(-1, col.shape[-1]).T @ flat
            grads[2 * layer + 1] = flat.sum(axis=0)
            if layer > 0:
                w = params[2 * layer]
                dcol = (flat @ w.T).reshape(col.shape)
                du = _col2im(dcol, w.shape[0] // 9)
        return loss, grads


class DenoiserScore:
    """Score model backed by a trained net: ``s = -F_h net(x, t) / sqrt(v(t))``."""

    def __init__(self, net, which="ema_params", eps_t=EPS_T):
        self.net = net
        self.spec = net.spec
        self.which = which
        self.eps_t = eps_t

    def evaluate(self, x, t):
        t = max(float(t), self.eps_t)
        v = kernel_coeffs(self.spec, t).var
        return -self.net.predict(x, t, self.which) / np.sqrt(v)


@dataclass
class TrainConfig:
    lr: float = 2e-3
    iterations: int = 2000
    batch_size: int = 8
    ema_rate: float = 0.995
    eps_t: float = EPS_T
    seed: int = 0
    widths: tuple = (3, 32, 32, 2)
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    window: int = 100

    def __post_init__(self):
        if not 0 < self.eps_t < 1:
            raise ParameterError(f"eps_t must lie in (0, 1), got {self.eps_t}")
        if self.iterations < 1 or self.batch_size < 1:
            raise ParameterError("iterations and batch_size must be >= 1")
        if not 0 <= self.ema_rate <= 1:
            raise ParameterError(f"ema_rate must lie in [0, 1], got {self.ema_rate}")
        self.widths = tuple(self.widths)


@dataclass
class TrainLog:
    losses: list = field(default_factory=list)
    window: int = 100

    def running(self, which="final"):
        w = min(self.window, len(self.losses))
        part = self.losses[:w] if which == "initial" else self.losses[-w:]
        return float(np.mean(part))


def _batch_perturb(x0, t, spec, zh, mask):
    """Kernel samples for per-item times, given already projected noise ``zh``."""
    coeffs = [kernel_coeffs(spec, ti) for ti in t]
    a = np.array([c.mean_coeff for c in coeffs])[:, None, None]
    sv = np.sqrt([c.var for c in coeffs])[:, None, None]
    return x0 + (a - 1.0) * fc.apply_fh(x0, mask) + sv * zh


def train_denoiser(dataset, spec, cfg, log=None):
    """Adam on the mean DSM loss with EMA tracking; returns the net (deploy ``ema_params``)."""
    data = [fc.as_field(d) for d in dataset]
    if not data:
        raise ParameterError("training set is empty")
    shape = data[0].shape
    if any(d.shape != shape or d.ndim != 2 for d in data):
        raise ParameterError("training fields must be 2D and share one shape")
    data = np.stack(data)
    net = DenoiserNet(spec, Architecture(cfg.widths), ema_rate=cfg.ema_rate, seed=cfg.seed)
    rng = RngStream(cfg.seed, stream_id=0x7A11)
    m1 = [np.zeros_like(p) for p in net.params]
    m2 = [np.zeros_like(p) for p in net.params]
    mask = spec.freq_mask(shape)
    log = log if log is not None else TrainLog(window=cfg.window)
    for it in range(1, cfg.iterations + 1):
        idx = rng.integers(len(data), cfg.batch_size)
        t = rng.uniform(cfg.batch_size, cfg.eps_t, 1.0)
        z = rng.complex_normal((cfg.batch_size,) + shape)
        target = fc.apply_fh(z, mask)
        xt = _batch_perturb(data[idx], t, spec, target, mask)
        loss, grads = net.loss_and_grad(xt, t, target)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
            raise TrainingError(f"non-finite loss at iteration {it}", iteration=it)
        log.losses.append(loss)
        c1 = 1.0 - cfg.beta1 ** it
        c2 = 1.0 - cfg.beta2 ** it
        for p, g, a, b, e in zip(net.params, grads, m1, m2, net.ema_params):
            a *= cfg.beta1
            a += (1.0 - cfg.beta1) * g
            b *= cfg.beta2
            b += (1.0 - cfg.beta2) * g * g
            p -= cfg.lr * (a / c1) / (np.sqrt(b / c2) + cfg.adam_eps)
            e *= cfg.ema_rate
            e += (1.0 - cfg.ema_rate) * p
    return net


def save_checkpoint(net, path, extra=None):
    """Write ``<path>.json`` (descriptor) and ``<path>.bin`` (float64 LE: params then EMA)."""
    path = Path(path)
    meta = {"format": "hfsdiff-denoiser", "version": 1,
            "architecture": {"widths": list(net.arch.widths), "kernel": 3,
                             "shapes": [list(s) for s in net.arch.shapes()]},
            "n_params": net.n_params, "blobs": ["params", "ema_params"],
            "spec": net.spec.to_dict(), "ema_rate": net.ema_rate, "seed": net.seed}
    if extra:
        meta["extra"] = extra
    blob = np.concatenate([net.flat("params"), net.flat("ema_params")]).astype("<f8")
    path.with_suffix(".bin").write_bytes(blob.tobytes())
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path.with_suffix(".json")


def load_checkpoint(path):
    path = Path(path)
    try:
        meta = json.loads(path.with_suffix(".json").read_text())
        raw = path.with_suffix(".bin").read_bytes()
    except (OSError, ValueError) as exc:
        raise IOFormatError(f"cannot read checkpoint {path}: {exc}") from exc
    if meta.get("format") != "hfsdiff-denoiser":
        raise IOFormatError(f"{path} is not a denoiser checkpoint")
    arch = Architecture(tuple(meta["architecture"]["widths"]))
    blob = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    n = arch.n_params()
    if blob.size != 2 * n:
        raise IOFormatError(f"checkpoint blob has {blob.size} values, expected {2 * n}")
    net = DenoiserNet(DiffusionSpec.from_dict(meta["spec"]), arch, ema_rate=meta["ema_rate"], seed=meta["seed"])
    net.set_flat(blob[:n], "params")
    net.set_flat(blob[n:], "ema_params")
    return net


def config_dict(cfg):
    d = asdict(cfg)
    d["widths"] = list(cfg.widths)
    return d
