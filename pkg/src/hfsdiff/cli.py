"""Command-line entry point ``hfsdiff``.

Every subcommand writes ``manifest.json`` into ``--out``. Passing that manifest
back through ``--config`` replays the run: options come from built-in
defaults, then the config file, then flags given explicitly on the command line.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence, 4 I/O error.
"""
import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import bench, io, metrics
from . import field as fc
from .acquisition import PHANTOM_KINDS, acquire, make_csm, make_phantom, make_undersampling_mask
from .denoiser import DenoiserScore, TrainConfig, TrainLog, config_dict, load_checkpoint, save_checkpoint, train_denoiser
from .diffusion import DiffusionSpec, Variant
from .errors import DivergenceError, HfsError, IOFormatError, ParameterError, TrainingError
from .manifest import load_config, write_manifest
from .rng import RngStream
from .sampler import SamplerConfig, reconstruct
from .score import GaussianPrior, GaussianScoreModel

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4

COMMON = {"seed": 0, "variant": "hfs-vp", "steps": 1000, "correctors": 1, "nl": 4, "factor": 2.0, "acs": 4,
          "lambda1": 1.0, "lambda2": 1.0, "snr_r": 0.16, "no_dc": False}

DEFAULTS = {
    "phantom": {"kind": "shepp_logan", "size": 16, "cols": None, "jitter": 0.0},
    "csm": {"coils": 4, "size": 16, "cols": None},
    "mask": {"mask_kind": "uniform", "size": 16, "cols": None},
    "acquire": {"source": "phantom", "kind": "shepp_logan", "size": 16, "coils": 1, "mask_kind": "uniform",
                "noise": 0.0, "prior_floor": 1e-2},
    "train": {"kind": "shepp_logan", "count": 64, "size": 16, "jitter": 1.0, "iterations": 2000, "batch": 8,
              "lr": 2e-3, "ema": 0.995, "widths": "3,32,32,2"},
    "reconstruct": {"data": None, "checkpoint": None, "prior": None, "snapshot_every": 0},
    "sweep": {"size": 16, "step_counts": "50,100,200,300,400,500", "variants": "hfs-vp,vp", "chains": 8,
              "prior_floor": 1e-2},
    "ablate-nl": {"size": 64, "nl_values": "2,8,16,24,32", "steps": 100, "chains": 4, "acs": 16,
                  "prior_floor": 1e-2},
    "metrics": {"recon": None, "ref": None},
    "timing": {"size": 16, "steps_list": "100,1000", "repeats": 1, "prior_floor": 1e-2},
}

# options that locate files rather than describe the computation
_PATH_KEYS = {"out", "config"}


def _int_list(s):
    return [int(v) for v in str(s).split(",") if v.strip()]


def _add_common(p):
    p.add_argument("--config", help="JSON options file or a manifest.json to replay")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (created if missing)")
    p.add_argument("--variant", choices=["vp", "ve", "hfs-vp", "hfs-ve"])
    p.add_argument("--steps", type=int, help="sampler steps N")
    p.add_argument("--correctors", type=int, help="corrector steps per predictor step")
    p.add_argument("--nl", type=int, help="low-frequency band width n_l")
    p.add_argument("--factor", type=float, help="nominal undersampling factor")
    p.add_argument("--acs", type=int, help="ACS lines")
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--snr-r", dest="snr_r", type=float)
    p.add_argument("--no-dc", dest="no_dc", action="store_const", const=True)


def build_parser():
    parser = argparse.ArgumentParser(prog="hfsdiff", description=__doc__.splitlines()[0],
                                     argument_default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_, argument_default=argparse.SUPPRESS)
        _add_common(p)
        return p

    p = cmd("phantom", "generate a normalized test object")
    p.add_argument("--kind", choices=PHANTOM_KINDS)
    p.add_argument("--size", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--jitter", type=float)

    p = cmd("csm", "simulate SOS-normalized coil maps")
    p.add_argument("--coils", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--cols", type=int)

    p = cmd("mask", "build an undersampling mask")
    p.add_argument("--mask-kind", dest="mask_kind", choices=["uniform", "gaussian_density"])
    p.add_argument("--size", type=int, help="total lines")
    p.add_argument("--cols", type=int)

    p = cmd("acquire", "simulate a dataset folder (truth, maps, mask, k-space)")
    p.add_argument("--source", choices=["phantom", "gaussian"],
                   help="'gaussian' draws the truth from a Gaussian prior and stores the prior")
    p.add_argument("--kind", choices=PHANTOM_KINDS)
    p.add_argument("--size", type=int)
    p.add_argument("--coils", type=int)
    p.add_argument("--mask-kind", dest="mask_kind", choices=["uniform", "gaussian_density"])
    p.add_argument("--noise", type=float, help="k-space noise std per component")
    p.add_argument("--prior-floor", dest="prior_floor", type=float)

    p = cmd("train", "train the toy denoiser on synthetic phantoms")
    p.add_argument("--kind", choices=PHANTOM_KINDS)
    p.add_argument("--count", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--jitter", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--ema", type=float)
    p.add_argument("--widths")

    p = cmd("reconstruct", "predictor-corrector reconstruction of a dataset folder")
    p.add_argument("--data", help="dataset folder written by 'acquire'")
    p.add_argument("--checkpoint", help="trained denoiser (.json)")
    p.add_argument("--prior", help="folder with prior_mean/prior_var arrays (defaults to --data)")
    p.add_argument("--snapshot-every", dest="snapshot_every", type=int)

    p = cmd("sweep", "NMSE/PSNR/SSIM against step count on the Gaussian testbed")
    p.add_argument("--size", type=int)
    p.add_argument("--step-counts", dest="step_counts")
    p.add_argument("--variants")
    p.add_argument("--chains", type=int)
    p.add_argument("--prior-floor", dest="prior_floor", type=float)

    p = cmd("ablate-nl", "metrics against the low-band width n_l")
    p.add_argument("--size", type=int)
    p.add_argument("--nl-values", dest="nl_values")
    p.add_argument("--chains", type=int)
    p.add_argument("--prior-floor", dest="prior_floor", type=float)

    p = cmd("metrics", "NMSE/PSNR/SSIM of two arrays")
    p.add_argument("--recon", help="reconstruction .cfl")
    p.add_argument("--ref", help="reference .cfl")

    p = cmd("timing", "wall clock of reconstructions at several step counts")
    p.add_argument("--size", type=int)
    p.add_argument("--steps-list", dest="steps_list")
    p.add_argument("--repeats", type=int)
    p.add_argument("--prior-floor", dest="prior_floor", type=float)
    return parser


def resolve(command, explicit):
    """Merge defaults, the optional config file and explicit flags."""
    opts = dict(COMMON)
    opts.update(DEFAULTS[command])
    cfg_path = explicit.get("config")
    if cfg_path:
        cfg, origin = load_config(cfg_path)
        if origin is not None and origin != command:
            raise ParameterError(f"manifest was written by '{origin}', not '{command}'")
        unknown = set(cfg) - set(opts)
        if unknown:
            raise ParameterError(f"unknown options in {cfg_path}: {sorted(unknown)}")
        opts.update(cfg)
    opts.update({k: v for k, v in explicit.items() if k not in _PATH_KEYS})
    opts["out"] = explicit.get("out", ".")
    return opts


def _spec(o):
    variant = Variant.parse(o["variant"])
    return DiffusionSpec(variant, n_l=o["nl"] if variant.is_hfs else None)


def _sampler_cfg(o):
    return SamplerConfig(o["lambda1"], o["lambda2"], o["snr_r"], o["steps"], o["correctors"], not o["no_dc"],
                         o["seed"], trace=True)


def _config_echo(o):
    return {k: v for k, v in o.items() if k not in _PATH_KEYS}


def _pgm(out, name, img):
    lo, hi = io.write_pgm(out / f"{name}.pgm", img)
    return {"file": f"{name}.pgm", "min": lo, "max": hi}


def _mask_from_array(arr, factor=1.0, acs=0):
    arr = np.abs(np.asarray(arr)) > 0.5
    lines = np.flatnonzero(arr.all(axis=1))
    return fc.SamplingMask(tuple(lines.tolist()), arr.shape, factor, acs)


def do_phantom(o, out):
    rows = o["size"]
    cols = o["cols"] or rows
    ph = make_phantom(o["kind"], rows, cols, RngStream(o["seed"], 1), n_l=o["nl"], jitter=o["jitter"])
    files = [io.write_cfl(out / "phantom", ph.image)]
    scale = _pgm(out, "phantom", ph.image)
    return files, [], {"normalization_std": ph.std, "pgm": scale}


def do_csm(o, out):
    rows = o["size"]
    csm = make_csm(o["coils"], rows, o["cols"] or rows)
    return [io.write_cfl(out / "csm", io.coils_to_cfl(csm.maps))], [], {}


def do_mask(o, out):
    rng = RngStream(o["seed"], 3)
    mu = make_undersampling_mask(o["mask_kind"], o["factor"], o["acs"], o["size"], rng, n_cols=o["cols"])
    files = [io.write_cfl(out / "mask", mu.array())]
    info = {"sampled_lines": list(mu.sampled_lines), "n_sampled": len(mu.sampled_lines),
            "acceleration": mu.acceleration()}
    return files, [], info


def do_acquire(o, out):
    n = o["size"]
    rng = RngStream(o["seed"], 4)
    files, extra = [], {}
    if o["source"] == "gaussian":
        if o["mask_kind"] != "uniform":
            raise ParameterError("the Gaussian testbed uses a uniform mask")
        tb = bench.make_gaussian_testbed(n=n, factor=int(o["factor"]), acs=o["acs"], n_l=o["nl"], seed=o["seed"],
                                         n_coils=o["coils"], sigma_noise=o["noise"], floor=o["prior_floor"])
        x, csm, mu, y = tb.x_true, tb.csm, tb.mu, tb.y
        files.append(io.write_cfl(out / "prior_mean", tb.prior.mode_means))
        files.append(io.write_cfl(out / "prior_var", tb.prior.mode_vars))
    else:
        ph = make_phantom(o["kind"], n, n, rng.spawn(1), n_l=o["nl"])
        x = ph.image
        extra["normalization_std"] = ph.std
        csm = make_csm(o["coils"], n, n)
        mu = make_undersampling_mask(o["mask_kind"], o["factor"], o["acs"], n, rng.spawn(2))
        y = acquire(x, csm, mu, o["noise"], rng.spawn(3))
    files.append(io.write_cfl(out / "phantom", x))
    files.append(io.write_cfl(out / "csm", io.coils_to_cfl(csm.maps)))
    files.append(io.write_cfl(out / "mask", mu.array()))
    files.append(io.write_cfl(out / "y", io.coils_to_cfl(y)))
    extra.update({"acceleration": mu.acceleration(), "n_sampled": len(mu.sampled_lines),
                  "pgm": _pgm(out, "phantom", x)})
    return files, [], extra


def do_train(o, out):
    n = o["size"]
    rng = RngStream(o["seed"], 5)
    data = [make_phantom(o["kind"], n, n, rng.spawn(i), n_l=o["nl"], jitter=o["jitter"]).image
            for i in range(o["count"])]
    cfg = TrainConfig(lr=o["lr"], iterations=o["iterations"], batch_size=o["batch"], ema_rate=o["ema"],
                      seed=o["seed"], widths=tuple(_int_list(o["widths"])))
    log = TrainLog(window=cfg.window)
    spec = _spec(o)
    net = train_denoiser(data, spec, cfg, log)
    ckpt = save_checkpoint(net, out / "model", extra={"train": config_dict(cfg)})
    with open(out / "loss.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loss"])
        w.writerows((i + 1, repr(v)) for i, v in enumerate(log.losses))
    info = {"n_params": net.n_params, "initial_running_loss": log.running("initial"),
            "final_running_loss": log.running("final")}
    return [ckpt, ckpt.with_suffix(".bin")], [], info


def _load_dataset(data):
    data = Path(data)
    y = io.coils_from_cfl(io.read_cfl(data / "y"))
    csm = fc.CoilSet(io.coils_from_cfl(io.read_cfl(data / "csm")))
    mask = io.read_cfl(data / "mask")
    meta = {}
    if (data / "manifest.json").exists():
        meta, _ = load_config(data / "manifest.json")
    mu = _mask_from_array(mask, float(meta.get("factor", 1.0)), int(meta.get("acs", 0)))
    truth = io.read_cfl(data / "phantom") if (data / "phantom.hdr").exists() else None
    inputs = [data / f"{n}.cfl" for n in ("y", "csm", "mask")]
    return y, csm, mu, truth, inputs


def do_reconstruct(o, out):
    if not o["data"]:
        raise ParameterError("reconstruct needs --data")
    y, csm, mu, truth, inputs = _load_dataset(o["data"])
    if o["checkpoint"]:
        net = load_checkpoint(o["checkpoint"])
        spec = net.spec
        if spec.variant != Variant.parse(o["variant"]) or (spec.is_hfs and spec.n_l != o["nl"]):
            raise ParameterError(f"checkpoint was trained for {spec.variant.value} n_l={spec.n_l}; "
                                       "pass matching --variant/--nl")
        model = DenoiserScore(net)
        inputs += [Path(o["checkpoint"]).with_suffix(".json"), Path(o["checkpoint"]).with_suffix(".bin")]
    else:
        pdir = Path(o["prior"] or o["data"])
        spec = _spec(o)
        var = io.read_cfl(pdir / "prior_var").real
        model = GaussianScoreModel(GaussianPrior(io.read_cfl(pdir / "prior_mean"), var), spec)
        inputs += [pdir / "prior_mean.cfl", pdir / "prior_var.cfl"]
    cfg = _sampler_cfg(o)
    try:
        rep = reconstruct(y, csm, mu, None, model, spec, cfg, x_ref=truth, snapshot_every=o["snapshot_every"])
    except DivergenceError as exc:
        _write_trace(out / "trace.csv", exc.trace)
        raise
    files = [io.write_cfl(out / "recon", rep.reconstruction)]
    for i, snap in sorted(rep.snapshots.items()):
        files.append(io.write_cfl(out / f"snapshot_{i:05d}", snap))
    _write_trace(out / "trace.csv", rep.trace)
    extra = {"wall_time_s": rep.wall_time, "warnings": rep.warnings, "pgm": _pgm(out, "recon", rep.reconstruction)}
    if truth is not None:
        m = metrics.evaluate(rep.reconstruction, truth).as_dict()
        (out / "metrics.json").write_text(json.dumps(m, indent=2) + "\n")
        extra["metrics"] = m
    return files, inputs, extra


def _write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "k", "norm_g", "norm_G", "nmse"])
        w.writerows(trace)


def _testbed(o):
    return bench.make_gaussian_testbed(n=o["size"], factor=int(o["factor"]), acs=o["acs"], n_l=o["nl"],
                                       seed=o["seed"], floor=o["prior_floor"])


def do_sweep(o, out):
    tb = _testbed(o)
    cfg = bench.SweepConfig(tuple(_int_list(o["step_counts"])), tuple(o["variants"].split(",")), o["chains"],
                            o["seed"], o["correctors"], o["lambda1"], o["lambda2"], o["snr_r"], not o["no_dc"])
    rows = bench.convergence_sweep(tb, cfg)
    bench.write_csv(rows, out / "sweep.csv")
    return [], [], {"csv": "sweep.csv", "seeds": cfg.seeds()}


def do_ablate(o, out):
    tb = _testbed(o)
    cfg = bench.SweepConfig((o["steps"],), ("HFS_VP",), o["chains"], o["seed"], o["correctors"], o["lambda1"],
                            o["lambda2"], o["snr_r"], not o["no_dc"])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rows = bench.ablation_nl(tb, _int_list(o["nl_values"]), cfg, steps=o["steps"])
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    bench.write_csv(rows, out / "ablation.csv")
    return [], [], {"csv": "ablation.csv", "warnings": [str(w.message) for w in caught]}


def do_metrics(o, out):
    if not o["recon"] or not o["ref"]:
        raise ParameterError("metrics needs --recon and --ref")
    x, ref = io.read_cfl(o["recon"]), io.read_cfl(o["ref"])
    m = metrics.evaluate(x, ref).as_dict()
    (out / "metrics.json").write_text(json.dumps(m, indent=2) + "\n")
    print(json.dumps(m))
    return [], [Path(o["recon"]).with_suffix(".cfl"), Path(o["ref"]).with_suffix(".cfl")], {"metrics": m}


def do_timing(o, out):
    tb = _testbed(o)
    rows = bench.measure_timing(tb, _int_list(o["steps_list"]), Variant.parse(o["variant"]).value, o["seed"],
                                o["repeats"])
    with open(out / "timing.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["label", "steps", "wall_s", "ratio"])
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r[k] is None else r[k]) for k in w.fieldnames})
    return [], [], {"timing": rows}


HANDLERS = {"phantom": do_phantom, "csm": do_csm, "mask": do_mask, "acquire": do_acquire, "train": do_train,
            "reconstruct": do_reconstruct, "sweep": do_sweep, "ablate-nl": do_ablate, "metrics": do_metrics,
            "timing": do_timing}


def run(argv=None):
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    o = resolve(command, args)
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    files, inputs, extra = HANDLERS[command](o, out)
    produced = [Path(f) for f in files] + sorted(p for p in out.glob("*") if p.suffix in (".hdr", ".pgm", ".csv"))
    produced = sorted(set(produced) | {p.with_suffix(".hdr") for p in produced if p.suffix == ".cfl"})
    write_manifest(out, command, _config_echo(o), inputs, produced, extra)
    return EXIT_OK


def main(argv=None):
    try:
        return run(argv)
    except (DivergenceError, TrainingError) as exc:
        print(f"hfsdiff: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (IOFormatError, OSError) as exc:
        print(f"hfsdiff: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (HfsError, ValueError, KeyError, TypeError) as exc:
        print(f"hfsdiff: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
