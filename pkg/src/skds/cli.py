"""Command-line interface: ``skds <subcommand> [options]``.

Every artifact carries ``{config, seed, version, wall_time}``; CSV artifacts get
a ``<file>.meta.json`` sidecar and bundle directories a ``run.json``. Failures
print ``{"error": ..., "message": ...}`` to stderr and exit nonzero.
"""

from __future__ import annotations

import os
import sys


def _pin_threads(argv):
    """Cap BLAS/OpenMP threads before numpy loads (``STADION_THREADS``, 0 = auto)."""
    n = os.environ.get("STADION_THREADS", "0").strip() or "0"
    if argv[:1] == ["bench-timing"]:
        n = "1"
    if n != "0":
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = n


_pin_threads(sys.argv[1:])

import argparse  # noqa: E402
import json  # noqa: E402
import subprocess  # noqa: E402
import time  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from skds import __version__  # noqa: E402
from skds import config as cfgmod  # noqa: E402
from skds.dataset import read_csv, to_csv_text  # noqa: E402
from skds.errors import ConfigError, InvalidInput, SkdsError  # noqa: E402


def version_string() -> str:
    """``v<version>[-g<commit>]`` in the style of ``git describe``."""
    try:
        out = subprocess.run(
            ["git", "-C", str(Path(__file__).parent), "rev-parse", "--short", "HEAD"],
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"v{__version__}-g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


def workers() -> int:
    n = int(os.environ.get("STADION_THREADS", "0") or 0)
    return n if n > 0 else (os.cpu_count() or 1)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _envelope(cfg, result, t0):
    return {
        "config": cfg,
        "seed": cfg["seed"],
        "version": version_string(),
        "wall_time": time.perf_counter() - t0,
        "result": result,
    }


def _write_json(path, obj):
    text = _dump(obj)
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _write_csv_with_meta(path, text, meta):
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)
    Path(str(p) + ".meta.json").write_text(_dump(meta))


def _require(path, what):
    if path is None or not Path(path).exists():
        raise InvalidInput(f"{what} not found: {path}")
    return Path(path)


def _config(args, overrides):
    file_cfg = cfgmod.load(args.config) if getattr(args, "config", None) else {}
    return cfgmod.resolve(file_cfg, overrides)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args):
    from skds.datagen import make_benchmark, save_bundle

    t0 = time.perf_counter()
    cfg = _config(
        args,
        {
            "seed": args.seed,
            "data": {
                "kind": args.kind,
                "graph_kind": args.graph,
                "d": args.d,
                "n_per_env": args.n,
                "n_train_env": args.n_train,
                "n_test_env": args.n_test,
                "shift_magnitude": args.shift,
            },
        },
    )
    dc = cfg["data"]
    bundle = make_benchmark(
        dc["kind"],
        dc["graph_kind"],
        dc["d"],
        dc["n_per_env"],
        dc["n_train_env"],
        dc["n_test_env"],
        dc["shift_magnitude"],
        cfg["seed"],
        dc["expected_degree"],
    )
    out = save_bundle(bundle, args.out)
    (out / "run.json").write_text(_dump(_envelope(cfg, {"bundle": str(out)}, t0)))
    return 0


def _kernel_for(cfg, d, data):
    from skds.kernels import make_kernel

    return make_kernel(cfg["kernel"]["family"], cfg["kernel"]["bandwidth"], d, data)


def cmd_train(args):
    from skds.datagen import load_bundle
    from skds.models import make_model
    from skds.trainer import TrainConfig, train

    t0 = time.perf_counter()
    cfg = _config(
        args,
        {
            "seed": args.seed,
            "kernel": {"family": args.kernel, "bandwidth": args.bandwidth},
            "model": {"kind": args.model, "hidden": args.hidden, "diffusion": args.diffusion},
            "train": {
                "steps": args.steps,
                "lr": args.lr,
                "lambda_sparsity": args.lam,
                "batch_size": args.batch_size,
                "estimator": args.estimator,
            },
        },
    )
    bundle = load_bundle(_require(args.bundle, "bundle"))
    mc = cfg["model"]
    model = make_model(mc["kind"], bundle.d, mc["hidden"], mc["diffusion"], cfg["seed"])
    kernel = _kernel_for(cfg, bundle.d, bundle.observational.X)
    tc = TrainConfig(
        **cfg["train"],
        kernel=kernel.family,
        bandwidth=kernel.bandwidth,
        seed=cfg["seed"],
    )
    envs = [bundle.observational] + [e.data for e in bundle.train_envs]
    fit = train(envs, model, tc, kernel)
    result = fit.to_dict()
    result.pop("wall_time")
    result["env_names"] = ["obs"] + [e.name for e in bundle.train_envs]
    _write_json(args.out, _envelope(cfg, result, t0))
    return 0


def _load_fit(path):
    from skds.trainer import FitResult

    doc = json.loads(_require(path, "fit file").read_text())
    return FitResult.from_dict(doc.get("result", doc)), doc.get("config", {})


def _sim_config(cfg, seed):
    from skds.simulator import SimConfig

    return SimConfig(**cfg["sim"], seed=seed)


def cmd_eval(args):
    from skds.datagen import load_bundle
    from skds.experiments import evaluate_fit

    t0 = time.perf_counter()
    cfg = _config(
        args,
        {
            "seed": args.seed,
            "sim": {"dt": args.dt, "burn_in_steps": args.burn_in, "thinning": args.thin},
        },
    )
    fit, _ = _load_fit(args.fit)
    bundle = load_bundle(_require(args.bundle, "bundle"))
    if fit.model.d != bundle.d:
        raise InvalidInput(f"model dimension {fit.model.d} does not match bundle {bundle.d}")
    res = evaluate_fit(fit.model, bundle, _sim_config(cfg, cfg["seed"]), seed=cfg["seed"])
    _write_json(args.out, _envelope(cfg, res, t0))
    return 0


def _load_model(path):
    from skds.models import SdeModel

    doc = json.loads(_require(path, "model file").read_text())
    doc = doc.get("result", doc)
    return SdeModel.from_dict(doc.get("model", doc))


def _load_intervention(path):
    from skds.models import Intervention

    if path is None:
        return None
    return Intervention.from_dict(json.loads(_require(path, "intervention file").read_text()))


def cmd_simulate(args):
    from skds.simulator import euler_maruyama_sample

    t0 = time.perf_counter()
    cfg = _config(
        args,
        {
            "seed": args.seed,
            "sim": {
                "dt": args.dt,
                "burn_in_steps": args.burn_in,
                "thinning": args.thin,
                "n_samples": args.n,
                "chains": args.chains,
            },
        },
    )
    model = _load_model(args.model)
    phi = _load_intervention(args.intervention)
    ds = euler_maruyama_sample(model, phi, _sim_config(cfg, cfg["seed"]))
    _write_csv_with_meta(args.out, to_csv_text(ds.X), _envelope(cfg, {"n": ds.n, "d": ds.d}, t0))
    return 0


def cmd_skds(args):
    from skds.discrepancy import skds_grad

    t0 = time.perf_counter()
    cfg = _config(
        args,
        {
            "seed": args.seed,
            "kernel": {"family": args.kernel, "bandwidth": args.bandwidth},
            "train": {"estimator": args.estimator},
        },
    )
    X = read_csv(_require(args.data, "data file"))
    model = _load_model(args.model)
    if X.shape[1] != model.d:
        raise InvalidInput(f"data has {X.shape[1]} columns, model expects {model.d}")
    phi = _load_intervention(args.intervention)
    kernel = _kernel_for(cfg, model.d, X)
    lg = skds_grad(model, phi, kernel, X, cfg["train"]["estimator"], workers=workers())
    sq = sum(float(np.sum(g * g)) for g in lg.grad_theta.values())
    sq_phi = sum(float(np.sum(g * g)) for g in lg.grad_phi.values())
    res = {
        "loss": lg.loss,
        "grad_norm": float(np.sqrt(sq)),
        "grad_phi_norm": float(np.sqrt(sq_phi)),
        "grad": lg.grad_theta,
        "kernel": kernel.to_dict(),
        "n": int(X.shape[0]),
    }
    _write_json(args.out, _envelope(cfg, res, t0))
    return 0


def cmd_bench_timing(args):
    from skds.discrepancy import timing_bench

    t0 = time.perf_counter()
    cfg = _config(args, {"seed": args.seed, "kernel": {"family": args.kernel}})
    rep = timing_bench(cfg["kernel"]["family"], args.d, args.n, args.repeats, cfg["seed"]).to_dict()
    rep["skds_ms"], rep["kds_ms"] = rep["skds_ms_mean"], rep["kds_ms_mean"]
    rep["threads"] = os.environ.get("OMP_NUM_THREADS", "default")
    _write_json(args.out, _envelope(cfg, rep, t0))
    return 0


def cmd_example_fig1(args):
    from skds.experiments import example_fig1, fig1_rows

    t0 = time.perf_counter()
    cfg = _config(args, {"seed": args.seed, "kernel": {"bandwidth": args.bandwidth}})
    bw = cfg["kernel"]["bandwidth"]
    if bw == "median":
        bw = 0.5
    res = example_fig1(args.n, bw, cfg["seed"], args.estimator)
    lines = ["panel,alpha,sigma,x,value"]
    for panel, a, s, x, v in fig1_rows(res):
        xs = "" if x == "" else repr(float(x))
        lines.append(f"{panel},{float(a)!r},{float(s)!r},{xs},{float(v)!r}")
    summary = {
        "n": args.n,
        "bandwidth": bw,
        "estimator": args.estimator,
        "alpha_crossings": res.alpha_crossings,
        "sigma_crossings": res.sigma_crossings,
        "loss_at_truth": res.loss_at_truth,
        "se_at_truth": res.se_at_truth,
        "grid_min": float(res.grid.min()),
    }
    _write_csv_with_meta(args.out, "\n".join(lines) + "\n", _envelope(cfg, summary, t0))
    return 0


def _metric_values(path, metric):
    doc = json.loads(_require(path, "result file").read_text())
    if isinstance(doc, dict):
        doc = doc.get("result", doc)
    if not isinstance(doc, list):
        raise InvalidInput(f"{path}: expected a JSON array")
    vals = [row[metric] if isinstance(row, dict) else row for row in doc]
    try:
        return [float(v) for v in vals]
    except (TypeError, ValueError):
        raise InvalidInput(f"{path}: non-numeric entries") from None


def cmd_sigtest(args):
    from skds.metrics import wilcoxon_margin_test

    t0 = time.perf_counter()
    cfg = _config(args, {"seed": args.seed})
    res = wilcoxon_margin_test(
        _metric_values(args.ours, args.metric),
        _metric_values(args.baseline, args.metric),
        args.margin,
        args.direction,
    )
    res["metric"] = args.metric
    _write_json(args.out, _envelope(cfg, res, t0))
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="skds", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=version_string())
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON run config; CLI flags take precedence")
        sp.add_argument("--seed", type=int)
        sp.set_defaults(func=fn)
        return sp

    sp = add("gen", cmd_gen, "generate a benchmark bundle directory")
    sp.add_argument("--kind", choices=["sde", "scm"])
    sp.add_argument("--graph", choices=["er", "sf"])
    sp.add_argument("--d", type=int)
    sp.add_argument("--n", type=int, help="samples per environment")
    sp.add_argument("--n-train", type=int)
    sp.add_argument("--n-test", type=int)
    sp.add_argument("--shift", type=float)
    sp.add_argument("--out", required=True)

    sp = add("train", cmd_train, "fit a model to a bundle's training environments")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--model", choices=["linear", "mlp"])
    sp.add_argument("--hidden", type=int)
    sp.add_argument("--diffusion", choices=["diag_exp", "basis_cone"])
    sp.add_argument("--kernel", choices=["rbf", "tilted_rbf", "imq_plus"])
    sp.add_argument("--bandwidth", type=_bandwidth)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--estimator", type=_estimator_arg)
    sp.add_argument("--out", default="-")

    sp = add("eval", cmd_eval, "score a fit on the bundle's held-out interventions")
    sp.add_argument("--fit", required=True)
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--burn-in", type=int)
    sp.add_argument("--thin", type=int)
    sp.add_argument("--out", default="-")

    sp = add("simulate", cmd_simulate, "Euler-Maruyama samples from a model")
    sp.add_argument("--model", required=True, help="model JSON or fit JSON")
    sp.add_argument("--intervention")
    sp.add_argument("--dt", type=float)
    sp.add_argument("--burn-in", type=int)
    sp.add_argument("--thin", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--chains", type=int)
    sp.add_argument("--out", required=True)

    sp = add("skds", cmd_skds, "loss and gradient norm of a model on a data file")
    sp.add_argument("--data", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--intervention")
    sp.add_argument("--kernel", choices=["rbf", "tilted_rbf", "imq_plus"])
    sp.add_argument("--bandwidth", type=_bandwidth)
    sp.add_argument("--estimator", type=_estimator_arg)
    sp.add_argument("--out", default="-")

    sp = add("bench-timing", cmd_bench_timing, "SKDS vs KDS loss+gradient wall-clock")
    sp.add_argument("--kernel", choices=["rbf", "tilted_rbf", "imq_plus"])
    sp.add_argument("--d", type=int, default=20)
    sp.add_argument("--n", type=int, default=1000)
    sp.add_argument("--repeats", type=int, default=50)
    sp.add_argument("--out", default="-")

    sp = add("example-fig1", cmd_example_fig1, "one-dimensional OU loss surface and partials")
    sp.add_argument("--n", type=int, default=5000)
    sp.add_argument("--bandwidth", type=float, default=0.5)
    sp.add_argument("--estimator", type=_estimator_arg, default="u_statistic")
    sp.add_argument("--out", required=True)

    sp = add("sigtest", cmd_sigtest, "paired Wilcoxon margin test on two result arrays")
    sp.add_argument("--ours", required=True)
    sp.add_argument("--baseline", required=True)
    sp.add_argument("--metric", default="w2")
    sp.add_argument("--margin", type=float, default=0.05)
    sp.add_argument("--direction", choices=["ours_better", "baseline_better"], default="ours_better")
    sp.add_argument("--out", default="-")
    return p


def _bandwidth(s):
    if s == "median":
        return s
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError("bandwidth must be a positive number or 'median'") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("bandwidth must be positive")
    return v


def _estimator_arg(s):
    names = {"linear": "linear_pairs", "ustat": "u_statistic"}
    s = names.get(s, s)
    if s not in ("linear_pairs", "u_statistic"):
        raise argparse.ArgumentTypeError("estimator must be linear|ustat|linear_pairs|u_statistic")
    return s


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        if e.code not in (0, None):
            sys.stderr.write(json.dumps({"error": "UsageError", "message": "invalid arguments"}) + "\n")
        return int(e.code or 0)
    try:
        return int(args.func(args) or 0)
    except SkdsError as e:
        sys.stderr.write(json.dumps(e.to_dict(), default=_json_default) + "\n")
        return 2
    except OSError as e:
        sys.stderr.write(json.dumps({"error": "IOError", "message": str(e)}) + "\n")
        return 2
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        sys.stderr.write(json.dumps(ConfigError(f"{type(e).__name__}: {e}").to_dict()) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
