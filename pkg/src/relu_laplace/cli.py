"""``uq``: train, fit, evaluate and verify Laplace-approximated ReLU classifiers.

Exit codes: 0 ok, 2 configuration error, 3 training divergence, 4 linear-algebra
failure, 5 a theorem check failed.
"""
import argparse
import json
import math
import sys

import numpy as np

from .config import RunConfig, load_splits
from .errors import (
    ConfigError,
    Diverged,
    DimensionTooLarge,
    LaplaceError,
    LinAlgFailure,
    NonPlanarInput,
    ParseError,
    RankDeficient,
    RegionBoundary,
    Unstable,
)
from .evaluation import make_noise_ood, ood_report
from .laplace import (
    FullAllLayers,
    LastLayerFull,
    check_spd,
    factor_spectra,
    fit_posterior,
    load_posterior,
    save_posterior,
)
from .network import Mlp, dumps_exact, forward
from .plots import boundary_fields, confidence_grid, heatmap_svg
from .predictive import PredictiveConfig, predict, predict_temperature
from .theory import (
    check_ray_all_layer,
    check_ray_last_layer,
    decision_mismatches,
    random_rays,
    softened_z,
    verify_sigma0_monotonicity,
)
from .train import fit_temperature, train_map
from .tune import optimize_prior_variance, tuning_noise

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_LINALG, EXIT_THEOREM = 0, 2, 3, 4, 5
VARIANTS = ("llla", "llla-kron", "dla", "kfla", "full")


def _num(v):
    return "" if v is None else format(float(v), ".17g")


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(c) for c in row) for row in rows]
    _write(path, "\n".join(lines) + "\n")


def _log(msg):
    print(msg, file=sys.stderr)


def _need(args, name):
    if getattr(args, name) is None:
        raise ConfigError(f"--{name} is required for '{args.command}'")
    return getattr(args, name)


def _load_model(args):
    try:
        return Mlp.load(_need(args, "model"))
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load model: {exc}") from None


def _load_post(args, required=True):
    if args.posterior is None and not required:
        return None
    try:
        return load_posterior(_need(args, "posterior"))
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load posterior: {exc}") from None


def _pred_cfg(cfg, post):
    pc = cfg.predictive_config()
    binary_closed_form = isinstance(post, (LastLayerFull, FullAllLayers)) and getattr(post, "output_dim", 1) == 1
    if pc.mode == "probit" and post is not None and not binary_closed_form:
        return PredictiveConfig(mode="mc", n_samples=pc.n_samples, seed=pc.seed)
    return pc


# ---------------------------------------------------------------------------
# commands


def cmd_train(cfg, args):
    splits = load_splits(cfg)
    train = splits.train
    sizes = cfg.network_sizes(train.dim, train.k)
    net = Mlp.init(sizes, bias=cfg["network"]["bias"], seed=cfg.seed)
    history = []
    net = train_map(net, train, cfg.train_config(), history)
    out = cfg.out_dir
    net.save(out / "model.json")
    _write_csv(out / "train_log.csv", ["epoch", "loss", "accuracy"],
               [(e, _num(l), _num(a)) for e, l, a in history])
    print(f"trained {sizes}: final loss {history[-1][1]:.6f}, accuracy {history[-1][2]:.4f}")
    return EXIT_OK


def cmd_laplace(cfg, args):
    net = _load_model(args)
    splits = load_splits(cfg)
    variant = args.variant or "llla"
    post = fit_posterior(net, splits.train, variant, cfg.laplace_config())
    check_spd(post)
    save_posterior(post, cfg.out_dir / "posterior.json")
    for name, (lo, hi) in factor_spectra(post).items():
        print(f"{name}: lambda_min={lo:.6g} lambda_max={hi:.6g}")
    return EXIT_OK


def cmd_grid(cfg, args):
    net = _load_model(args)
    post = _load_post(args, required=False)
    if net.input_dim != 2:
        raise NonPlanarInput(f"grid needs 2-D inputs, the model takes {net.input_dim}")
    splits = load_splits(cfg)
    g = cfg["grid"]
    k = max(2, net.output_dim)
    pc = _pred_cfg(cfg, post)
    for tag, radius in (("grid", g["radius"]), ("grid_zoom", g["radius"] * g["zoom"])):
        t, P, out = confidence_grid(net, post, radius, g["resolution"], pc)
        _write_csv(cfg.out_dir / f"{tag}.csv", ["x", "y", "confidence"],
                   [(_num(x), _num(y), _num(c)) for (x, y), c in zip(P, out.confidence)])
        svg = heatmap_svg(t, out.confidence, boundary_fields(out.probs), k,
                          splits.train.inputs, splits.train.labels)
        _write(cfg.out_dir / f"{tag}.svg", svg)
        print(f"{tag}: radius {radius:g}, mean confidence {out.confidence.mean():.4f}")
    return EXIT_OK


def cmd_ood(cfg, args):
    net = _load_model(args)
    post = _load_post(args, required=False)
    splits = load_splits(cfg)
    o = cfg["ood"]
    noise = make_noise_ood(o["n"], splits.test.dim, o["delta"], cfg.seed)
    out_name = f"noise_delta_{o['delta']:g}"
    methods = []
    for b in o["baselines"]:
        if b == "map":
            methods.append(("map", lambda X: predict(net, None, X)))
        elif b == "temperature":
            T = fit_temperature(forward(net, splits.val.inputs), splits.val.labels)
            methods.append(("temperature", lambda X, T=T: predict_temperature(net, T, X)))
    if post is not None:
        pc = _pred_cfg(cfg, post)
        methods.append((post.variant, lambda X: predict(net, post, X, pc)))
    rows = []
    for name, fn in methods:
        r = ood_report(fn(splits.test.inputs), fn(noise), splits.test.labels)
        rows.append((splits.name, out_name, name, _num(r.mmc_in), _num(r.mmc_out), _num(r.aur), _num(r.ece), _num(r.brier)))
        print(f"{name}: MMC in {r.mmc_in:.1f} out {r.mmc_out:.1f}, AUR {r.aur:.1f}")
    _write_csv(cfg.out_dir / "ood.csv",
               ["dataset_in", "dataset_out", "method", "mmc_in", "mmc_out", "aur", "ece", "brier"], rows)
    return EXIT_OK


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else str(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def cmd_verify(cfg, args):
    net = _load_model(args)
    post = _load_post(args)
    check_spd(post)
    if net.output_dim != 1 or not isinstance(post, (LastLayerFull, FullAllLayers)):
        raise ConfigError("verify needs a binary network with an 'llla' or 'full' posterior")
    splits = load_splits(cfg)
    v = cfg["verify"]
    grid = cfg.delta_grid()
    report = {"variant": post.variant, "has_bias": net.has_bias, "rays": [], "prior_variance": []}
    failures = []

    mismatches = decision_mismatches(net, post, splits.test.inputs)
    report["decision_invariance"] = {"n_points": len(splits.test), "mismatches": mismatches}
    if mismatches:
        failures.append(f"decision invariance: {mismatches} mismatches")

    if net.has_bias:
        _log("warning: network has biases; monotonicity in delta is not checked")
    check = check_ray_last_layer if isinstance(post, LastLayerFull) else check_ray_all_layer
    for i, x in enumerate(random_rays(v["n_rays"], net.input_dim, cfg.seed)):
        try:
            r = check(net, post, x, grid)
        except (Unstable, RegionBoundary, RankDeficient) as exc:
            report["rays"].append({"ray": i, "skipped": f"{type(exc).__name__}: {exc}"})
            continue
        report["rays"].append({"ray": i, **r.to_dict()})
        if not r.satisfied:
            failures.append(f"ray {i}: limit/bound check failed")

    for i, x in enumerate(splits.test.inputs[: v["n_points"]]):
        r = verify_sigma0_monotonicity(net, post, x, v["sigma0_grid"])
        report["prior_variance"].append({
            "point": i, "monotone_ok": r.monotone_ok, "small_prior_ok": r.small_prior_ok,
            "upper_limit_ok": r.upper_limit_ok, "eigen_limit_ok": r.eigen_limit_ok,
            "large_prior_confidence": r.large_prior_confidence, "upper_limit": r.upper_limit,
            "eigen_limit": r.eigen_limit, "confidences": r.confidences,
        })
        if not r.satisfied:
            failures.append(f"point {i}: prior-variance check failed")

    report["failures"] = failures
    report["satisfied"] = not failures
    _write(cfg.out_dir / "verify.json", dumps_exact(_clean(report)) + "\n")
    if failures:
        for f in failures:
            _log(f"FAILED {f}")
        return EXIT_THEOREM
    print(f"all checks passed ({len(report['rays'])} rays, {len(report['prior_variance'])} points)")
    return EXIT_OK


def cmd_scan(cfg, args):
    net = _load_model(args)
    post = _load_post(args, required=False)
    splits = load_splits(cfg)
    grid = cfg.delta_grid()
    X = splits.test.inputs[: cfg["scan"]["n_points"]]
    closed_form = post is None or isinstance(post, (LastLayerFull, FullAllLayers))
    if net.output_dim != 1:
        closed_form = False
    pc = _pred_cfg(cfg, post)
    Z = np.full((X.shape[0], grid.size), np.nan)
    C = np.empty((X.shape[0], grid.size))
    for i, x in enumerate(X):
        pts = grid[:, None] * x[None, :]
        C[i] = predict(net, post, pts, pc).confidence
        if closed_form:
            Z[i] = np.abs(softened_z(net, post, pts))
    rows = []
    for i in range(X.shape[0]):
        rows += [(i, _num(d), _num(z) if closed_form else "", _num(c)) for d, z, c in zip(grid, Z[i], C[i])]
    for stat, fn in (("mean", np.mean), ("std", np.std)):
        zs, cs = fn(Z, axis=0), fn(C, axis=0)
        rows += [(stat, _num(d), _num(z) if closed_form else "", _num(c)) for d, z, c in zip(grid, zs, cs)]
    _write_csv(cfg.out_dir / "scan.csv", ["point", "delta", "abs_z", "confidence"], rows)
    print(f"scanned {X.shape[0]} points over {grid.size} deltas; final mean confidence {C[:, -1].mean():.4f}")
    return EXIT_OK


def cmd_tune(cfg, args):
    net = _load_model(args)
    post = _load_post(args)
    splits = load_splits(cfg)
    tc = cfg.tune_config()
    ood = tuning_noise(splits.train.inputs, len(splits.val), cfg.seed)
    s2, table = optimize_prior_variance(net, post, splits.val, ood, tc, _pred_cfg(cfg, post))
    _write_csv(cfg.out_dir / "tune.csv", ["sigma0_sq", "objective"], [(_num(a), _num(b)) for a, b in table])
    save_posterior(post.with_prior(s2), cfg.out_dir / "posterior_tuned.json")
    print(f"lambda={tc.lambda_tradeoff:g}: selected sigma0_sq={s2:.6g}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "laplace": cmd_laplace,
    "grid": cmd_grid,
    "ood": cmd_ood,
    "verify": cmd_verify,
    "scan": cmd_scan,
    "tune": cmd_tune,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser():
    p = _Parser(prog="uq", description="Laplace approximations for ReLU classifiers.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True)
    p.add_argument("--model")
    p.add_argument("--posterior")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        cfg = RunConfig.load(args.config, seed=args.seed, out=args.out)
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ParseError, NonPlanarInput, DimensionTooLarge) as exc:
        _log(f"error: {exc}")
        return EXIT_CONFIG
    except Diverged as exc:
        _log(f"error: training diverged: {exc}")
        return EXIT_DIVERGED
    except LinAlgFailure as exc:
        _log(f"error: linear algebra failure: {type(exc).__name__}: {exc}")
        return EXIT_LINALG
    except (LaplaceError, ValueError, OSError) as exc:
        _log(f"error: {type(exc).__name__}: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
