"""Command-line entry point.

Subcommands: gen, train-views, bootstrap, sample, eval, bounds, accept.
Exit codes: 0 ok, 2 config error, 3 numeric failure, 4 acceptance failure.
BDL_DATA_DIR provides the --data-dir default.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .bootstrap import (StageError, load_combined, run_algorithm1,
                        run_from_manifest, save_combined)
from .bounds import BoundInputs, CoveringParams, generalization_bound, \
    prob_event_e1, prob_event_e2, prob_event_e3
from .config import ExperimentConfig, load_config
from .diffusion import sample_reverse
from .errors import ConfigError, DivergenceError, NumericError
from .evalkit import evaluate_denoiser
from .gmm import PosteriorOracle
from .neural.train import train_view_denoiser
from .rng import substream
from .svg import line_plot
from .synthdata import project_dataset, sample_dataset, save_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_ACCEPT = 4


def _data_dir(args) -> Path:
    d = args.data_dir or os.environ.get("BDL_DATA_DIR") or "."
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _out_dir(cfg: ExperimentConfig, args) -> Path:
    out = _data_dir(args) / cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen(args) -> int:
    """Generate and persist S0, the calibration set, and view datasets."""
    cfg = load_config(args.config)
    out = _out_dir(cfg, args)
    s0 = sample_dataset(cfg.spec, cfg.n0, stream=1)
    save_dataset(s0, out / "s0.bdl")
    calib = sample_dataset(cfg.spec, cfg.calib_size, stream=2)
    save_dataset(calib, out / "calib.bdl")
    for i, (op, n_i) in enumerate(zip(cfg.operators, cfg.view_sizes)):
        full = sample_dataset(cfg.spec, n_i, stream=100 + i)
        save_dataset(project_dataset(full, op), out / f"view_data_{i}.bdl")
        (out / f"view_{i}.op.json").write_text(op.to_json())
    cfg.dump(out / "resolved_config.json")
    print(f"wrote {2 + 2 * len(cfg.operators)} artifacts to {out}")
    return EXIT_OK


def cmd_train_views(args) -> int:
    """Train one denoiser per view dataset under out_dir."""
    from .synthdata import load_dataset

    cfg = load_config(args.config)
    out = _out_dir(cfg, args)
    for i, op in enumerate(cfg.operators):
        path = out / f"view_data_{i}.bdl"
        if not path.exists():
            raise ConfigError(f"missing view dataset {path}; run gen first")
        ds = load_dataset(path)
        model, curve = train_view_denoiser(
            ds, cfg.schedule.scaled(op.noise_gain), cfg.view_cfg,
            U=cfg.spec.U, stream=i)
        model.save(out / f"view_{i}.net.bin")
        if curve.losses:
            print(f"view {i}: {len(curve.steps)} steps, "
                  f"final loss {curve.losses[-1]:.4g}")
    cfg.dump(out / "resolved_config.json")
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    """Run the full two-stage pipeline and write a manifest."""
    if args.manifest:
        out = _data_dir(args) / (args.rerun_dir or "rerun")
        _, record = run_from_manifest(args.manifest, out_dir=out,
                                      parallel=args.threads != 1)
        print(f"reran manifest into {out}")
        print(json.dumps(record["hashes"], indent=1, sort_keys=True))
        return EXIT_OK
    cfg = load_config(args.config)
    out = _out_dir(cfg, args)
    _, record = run_algorithm1(
        cfg.spec, cfg.operators, cfg.view_sizes, cfg.n0, cfg.schedule,
        cfg.view_cfg, cfg.residual_cfg, out_dir=out, seed=cfg.seed,
        calib_size=cfg.calib_size,
        calibrate_on_s0=cfg.flags.get("calibrate_on_s0", False),
        n_weight_bins=cfg.flags.get("n_weight_bins", 10),
        n_adapter_bins=cfg.flags.get("n_adapter_bins", 100),
        parallel=args.threads != 1)
    cfg.dump(out / "resolved_config.json")
    print(f"pipeline complete; manifest at {out / 'manifest.json'}")
    return EXIT_OK


def cmd_sample(args) -> int:
    """Draw reverse-process samples from a persisted combined denoiser."""
    cfg = load_config(args.config)
    out = _out_dir(cfg, args)
    if not (out / "combined.json").exists():
        raise ConfigError(f"no combined denoiser under {out}; "
                          "run bootstrap first")
    combined = load_combined(out)
    rng = substream(cfg.seed, 91)
    traj: list = []
    x = sample_reverse(combined, cfg.schedule, steps=args.steps, rng=rng,
                       m=combined.m, n=args.n, method=args.method,
                       trajectory=traj)
    np.save(out / "samples.npy", x)
    if traj:
        rows = np.asarray(traj)
        line_plot({"mean ||x||": (rows[:, 2], rows[:, 3])},
                  out / "sampling_trajectory.svg",
                  title="reverse process", xlabel="sigma",
                  ylabel="mean ||x||", logx=True)
    print(f"wrote {x.shape[0]} samples to {out / 'samples.npy'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    """Evaluate the persisted combined denoiser against the exact oracle."""
    cfg = load_config(args.config)
    out = _out_dir(cfg, args)
    if not (out / "combined.json").exists():
        raise ConfigError(f"no combined denoiser under {out}; "
                          "run bootstrap first")
    combined = load_combined(out)
    oracle = PosteriorOracle(cfg.spec)
    report = evaluate_denoiser(
        combined, oracle, cfg.spec, cfg.schedule, denoiser_id="combined",
        n_mc=cfg.eval_cfg.get("n_mc", 2000),
        n_bins=cfg.eval_cfg.get("bins", 10), seed=cfg.seed,
        score_b=lambda x, t: (combined(x, float(t)) - x) / float(t) ** 2,
        kl_n_mc=cfg.eval_cfg.get("kl_n_mc", 64))
    (out / "eval.json").write_text(report.to_json())
    print(report.to_text())
    if args.csv:
        (out / "eval.csv").write_text(report.to_csv())
    centers = [0.5 * (lo + hi) for lo, hi, *_ in report.R.rows()]
    line_plot({"R_hat": (centers, [r[2] for r in report.R.rows()]),
               "V_hat": (centers, [r[2] for r in report.V.rows()])},
              out / "eval.svg", title="per-sigma error", xlabel="sigma",
              ylabel="squared error", logx=True, logy=True)
    return EXIT_OK


_BOUNDS_CSV_HEADER = ("N,K,m,U,delta_b,delta_v,rho,gamma,epsilon,EV,"
                      "rademacher,p_e1,p_e2,p_e3,p_fail,R_bound\n")


def cmd_bounds(args) -> int:
    """Evaluate the closed-form bounds; CSV columns as in the header row.

    Without a config this emits the worked example row
    (delta_v=1, N=100, K=1, m=U=1 -> p_e1 = exp(-2.5) ~ 0.08208).
    """
    rows = []
    cover = None
    if args.config:
        cfg = load_config(args.config)
        bdoc = dict(cfg.bounds_cfg)
        cdoc = bdoc.pop("cover", None)
        if cdoc:
            cover = CoveringParams(**cdoc)
        base = BoundInputs(**{**{"N": 100, "K": 1, "m": 1, "U": 1.0}, **bdoc})
        sweep_n = [base.N] if not args.sweep_n else \
            [int(n) for n in np.geomspace(10, 10 * base.N, 20)]
        for n in sweep_n:
            rows.append(BoundInputs(**{**base.__dict__, "N": int(n)}))
        out = _out_dir(cfg, args)
    else:
        rows.append(BoundInputs(N=100, K=1, m=1, U=1.0, delta_v=1.0))
        out = _data_dir(args)
    lines = [_BOUNDS_CSV_HEADER]
    for b in rows:
        p1 = prob_event_e1(b)
        p3 = prob_event_e3(b)
        p2 = prob_event_e2(b, cover) if cover else float("nan")
        rb, pf = generalization_bound(b, cover)
        lines.append(f"{b.N},{b.K},{b.m},{b.U},{b.delta_b},{b.delta_v},"
                     f"{b.rho},{b.gamma},{b.epsilon},{b.EV},{b.rademacher},"
                     f"{p1:.6g},{p2:.6g},{p3:.6g},{pf:.6g},{rb:.6g}\n")
    csv_path = out / "bounds.csv"
    csv_path.write_text("".join(lines))
    sys.stdout.write("".join(lines))
    if len(rows) > 1:
        ns = [b.N for b in rows]
        pf = [generalization_bound(b, cover)[1] for b in rows]
        line_plot({"p_fail": (ns, pf)}, out / "bounds.svg",
                  title="failure probability vs N", xlabel="N",
                  ylabel="p_fail", logx=True, logy=True)
    return EXIT_OK


def cmd_accept(args) -> int:
    """Run the acceptance suite; nonzero exit on any failure."""
    import tempfile

    from . import acceptance

    with tempfile.TemporaryDirectory() as tmp:
        ok, results = acceptance.run_all(slow=not args.fast, tmp_dir=tmp)
    if args.json_out:
        Path(args.json_out).write_text(
            json.dumps(results, indent=1, default=str))
    return EXIT_OK if ok else EXIT_ACCEPT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bootdiff",
        description="train diffusion denoisers from partial data views, "
                    "with exact mixture oracles for verification")
    p.add_argument("--data-dir", default=None,
                   help="artifact root (default: $BDL_DATA_DIR or .)")
    p.add_argument("--threads", type=int, default=0,
                   help="worker pool size; 1 forces bit-exact serial mode "
                        "(results are identical either way)")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, doc):
        sp = sub.add_parser(name, help=doc, description=doc)
        sp.set_defaults(fn=fn)
        return sp

    sp = add("gen", cmd_gen, "generate datasets from a config")
    sp.add_argument("--config", required=True)

    sp = add("train-views", cmd_train_views, "train per-view denoisers")
    sp.add_argument("--config", required=True)

    sp = add("bootstrap", cmd_bootstrap,
             "run the full two-stage pipeline (or rerun a manifest)")
    sp.add_argument("--config")
    sp.add_argument("--manifest", help="rerun from an existing manifest")
    sp.add_argument("--rerun-dir", help="output dir for manifest reruns")

    sp = add("sample", cmd_sample, "draw reverse-process samples")
    sp.add_argument("--config", required=True)
    sp.add_argument("--n", type=int, default=16)
    sp.add_argument("--steps", type=int, default=40)
    sp.add_argument("--method", choices=("heun", "euler"), default="heun")

    sp = add("eval", cmd_eval,
             "evaluate the combined denoiser; CSV columns: sigma_lo,"
             "sigma_hi,R_hat,R_stderr,L_hat,L_stderr,V_hat,V_stderr,count")
    sp.add_argument("--config", required=True)
    sp.add_argument("--csv", action="store_true",
                    help="also write per-bin rows to eval.csv")

    sp = add("bounds", cmd_bounds,
             "closed-form bound table; CSV columns: " +
             _BOUNDS_CSV_HEADER.strip())
    sp.add_argument("--config")
    sp.add_argument("--sweep-n", action="store_true",
                    help="sweep N log-spaced and plot p_fail")

    sp = add("accept", cmd_accept, "run the acceptance suite")
    sp.add_argument("--fast", action="store_true",
                    help="skip the three training experiments")
    sp.add_argument("--json-out", help="write detailed results as JSON")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bootstrap" and not (args.config or args.manifest):
            raise ConfigError("bootstrap needs --config or --manifest")
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, DivergenceError, StageError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
