"""Command-line front end.

Exit codes: 0 success, 1 check failure, 2 input/IO error, 3 shape or
validation error.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .cdg import Combine, GaussianPriorConfig, quadrant_masses, run_guidance
from .errors import (
    CapacityError,
    DegenerateInputError,
    InputError,
    OracleError,
    ParameterError,
    ShapeError,
)
from .experiments import run_demo
from .features import FeatureSet, aggregate_global, build_cost_matrix
from .gradients import SUITE, run_gradient_suite
from .losses import AlignmentConfig, BatchFeatures, combine, infonce_symmetric, local_ot_loss
from .ot import Marginals, SinkhornConfig, sinkhorn
from .synth import QUADRANTS, SynthSpec, make_aligned_tokens

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_SHAPE = 0, 1, 2, 3

SINKHORN_DEFAULTS = {"epsilon": 3e-2, "max_iters": 100, "tol": 1e-2}
ALIGN_DEFAULTS = {"lambda_global": 1.0, "lambda_local": 1.0, "temperature": 0.07, **SINKHORN_DEFAULTS}
GUIDE_DEFAULTS = {
    "sigma_frac": 0.25,
    "combine": "product",
    "threshold_frac": 0.5,
    "radiological": False,
    "text": None,
    "attention": None,
    "pred": None,
}
SYNTH_DEFAULTS = {
    "seed": 0,
    "batch": 8,
    "tokens": [6, 6],
    "dim": 16,
    "noise": 0.05,
    "grid": [64, 64],
    "quadrant": None,
    "permute": True,
}

DEFAULTS = {
    "synth": SYNTH_DEFAULTS,
    "sinkhorn": {"cost": None, **SINKHORN_DEFAULTS},
    "align": {"input_dir": None, "img": None, "txt": None, **ALIGN_DEFAULTS},
    "guide": GUIDE_DEFAULTS,
    "demo": {**SYNTH_DEFAULTS, **ALIGN_DEFAULTS, **GUIDE_DEFAULTS, "steps": 500, "step_size": 0.5},
    "gradcheck": {"seed": 0, "seeds": 20, "flip_sign": None},
}
for _unused in ("text", "attention", "pred"):
    DEFAULTS["demo"].pop(_unused)


def _add_common(p):
    p.add_argument("--seed", type=int, help="seed for synthetic data")
    p.add_argument("--out-dir", default="out", help="directory for artifacts (default: out)")
    p.add_argument("--config", help="JSON file of parameter values; explicit flags win")


def _add_sinkhorn(p):
    p.add_argument("--epsilon", type=float, help="entropy regularization (default 3e-2)")
    p.add_argument("--max-iters", type=int, help="iteration cap (default 100)")
    p.add_argument("--tol", type=float, help="L1 marginal residual for early stop (default 1e-2)")


def _add_align(p):
    _add_sinkhorn(p)
    p.add_argument("--lambda-global", type=float)
    p.add_argument("--lambda-local", type=float)
    p.add_argument("--temperature", type=float, help="InfoNCE temperature (default 0.07)")


def _add_prior(p):
    p.add_argument("--sigma-frac", type=float)
    p.add_argument("--combine", choices=[c.value for c in Combine])
    p.add_argument("--threshold-frac", type=float)
    p.add_argument("--radiological", action="store_true", default=None,
                   help="patient-left appears on image-right")


def _add_synth(p):
    p.add_argument("--batch", type=int)
    p.add_argument("--tokens", type=int, nargs=2, metavar=("N", "L"))
    p.add_argument("--dim", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--grid", type=int, nargs=2, metavar=("H", "W"))
    p.add_argument("--quadrant", choices=QUADRANTS)
    p.add_argument("--no-permute", dest="permute", action="store_false", default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="ssalign", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic instance")
    _add_common(p)
    _add_synth(p)

    p = sub.add_parser("sinkhorn", help="entropic OT plan for a cost CSV")
    _add_common(p)
    p.add_argument("--cost", help="cost matrix CSV")
    _add_sinkhorn(p)

    p = sub.add_parser("align", help="global, local and combined alignment losses")
    _add_common(p)
    p.add_argument("--input-dir", help="directory written by `synth`")
    p.add_argument("--img", action="append", help="image token CSV (repeat per pair)")
    p.add_argument("--txt", action="append", help="text token CSV (repeat per pair)")
    _add_align(p)

    p = sub.add_parser("guide", help="directional guidance mask from caption + attention")
    _add_common(p)
    p.add_argument("--text", help="caption text")
    p.add_argument("--attention", help="attention map (.pgm or .csv)")
    p.add_argument("--pred", help="prediction map (.pgm or .csv); defaults to the attention")
    _add_prior(p)

    p = sub.add_parser("demo", help="gradient-descent alignment demo plus guidance")
    _add_common(p)
    _add_synth(p)
    _add_align(p)
    _add_prior(p)
    p.add_argument("--steps", type=int)
    p.add_argument("--step-size", type=float)

    p = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    _add_common(p)
    p.add_argument("--seeds", type=int, help="number of seeds per gradient (default 20)")
    p.add_argument("--flip-sign", choices=sorted(SUITE), help=argparse.SUPPRESS)
    return parser


def resolve_config(command, args):
    cfg = dict(DEFAULTS[command])
    if args.config:
        loaded = io.read_json(args.config)
        if not isinstance(loaded, dict):
            raise InputError(f"{args.config}: config must be a JSON object")
        unknown = sorted(set(loaded) - set(cfg))
        if unknown:
            raise ParameterError(f"{args.config}: unknown keys for `{command}`: {', '.join(unknown)}")
        cfg.update(loaded)
    for key in cfg:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _sinkhorn_cfg(cfg):
    return SinkhornConfig(cfg["epsilon"], cfg["max_iters"], cfg["tol"])


def _align_cfg(cfg):
    return AlignmentConfig(cfg["lambda_global"], cfg["lambda_local"], cfg["temperature"], _sinkhorn_cfg(cfg))


def _prior_cfg(cfg):
    return GaussianPriorConfig(cfg["sigma_frac"], Combine(cfg["combine"]), bool(cfg["radiological"]))


def _synth_spec(cfg):
    return SynthSpec(
        seed=cfg["seed"],
        batch=cfg["batch"],
        tokens_per_side=tuple(cfg["tokens"]),
        dim=cfg["dim"],
        cluster_noise=cfg["noise"],
        grid=tuple(cfg["grid"]),
        quadrant=cfg["quadrant"],
        permute=cfg["permute"],
    )


def _require(cfg, *keys):
    missing = [k for k in keys if not cfg.get(k)]
    if missing:
        raise InputError("missing required input: " + ", ".join("--" + k.replace("_", "-") for k in missing))


def write_guidance(out, result):
    io.write_pgm(out / "a_norm.pgm", result.a_norm)
    io.write_pgm(out / "m_pri.pgm", result.m_pri)
    io.write_pgm(out / "m_guide.pgm", result.m_guide)
    io.write_pgm(out / "p_refined.pgm", result.p_refined)
    return {
        "directions": result.cue.sorted_names(),
        "matched_spans": [list(s) for s in result.cue.matched_spans],
        "bbox": result.bbox.as_list(),
        "L_guide": result.loss,
        "m_guide_quadrant_mass": quadrant_masses(result.m_guide),
    }


def cmd_synth(cfg, out):
    inst = make_aligned_tokens(_synth_spec(cfg))
    for b, (img, txt) in enumerate(inst.token_pairs):
        io.write_features_csv(out / f"img_{b:03d}.csv", img.tokens)
        io.write_features_csv(out / f"txt_{b:03d}.csv", txt.tokens)
    io.write_pgm(out / "attention.pgm", inst.attention / inst.attention.max())
    (out / "caption.txt").write_text(inst.caption + "\n")
    io.write_json(out / "truth.json", {
        "config": cfg,
        "truth_matching": [m.tolist() for m in inst.truth_matching],
        "truth_quadrant": inst.truth_quadrant,
        "caption": inst.caption,
    })
    return EXIT_OK


def cmd_sinkhorn(cfg, out):
    _require(cfg, "cost")
    cost, _ = io.read_matrix_csv(cfg["cost"])
    result = sinkhorn(cost, Marginals.uniform(*cost.shape), _sinkhorn_cfg(cfg))
    io.write_matrix_csv(out / "plan.csv", result.plan)
    io.write_json(out / "report.json", {
        "config": cfg,
        "transport_cost": result.cost_against(cost),
        "iterations_used": result.iterations_used,
        "marginal_residual": result.marginal_residual,
        "row_residual": result.row_residual,
        "col_residual": result.col_residual,
        "converged": result.converged,
    })
    return EXIT_OK


def _load_pairs(cfg):
    if cfg.get("input_dir"):
        root = Path(cfg["input_dir"])
        imgs = sorted(root.glob("img_*.csv"))
        txts = sorted(root.glob("txt_*.csv"))
        if not imgs:
            raise InputError(f"{root}: no img_*.csv files")
    else:
        _require(cfg, "img", "txt")
        imgs = [Path(p) for p in cfg["img"]]
        txts = [Path(p) for p in cfg["txt"]]
    if len(imgs) != len(txts):
        raise ShapeError(f"{len(imgs)} image files but {len(txts)} text files")
    return [
        (FeatureSet.image(io.read_features_csv(i)), FeatureSet.text(io.read_features_csv(t)))
        for i, t in zip(imgs, txts)
    ]


def cmd_align(cfg, out):
    pairs = _load_pairs(cfg)
    acfg = _align_cfg(cfg)
    batch = BatchFeatures(
        np.stack([aggregate_global(i) for i, _ in pairs]),
        np.stack([aggregate_global(t) for _, t in pairs]),
    )
    l_global = infonce_symmetric(batch, acfg.temperature)
    per_pair = [
        local_ot_loss(build_cost_matrix(i, t), Marginals.uniform(i.count, t.count), acfg.sinkhorn)[0]
        for i, t in pairs
    ]
    l_local = float(np.mean(per_pair))
    io.write_json(out / "report.json", {
        "config": cfg,
        "L_global": l_global,
        "L_local": l_local,
        "L_align": combine(acfg.lambda_global, l_global, acfg.lambda_local, l_local),
        "per_pair_costs": per_pair,
    })
    return EXIT_OK


def cmd_guide(cfg, out):
    _require(cfg, "text", "attention")
    attention = io.read_grid(cfg["attention"])
    pred = io.read_grid(cfg["pred"]) if cfg.get("pred") else None
    result = run_guidance(cfg["text"], attention, pred, _prior_cfg(cfg), cfg["threshold_frac"])
    report = write_guidance(out, result)
    io.write_json(out / "report.json", {"config": cfg, **report})
    return EXIT_OK


def cmd_demo(cfg, out):
    if cfg["steps"] < 0:
        raise ParameterError("steps must be >= 0")
    result = run_demo(
        _synth_spec(cfg), cfg["steps"], cfg["step_size"], _align_cfg(cfg), _prior_cfg(cfg), cfg["threshold_frac"]
    )
    lines = ["step,l_global,l_local,l_align"]
    lines += [f"{r.step},{r.l_global!r},{r.l_local!r},{r.l_align!r}" for r in result.history]
    (out / "loss.csv").write_text("\n".join(lines) + "\n")
    io.write_pgm(out / "attention.pgm", result.instance.attention / result.instance.attention.max())
    guidance = write_guidance(out, result.guidance)
    first, last = result.history[0], result.history[-1]
    io.write_json(out / "report.json", {
        "config": cfg,
        "initial": {"L_global": first.l_global, "L_local": first.l_local, "L_align": first.l_align},
        "final": {"L_global": last.l_global, "L_local": last.l_local, "L_align": last.l_align},
        "initial_retrieval_top1": result.initial_retrieval,
        "final_retrieval_top1": result.final_retrieval,
        "plan_matching_accuracy": result.plan_matching_accuracy,
        "caption": result.instance.caption,
        "truth_quadrant": result.instance.truth_quadrant,
        "guidance": guidance,
    })
    return EXIT_OK


def cmd_gradcheck(cfg, out):
    seeds = range(cfg["seed"], cfg["seed"] + cfg["seeds"])
    results = run_gradient_suite(seeds, cfg["flip_sign"])
    passed = all(r["passed"] for r in results.values())
    io.write_json(out / "report.json", {"config": cfg, "passed": passed, "losses": results})
    for name, r in results.items():
        status = "PASS" if r["passed"] else "FAIL"
        print(f"{status} {name}: max_rel_err={r['max_rel_err']:.3e} tol={r['tol']:.0e}")
    return EXIT_OK if passed else EXIT_CHECK


COMMANDS = {
    "synth": cmd_synth,
    "sinkhorn": cmd_sinkhorn,
    "align": cmd_align,
    "guide": cmd_guide,
    "demo": cmd_demo,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except (InputError, OracleError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ShapeError, DegenerateInputError, ParameterError, CapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE


if __name__ == "__main__":
    sys.exit(main())
