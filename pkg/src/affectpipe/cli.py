"""Command-line surface tying the pipeline together.

Every subcommand takes --seed, --config, and --output; flags given on the
command line override values from the JSON config file, which in turn
override built-in defaults. Reports are written via dataio.render_report,
so a fixed seed reproduces output byte for byte.
"""

import argparse
import json
import sys
from pathlib import Path
from types import SimpleNamespace

from . import classifiers as cl
from . import dataio
from . import evaluation as ev
from . import graph as gr
from . import synth as sy
from . import temporal as tp
from . import training as tr


def _add_common(sub):
    sub.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    sub.add_argument("--config", type=Path, default=None,
                     help="JSON file of option values; flags override it")
    sub.add_argument("--output", type=Path, default=None,
                     help="report path (default stdout)")
    sub.add_argument("--format", choices=("json", "text"), default=None,
                     help="report format (default json)")


def _resolve(args, defaults: dict) -> SimpleNamespace:
    """Merge CLI flags over config-file values over defaults."""
    merged = dict(defaults)
    merged.setdefault("seed", 0)
    merged.setdefault("format", "json")
    merged.setdefault("output", None)
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as err:
            raise ValueError(f"cannot read config: {err}") from None
        except json.JSONDecodeError as err:
            raise ValueError(f"config is not valid JSON: {err}") from None
        if not isinstance(loaded, dict):
            raise ValueError("config must be a JSON object")
        unknown = sorted(set(loaded) - set(merged))
        if unknown:
            raise ValueError(f"unknown config keys {unknown}; "
                             f"expected a subset of {sorted(merged)}")
        merged.update(loaded)
    for key in merged:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return SimpleNamespace(**merged)


def cmd_analyze_graph(opts) -> dict:
    kinds = gr.CU_KINDS if opts.cu == "all" else (opts.cu,)
    hw = (opts.input_hw, opts.input_hw)
    variants = {}
    for kind in kinds:
        g = gr.build_graph(kind, mode=opts.mode, input_hw=hw)
        variants[kind] = {
            "params": gr.count_params(g),
            "flops": gr.count_flops(g),
            "layers": gr.layer_table(g),
        }
    return {"command": "analyze-graph", "mode": opts.mode,
            "input_hw": opts.input_hw, "variants": variants}


def cmd_train_toy(opts) -> dict:
    config = tr.TrainConfig(epochs=opts.epochs, batch_size=opts.batch_size,
                            seed=opts.seed)
    out = tr.train_toy(config, n=opts.samples, size=opts.image_size)
    losses = out["losses"]
    return {
        "command": "train-toy",
        "seed": opts.seed,
        "epochs": opts.epochs,
        "losses": losses,
        "monotone": all(b <= a for a, b in zip(losses, losses[1:])),
        "learning_rates": [tr.learning_rate(e, config) for e in range(opts.epochs)],
    }


def cmd_extract_features(opts) -> dict:
    if opts.manifest is None:
        raise ValueError("extract-features requires --manifest")
    cohort = dataio.load_cohort(opts.manifest, tau=opts.tau)
    return {
        "command": "extract-features",
        "tau": opts.tau,
        "feature_names": tp.feature_names(),
        "participants": [
            {"id": r.participant_id, "label": r.diagnosis,
             "features": list(r.features)}
            for r in cohort.records
        ],
    }


def _classifier_spec(opts) -> cl.ClassifierSpec:
    return cl.ClassifierSpec(kind=opts.classifier, seed=opts.seed)


def cmd_loocv(opts) -> dict:
    if opts.manifest is None:
        raise ValueError("loocv requires --manifest")
    cohort = dataio.load_cohort(opts.manifest, tau=opts.tau)
    attrs = tuple(a.strip() for a in opts.attributes.split(",") if a.strip())
    mask = ev.attribute_mask(attrs)
    result = ev.loocv(cohort, _classifier_spec(opts), mask=mask)
    metrics = ev.confusion_metrics(result.predictions, result.truths)
    return {
        "command": "loocv",
        "classifier": opts.classifier,
        "seed": opts.seed,
        "attributes": list(attrs),
        "folds": [
            {"id": pid, "truth": t, "prediction": p, "probability": prob}
            for pid, t, p, prob in zip(result.ids, result.truths,
                                       result.predictions, result.probabilities)
        ],
        "metrics": metrics,
        "warnings": list(result.warnings),
    }


def cmd_ablate(opts) -> dict:
    if opts.manifest is None:
        raise ValueError("ablate requires --manifest")
    cohort = dataio.load_cohort(opts.manifest, tau=opts.tau)
    rows = ev.ablation_study(cohort, _classifier_spec(opts))
    return {"command": "ablate", "classifier": opts.classifier,
            "seed": opts.seed, "rows": list(rows)}


def cmd_ttest(opts) -> dict:
    if opts.manifest is None:
        raise ValueError("ttest requires --manifest")
    cohort = dataio.load_cohort(opts.manifest, tau=opts.tau)
    result = ev.attribute_significance(cohort)
    return {"command": "ttest",
            "attributes": result["attributes"],
            "features": result["features"]}


def cmd_synth(opts) -> dict:
    if opts.out_dir is None:
        raise ValueError("synth requires --out-dir")
    spec = sy.SynthSpec(
        participants_per_group=opts.participants,
        frames_per_participant=opts.frames,
        au_effect=opts.au_effect,
        expr_effect=opts.expr_effect,
        arousal_effect=opts.arousal_effect,
        valence_effect=opts.valence_effect,
        noise=opts.noise,
        subject_scale=opts.subject_scale,
        seed=opts.seed,
    )
    manifest = sy.synth_cohort(spec, opts.out_dir)
    return {"command": "synth", "manifest": str(manifest), "spec": spec}


_COHORT_DEFAULTS = {"manifest": None, "tau": tp.DEFAULT_TAU}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="affectpipe",
        description="Facial-attribute pipeline: architecture analysis, toy "
                    "training, temporal features, LOOCV, statistics, and "
                    "synthetic cohorts.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("analyze-graph", help="parameter and FLOP budgets per CU variant")
    p.add_argument("--cu", choices=gr.CU_KINDS + ("all",), default=None)
    p.add_argument("--mode", choices=("multi",) + gr.TASKS, default=None)
    p.add_argument("--input-hw", type=int, default=None, dest="input_hw")
    _add_common(p)
    p.set_defaults(handler=cmd_analyze_graph,
                   defaults={"cu": "all", "mode": "multi", "input_hw": 224})

    p = subs.add_parser("train-toy", help="train the toy multitask model")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--image-size", type=int, default=None, dest="image_size")
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    _add_common(p)
    p.set_defaults(handler=cmd_train_toy,
                   defaults={"epochs": 30, "samples": 200, "image_size": 16,
                             "batch_size": 25})

    p = subs.add_parser("extract-features", help="temporal features from a cohort manifest")
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--tau", type=float, default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_extract_features, defaults=dict(_COHORT_DEFAULTS))

    p = subs.add_parser("loocv", help="leave-one-out cross-validation over a cohort")
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--classifier", choices=cl.KINDS, default=None)
    p.add_argument("--attributes", default=None,
                   help="comma-separated subset of au,expr,arousal,valence")
    _add_common(p)
    p.set_defaults(handler=cmd_loocv,
                   defaults=dict(_COHORT_DEFAULTS, classifier="logistic",
                                 attributes="au,expr,arousal,valence"))

    p = subs.add_parser("ablate", help="attribute-subset ablation table")
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--classifier", choices=cl.KINDS, default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_ablate,
                   defaults=dict(_COHORT_DEFAULTS, classifier="logistic"))

    p = subs.add_parser("ttest", help="per-attribute group significance")
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--tau", type=float, default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_ttest, defaults=dict(_COHORT_DEFAULTS))

    p = subs.add_parser("synth", help="generate a synthetic cohort on disk")
    p.add_argument("--out-dir", type=Path, default=None, dest="out_dir")
    p.add_argument("--participants", type=int, default=None)
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--au-effect", type=float, default=None, dest="au_effect")
    p.add_argument("--expr-effect", type=float, default=None, dest="expr_effect")
    p.add_argument("--arousal-effect", type=float, default=None, dest="arousal_effect")
    p.add_argument("--valence-effect", type=float, default=None, dest="valence_effect")
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--subject-scale", type=float, default=None, dest="subject_scale")
    _add_common(p)
    p.set_defaults(handler=cmd_synth,
                   defaults={"out_dir": None, "participants": 10, "frames": 200,
                             "au_effect": 0.0, "expr_effect": 0.0,
                             "arousal_effect": 0.0, "valence_effect": 0.0,
                             "noise": 0.5, "subject_scale": 0.3})
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        opts = _resolve(args, args.defaults)
        report = args.handler(opts)
        rendered = dataio.render_report(report, fmt=opts.format)
    except (ValueError, ArithmeticError, OSError) as err:
        payload = {"error": type(err).__name__, "message": str(err)}
        if isinstance(err, dataio.ParseError):
            payload.update({"path": err.path, "row": err.row, "column": err.column})
        sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
        return 1
    if opts.output is not None:
        Path(opts.output).write_text(rendered, encoding="utf-8")
    else:
        sys.stdout.write(rendered)
    return 0


if __name__ == "__main__":
    sys.exit(main())
