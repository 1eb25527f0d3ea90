"""Command-line entry point.

Subcommands cover the pipeline stages (simulate, loom, annotate, fit,
validate, table1, surprise, respond, abc) plus `pipeline`, which chains
them over a directory of scenario specs. Every command writes plain
CSV/JSON artifacts plus a run manifest, takes all randomness from
--seed, and never mutates its inputs, so identical invocations produce
byte-identical outputs.

Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .abc_fit import AbcConfig, rejection_abc
from .accumulator import AccumulatorParams, integrate
from .annotate import AnnotatorConfig, annotate, load_annotation, \
    save_annotation
from .belief import BeliefPrior, PriorKind, load_mixture_sequence, \
    load_surprise, save_surprise, surprise_series
from .errors import DataError, ConflictRtError
from .looming import load_looming, looming_from_trace, save_looming
from .response import fit_ols, load_model, save_model, validate_table1
from .scenarios import load_scenario_spec
from .studies import benchmark_meta, benchmark_studies, published_model, \
    recompute_rut
from .trace import ScenarioKind, load_trace, save_trace

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_json(path: Path, obj):
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _config_hash(config: dict | None) -> str:
    canonical = json.dumps(config or {}, sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _write_manifest(out_dir: Path, command: str, inputs, outputs,
                    seed: int | None, config: dict | None):
    manifest = {
        "command": command,
        "inputs": [str(p) for p in inputs],
        "outputs": sorted(str(Path(p).relative_to(out_dir)) for p in outputs),
        "seed": seed,
        "config_hash": _config_hash(config),
        "version": __version__,
    }
    _write_json(out_dir / f"{command}_manifest.json", manifest)


def _load_config(args) -> dict:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            return json.load(fh)
    return {}


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- stages

def _simulate_one(spec_path: Path, out_dir: Path, dt_override):
    loaded = load_scenario_spec(spec_path)
    if dt_override:
        loaded = replace(loaded, spec=replace(loaded.spec, dt=dt_override))
    trace = loaded.generate()
    trace_path = out_dir / f"{loaded.name}_trace.csv"
    save_trace(trace, trace_path)
    return trace, trace_path


def cmd_simulate(args):
    out_dir = _out_dir(args)
    _, trace_path = _simulate_one(Path(args.spec), out_dir, args.dt)
    outputs = [trace_path, trace_path.with_suffix(".json")]
    _write_manifest(out_dir, "simulate", [args.spec], outputs, args.seed,
                    {"dt": args.dt})
    print(f"wrote {trace_path}")
    return EXIT_OK


def cmd_loom(args):
    out_dir = _out_dir(args)
    trace = load_trace(args.trace)
    sig = looming_from_trace(trace, smoothing_window=args.window)
    out = out_dir / f"{Path(args.trace).stem}_looming.csv"
    save_looming(sig, out)
    _write_manifest(out_dir, "loom", [args.trace], [out], args.seed,
                    {"window": args.window})
    print(f"wrote {out}")
    return EXIT_OK


def _annotator_config(config: dict) -> AnnotatorConfig:
    return AnnotatorConfig(**config) if config else AnnotatorConfig()


def cmd_annotate(args):
    out_dir = _out_dir(args)
    config = _load_config(args)
    trace = load_trace(args.trace)
    sig = load_looming(args.looming) if args.looming \
        else looming_from_trace(trace)
    ann = annotate(trace, sig, _annotator_config(config), em=args.em)
    out = out_dir / f"{Path(args.trace).stem.removesuffix('_trace')}_annotation.json"
    save_annotation(ann, out)
    inputs = [args.trace] + ([args.looming] if args.looming else [])
    _write_manifest(out_dir, "annotate", inputs, [out], args.seed, config)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_fit(args):
    out_dir = _out_dir(args)
    paths = sorted(Path(args.annotations).glob("*_annotation.json"))
    points = []
    for p in paths:
        ann = load_annotation(p)
        if ann.rsp_t is not None:
            points.append((ann.rut, ann.rsp_t))
    if len(points) < 2:
        raise DataError(f"{args.annotations}: need >= 2 annotations with "
                        f"rsp_t, found {len(points)}")
    model = fit_ols(points)
    out = out_dir / "model.json"
    save_model(model, out)
    _write_manifest(out_dir, "fit", paths, [out], args.seed, None)
    print(f"fitted k={model.k:.4f} m={model.m:.4f} on n={model.n}")
    return EXIT_OK


def cmd_validate(args):
    out_dir = _out_dir(args)
    model = load_model(args.model) if args.model else published_model()
    report = validate_table1(model, [s.validation_row()
                                     for s in benchmark_studies()])
    payload = report.as_dict()
    payload["benchmark"] = benchmark_meta()
    out = out_dir / "validation.json"
    _write_json(out, payload)
    _write_manifest(out_dir, "validate",
                    [args.model] if args.model else [], [out], args.seed,
                    None)
    print(f"R^2 vs observed study means: {report.r_squared:.4f} "
          f"(max |err| vs reference predictions {report.max_abs_err:.3f} s)")
    return EXIT_OK


def cmd_table1(args):
    meta = benchmark_meta()
    model = published_model()
    rows = []
    print(f"{'study':14s} {'RUT(ref)':>8s} {'RUT(sim)':>8s} {'obs':>6s} "
          f"{'pred':>6s} {'canonical':>9s}")
    for study in benchmark_studies():
        rut_sim = recompute_rut(study, dt=args.dt)
        pred = model.m + model.k * study.rut
        rows.append({
            "study_id": study.study_id, "rut_reference": study.rut,
            "rut_simulated": rut_sim,
            "observed_mean_rsp_t": study.observed_mean_rsp_t,
            "table_predicted_rsp_t": study.predicted_mean_rsp_t,
            "model_predicted_rsp_t": pred,
            "canonical_rsp_t": meta["canonical_response_time"],
        })
        print(f"{study.study_id:14s} {study.rut:8.2f} {rut_sim:8.2f} "
              f"{study.observed_mean_rsp_t:6.2f} {pred:6.2f} "
              f"{meta['canonical_response_time']:9.2f}")
    report = validate_table1(model, [s.validation_row()
                                     for s in benchmark_studies()])
    print(f"R^2 vs observed means: {report.r_squared:.4f} "
          f"(reference analysis reports "
          f"{meta['reference_fit']['reported_r_squared']}; the gap comes "
          f"from rounding, see benchmark notes)")
    if args.out:
        out_dir = _out_dir(args)
        out = out_dir / "table1_report.json"
        _write_json(out, {"rows": rows, "r_squared": report.r_squared,
                          "benchmark": meta})
        _write_manifest(out_dir, "table1", [], [out], args.seed,
                        {"dt": args.dt})
        print(f"wrote {out}")
    return EXIT_OK


def _belief_prior(config: dict) -> tuple[BeliefPrior, str]:
    kind = PriorKind(config.get("model_kind", "ConstantVelocityLateral"))
    horizon = config.get("horizon", 1.0)
    observable = config.get("observable")
    if kind is PriorKind.CUSTOM:
        mixtures = load_mixture_sequence(config["mixture_file"])
        prior = BeliefPrior.custom(mixtures, horizon=horizon)
        observable = observable or "lateral_y"
    elif kind is PriorKind.CONSTANT_LOOMING_REAR_END:
        prior = BeliefPrior.rear_end_looming(
            horizon=horizon, sigma0=config.get("sigma0", 0.005),
            sigma1=config.get("sigma1"))
        observable = observable or "theta_dot"
    else:
        prior = BeliefPrior.lateral(horizon=horizon,
                                    sigma0=config.get("sigma0", 0.1),
                                    sigma1=config.get("sigma1"))
        observable = observable or "lateral_y"
    return prior, observable


def cmd_surprise(args):
    out_dir = _out_dir(args)
    config = _load_config(args)
    trace = load_trace(args.trace)
    prior, observable = _belief_prior(config)
    series = surprise_series(prior, trace, observable)
    out = out_dir / f"{Path(args.trace).stem.removesuffix('_trace')}_surprise.csv"
    save_surprise(series, out)
    _write_manifest(out_dir, "surprise", [args.trace], [out], args.seed,
                    config)
    print(f"wrote {out}")
    return EXIT_OK


def _accumulator_params(config: dict) -> AccumulatorParams:
    fields = {k: config[k] for k in
              ("gain", "leak", "noise_sigma", "threshold", "a0", "dt",
               "clamp_nonnegative") if k in config}
    return AccumulatorParams(**fields)


def cmd_respond(args):
    out_dir = _out_dir(args)
    with open(args.params) as fh:
        config = json.load(fh)
    series = load_surprise(args.surprise)
    params = _accumulator_params(config)
    result = integrate(params, series, seed=args.seed,
                       baseline=config.get("baseline"))
    stem = Path(args.surprise).stem.removesuffix("_surprise")
    out = out_dir / f"{stem}_onset.json"
    _write_json(out, {"onset_t": result.onset_t, "seed": result.seed})
    outputs = [out]
    if args.trajectory:
        traj_path = out_dir / f"{stem}_activation.csv"
        lines = ["t,A"]
        lines += [f"{float(ti)!r},{float(ai)!r}"
                  for ti, ai in zip(result.t, result.trajectory)]
        _atomic_write(traj_path, "\n".join(lines) + "\n")
        outputs.append(traj_path)
    _write_manifest(out_dir, "respond", [args.surprise, args.params],
                    outputs, args.seed, config)
    print(f"onset: {result.onset_t}")
    return EXIT_OK


def cmd_abc(args):
    if not args.config:
        raise _UsageError("abc requires --config with the AbcConfig JSON")
    out_dir = _out_dir(args)
    with open(args.config) as fh:
        config = json.load(fh)
    with open(args.onsets) as fh:
        onsets_payload = json.load(fh)
    surprise_paths = sorted(Path(args.surprise_dir).glob("*_surprise.csv"))
    if not surprise_paths:
        raise DataError(f"{args.surprise_dir}: no *_surprise.csv files")
    series = [load_surprise(p) for p in surprise_paths]
    try:
        observed = [onsets_payload[p.stem.removesuffix("_surprise")]
                    for p in surprise_paths]
    except KeyError as exc:
        raise DataError(f"{args.onsets}: no observed onset for event "
                        f"{exc.args[0]!r}") from None
    for name in ("prior_gain", "prior_leak", "prior_noise"):
        if name in config:
            config[name] = tuple(config[name])
    abc_config = AbcConfig(seed=args.seed, **config)
    posterior = rejection_abc(abc_config, series, observed)

    post_path = out_dir / "posterior.csv"
    lines = ["gain,leak,noise_sigma,distance"]
    lines += [",".join(repr(float(v)) for v in row)
              for row in posterior.accepted]
    _atomic_write(post_path, "\n".join(lines) + "\n")
    summary_path = out_dir / "abc_summary.json"
    _write_json(summary_path, {
        "acceptance_rate": posterior.acceptance_rate,
        "n_proposals": posterior.n_proposals,
        "epsilon": posterior.epsilon,
        "no_acceptances": posterior.no_acceptances,
        "summary": posterior.summary,
    })
    _write_manifest(out_dir, "abc",
                    [args.config, args.onsets] + list(surprise_paths),
                    [post_path, summary_path], args.seed, config)
    if posterior.no_acceptances:
        print("no acceptances; relax epsilon (distances were "
              f"{posterior.distances.min():.3f}..{posterior.distances.max():.3f})")
    else:
        print(f"accepted {len(posterior.accepted)} / "
              f"{posterior.n_proposals} proposals")
    return EXIT_OK


_PIPELINE_OBSERVABLE = {
    ScenarioKind.S1: "theta_dot", ScenarioKind.S2: "theta_dot",
    ScenarioKind.S3: "theta_dot", ScenarioKind.CUT_IN: "lateral_y",
    ScenarioKind.CROSSING_PATH: "lateral_y",
}


def cmd_pipeline(args):
    out_dir = _out_dir(args)
    spec_paths = sorted(Path(args.spec_dir).glob("*.json"))
    if not spec_paths:
        raise _UsageError(f"{args.spec_dir}: no scenario spec *.json files")
    config = _load_config(args)
    ann_cfg = _annotator_config(config.get("annotator", {}))
    acc_cfg = config.get("respond", {"gain": 1.0, "leak": -0.5,
                                     "noise_sigma": 0.05})
    seed_seq = np.random.SeedSequence(args.seed)
    spec_seeds = seed_seq.generate_state(len(spec_paths))

    outputs = []
    points = []
    for spec_path, spec_seed in zip(spec_paths, spec_seeds):
        trace, trace_path = _simulate_one(spec_path, out_dir, args.dt)
        stem = spec_path.stem
        outputs += [trace_path, trace_path.with_suffix(".json")]

        sig = looming_from_trace(trace)
        loom_path = out_dir / f"{stem}_looming.csv"
        save_looming(sig, loom_path)
        outputs.append(loom_path)

        observable = _PIPELINE_OBSERVABLE[trace.scenario_kind]
        prior_cfg = dict(config.get("surprise", {}))
        prior_cfg.setdefault(
            "model_kind",
            "ConstantLoomingRearEnd" if observable == "theta_dot"
            else "ConstantVelocityLateral")
        prior, observable = _belief_prior(prior_cfg)
        series = surprise_series(prior, trace, observable)
        surprise_path = out_dir / f"{stem}_surprise.csv"
        save_surprise(series, surprise_path)
        outputs.append(surprise_path)

        params = _accumulator_params(acc_cfg)
        result = integrate(params, series, seed=int(spec_seed),
                           baseline=acc_cfg.get("baseline"),
                           keep_trajectory=False)
        onset_path = out_dir / f"{stem}_onset.json"
        _write_json(onset_path, {"onset_t": result.onset_t,
                                 "seed": result.seed})
        outputs.append(onset_path)

        ann = annotate(trace, sig, ann_cfg)
        em = result.onset_t
        if em is not None and em >= ann.t1:
            ann = annotate(trace, sig, ann_cfg, em=em)
        ann_path = out_dir / f"{stem}_annotation.json"
        save_annotation(ann, ann_path)
        outputs.append(ann_path)
        if ann.rsp_t is not None:
            points.append((ann.rut, ann.rsp_t))

    distinct_ruts = len({round(r, 12) for r, _ in points})
    if len(points) >= 2 and distinct_ruts >= 2:
        model = fit_ols(points)
        model_source = "fitted"
    else:
        model = published_model()
        model_source = "reference"
    model_path = out_dir / "model.json"
    save_model(model, model_path)
    outputs.append(model_path)

    report = validate_table1(model, [s.validation_row()
                                     for s in benchmark_studies()])
    payload = report.as_dict()
    payload["model_source"] = model_source
    validation_path = out_dir / "validation.json"
    _write_json(validation_path, payload)
    outputs.append(validation_path)

    _write_manifest(out_dir, "pipeline", spec_paths, outputs, args.seed,
                    config)
    print(f"pipeline: {len(spec_paths)} scenario(s), model {model_source} "
          f"(k={model.k:.3f}, m={model.m:.3f}), validation R^2 "
          f"{report.r_squared:.4f}")
    return EXIT_OK


class _UsageError(Exception):
    pass


def build_parser() -> _Parser:
    parser = _Parser(prog="conflict-rt",
                     description="Surprise-based response timing toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--dt", type=float, default=None,
                       help="override the sample interval where it applies")
        p.add_argument("--config", default=None, help="JSON config file")
        return p

    p = add("simulate", "generate a trace from a scenario spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)

    p = add("loom", "compute looming from a trace CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=1,
                   help="odd moving-average window for theta_dot")

    p = add("annotate", "annotate T1/T2/RUT on a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--looming", default=None,
                   help="looming CSV (recomputed from the trace if omitted)")
    p.add_argument("--em", type=float, default=None,
                   help="evasive-maneuver onset time (s)")
    p.add_argument("--out", required=True)

    p = add("fit", "fit the linear response-time model from annotations")
    p.add_argument("--annotations", required=True,
                   help="directory of *_annotation.json files")
    p.add_argument("--out", required=True)

    p = add("validate", "validate a model against the benchmark studies")
    p.add_argument("--model", default=None,
                   help="model JSON (reference coefficients if omitted)")
    p.add_argument("--out", required=True)

    p = add("table1", "recompute the benchmark study table end to end")
    p.add_argument("--out", default=None)
    p.set_defaults(dt=0.01)

    p = add("surprise", "compute a surprise series from a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)

    p = add("respond", "integrate the accumulator over a surprise series")
    p.add_argument("--surprise", required=True)
    p.add_argument("--params", required=True, help="accumulator params JSON")
    p.add_argument("--trajectory", action="store_true",
                   help="also write the activation trajectory CSV")
    p.add_argument("--out", required=True)

    p = add("abc", "rejection-ABC fit of accumulator parameters")
    p.add_argument("--surprise-dir", required=True)
    p.add_argument("--onsets", required=True,
                   help="JSON mapping event stem -> observed onset (s)")
    p.add_argument("--out", required=True)

    p = add("pipeline", "simulate/loom/annotate/surprise/respond + fit")
    p.add_argument("--spec-dir", required=True)
    p.add_argument("--out", required=True)
    return parser


_COMMANDS = {
    "simulate": cmd_simulate, "loom": cmd_loom, "annotate": cmd_annotate,
    "fit": cmd_fit, "validate": cmd_validate, "table1": cmd_table1,
    "surprise": cmd_surprise, "respond": cmd_respond, "abc": cmd_abc,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConflictRtError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
