"""Command-line entry points.

Every subcommand takes ``--config`` (a JSON file), ``--seed`` (overrides
the config's seed) and ``--out`` (a file or directory, depending on the
command).  Config mistakes exit with code 2 and a message naming the file
and, for syntax errors, the line and column.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from .designer import (
    Session,
    SessionConfig,
    config_from_dict,
    config_to_dict,
    run_simulation,
    trace_to_csv,
)
from .errors import PreyDesignError
from .models import Params, candidate_models
from .static_design import coordinate_exchange
from .study import (
    StudyManifest,
    default_truths,
    export_study,
    load_manifest,
    run_study,
)
from .utilities import UtilityKind, surface_to_csv


class CliError(Exception):
    """Anything that should abort with exit code 2 and a clean message."""


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as err:
        raise CliError(f"{path}: no such file") from err
    except json.JSONDecodeError as err:
        raise CliError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from err


def _session_config(args, doc: dict) -> SessionConfig:
    base = config_to_dict(SessionConfig())
    unknown = set(doc) - set(base)
    if unknown:
        raise CliError(f"{args.config}: unknown session fields {sorted(unknown)}")
    base.update(doc)
    if args.seed is not None:
        base["seed"] = args.seed
    try:
        return config_from_dict(base)
    except (PreyDesignError, ValueError, KeyError) as err:
        raise CliError(f"{args.config or '<defaults>'}: {err}") from err


def _truth_from_dict(doc: dict, models):
    model_id = doc.get("model_id", 1)
    try:
        model = next(m for m in models if m.id == model_id)
    except StopIteration:
        raise CliError(f"truth model_id {model_id} is not a session candidate")
    log_lambda = doc.get("log_lambda")
    if model.n_params == 3 and log_lambda is None:
        log_lambda = math.log(0.5)
    if model.n_params == 2:
        log_lambda = None
    params = Params(
        doc.get("log_a", math.log(0.5)),
        doc.get("log_th", math.log(0.7)),
        log_lambda,
    )
    return model, params


def cmd_simulate(args) -> int:
    doc = _load_json(args.config) if args.config else {}
    config = _session_config(args, doc.get("session", {}))
    truth_model, truth_params = _truth_from_dict(doc.get("truth", {}), config.models)

    session = run_simulation(config, truth_model, truth_params)

    out = Path(args.out or "simulate-out")
    out.mkdir(parents=True, exist_ok=True)
    session.save(out / "session.json", include_particles=args.particles)
    trace_to_csv(session.records, out / "trace.csv")
    from .reports import render_session_report

    figures = render_session_report(session, out)
    probs = session.model_probabilities()
    print(f"simulated {len(session.records)} experiments "
          f"(truth: model {truth_model.id})")
    for m, p in zip(config.models, probs):
        print(f"  model {m.id}: probability {p:.4f}")
    print(f"wrote {out / 'session.json'}, {out / 'trace.csv'} "
          f"and {len(figures)} figures to {out}/")
    return 0


def cmd_assist(args) -> int:
    doc = _load_json(args.config) if args.config else {}
    config = _session_config(args, doc.get("session", doc))
    session = Session(config)
    out = Path(args.out or "assist-session.json")

    print(f"assisted session: up to {config.n_experiments} experiments, "
          f"tau = {config.tau} h. Enter the consumed count after each trial; "
          "'q' saves and quits.")
    while not session.is_complete:
        design, surface = session.propose_next_design()
        print(f"\n[{session.i + 1}/{config.n_experiments}] "
              f"next initial prey density: {design}")
        while True:
            try:
                raw = input(f"  prey consumed out of {design} (0-{design}, q to quit): ")
            except EOFError:
                raw = "q"
            if raw.strip().lower() in ("q", "quit"):
                session.save(out)
                print(f"saved {out}")
                return 0
            try:
                observed = int(raw)
            except ValueError:
                print("  not a number; try again")
                continue
            if not 0 <= observed <= design:
                print(f"  must be between 0 and {design}; try again")
                continue
            break
        record = session.record_observation(design, observed, surface=surface)
        session.save(out)
        probs = ", ".join(
            f"m{m.id}={p:.3f}" for m, p in zip(config.models, record.model_probs)
        )
        print(f"  model probabilities: {probs}")
        best = max(range(len(record.model_probs)), key=lambda k: record.model_probs[k])
        print(f"  log precision (model {config.models[best].id}): "
              f"{record.log_precisions[best]:.3f}")
        for warning in record.warnings:
            print(f"  warning: {warning}")
    session.save(out)
    print(f"\nsession complete; saved {out}")
    return 0


def cmd_study(args) -> int:
    if args.config:
        try:
            manifest = load_manifest(args.config)
        except json.JSONDecodeError as err:
            raise CliError(f"{args.config}:{err.lineno}:{err.colno}: {err.msg}")
        except (PreyDesignError, KeyError, TypeError, ValueError) as err:
            raise CliError(f"{args.config}: {err}") from err
    else:
        manifest = StudyManifest(truths=tuple(default_truths()))
    if args.seed is not None:
        import dataclasses

        manifest = dataclasses.replace(manifest, base_seed=args.seed)

    out = Path(args.out or "study-out")
    out.mkdir(parents=True, exist_ok=True)

    done = []

    def progress(rec):
        done.append(rec)
        status = "FAILED: " + rec.error if rec.error else f"{rec.wall_clock:.1f}s"
        print(f"  [{len(done)}] {rec.truth} {rec.strategy} rep{rec.replication}: {status}")

    records = run_study(manifest, out_dir=out, workers=args.workers, progress=progress)
    paths = export_study(records, out)
    from .reports import render_study_report

    figures = render_study_report(records, out)
    failed = sum(1 for r in records if r.error)
    print(f"study complete: {len(records)} cells ({failed} failed); "
          f"CSVs: {', '.join(p.name for p in paths.values())}; "
          f"figures: {len(figures)}")
    return 0 if failed == 0 else 1


def cmd_static_design(args) -> int:
    doc = _load_json(args.config) if args.config else {}
    models = candidate_models()
    kind = UtilityKind(doc.get("kind", "pe"))
    n_experiments = int(doc.get("n_experiments", 3))
    grid = [int(d) for d in doc.get("grid", range(1, 301))]
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    import numpy as np

    rng = np.random.default_rng(seed)
    d_init = doc.get("d_init") or [int(d) for d in rng.choice(grid, size=n_experiments)]
    design = coordinate_exchange(
        models, d_init, kind,
        B=int(doc.get("B", 200)), passes=int(doc.get("passes", 2)),
        tau=float(doc.get("tau", 24.0)), grid=grid, seed=seed,
        workers=args.workers,
    )
    print(f"design points: {design.designs}")
    print(f"expected utility: {design.estimate:.4f} (s.e. {design.se:.4f})")
    print(f"failed draws: {design.n_failed}; evaluations: {design.n_evaluations}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({
                "designs": design.designs,
                "estimate": design.estimate,
                "se": design.se,
                "n_failed": design.n_failed,
                "n_evaluations": design.n_evaluations,
                "kind": kind.value,
                "seed": seed,
            }, fh, indent=2)
        print(f"wrote {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    data_dir = args.data_dir or os.environ.get("DATA_DIR", "./preydesign-data")
    port = args.port or int(os.environ.get("PORT", "8765"))
    app = create_app(data_dir)
    ui_dir = args.ui_dir or os.environ.get("UI_DIR")
    if not ui_dir:
        # a checkout carries the built dashboard next to the package
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "public"
        if (bundled / "index.html").exists():
            ui_dir = str(bundled)
    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")
        print(f"serving UI from {ui_dir} at /ui")
    print(f"listening on :{port}, sessions in {data_dir}")
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


def cmd_export(args) -> int:
    if not args.config:
        raise CliError("export needs --config pointing at a session .json "
                       "or a study records.jsonl")
    path = Path(args.config)
    out = Path(args.out or "export-out")
    out.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".jsonl":
        from .study import _record_from_json

        records = []
        with open(path) as fh:
            for line in fh:
                records.append(_record_from_json(json.loads(line)))
        paths = export_study(records, out)
        print(f"exported {len(records)} study records: "
              f"{', '.join(p.name for p in paths.values())}")
        return 0
    doc = _load_json(path)
    if doc.get("kind") != "session":
        raise CliError(f"{path}: not a session file (kind={doc.get('kind')!r})")
    session = Session.from_dict(doc)
    trace_to_csv(session.records, out / "trace.csv")
    n_surfaces = 0
    for record in session.records:
        if record.surface is not None:
            surface_to_csv(record.surface,
                           out / f"surface_iter{record.index + 1:02d}.csv")
            n_surfaces += 1
    print(f"exported trace.csv and {n_surfaces} surface CSVs to {out}/")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="preydesign",
        description="Sequential Bayesian design workbench for predator-prey "
                    "feeding trials",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output file or directory")

    p = sub.add_parser("simulate", help="run a simulated session from a hidden truth")
    common(p)
    p.add_argument("--particles", action="store_true",
                   help="include full particle dumps in the session file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("assist", help="interactive terminal loop for live trials")
    common(p)
    p.set_defaults(func=cmd_assist)

    p = sub.add_parser("study", help="batch strategy comparison from a manifest")
    common(p)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("static-design", help="optimize a pre-planned design")
    common(p)
    p.add_argument("--workers", type=int, default=0)
    p.set_defaults(func=cmd_static_design)

    p = sub.add_parser("serve", help="start the HTTP session service")
    common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int)
    p.add_argument("--data-dir")
    p.add_argument("--ui-dir", help="static frontend bundle to mount at /ui")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("export", help="session or study records to CSV")
    common(p)
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except PreyDesignError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
