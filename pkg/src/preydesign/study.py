"""Batch comparisons of design strategies over a truth x replication grid.

Each cell of the grid (true data-generating process, strategy,
replication) runs one full sequential session with its own deterministic
seed, collects per-iteration metrics, and is checkpointed as a JSON line
so an interrupted study resumes without redoing finished cells.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .designer import (
    Session,
    SessionConfig,
    _model_from_dict,
    _model_to_dict,
    run_simulation,
)
from .errors import InvalidParameterError
from .models import (
    ModelSpec,
    Params,
    candidate_models,
    expected_proportion,
    prior_sample,
    sample_observation,
)
from .smc import MoveConfig
from .static_design import coordinate_exchange
from .utilities import UtilityKind

RECORDS_FILENAME = "records.jsonl"

_SEQUENTIAL_STRATEGIES = {
    "RG": None,
    "PE": UtilityKind.PARAMETER_ESTIMATION,
    "MD": UtilityKind.MODEL_DISCRIMINATION,
    "TE": UtilityKind.TOTAL_ENTROPY,
}
_STATIC_STRATEGIES = {
    "STATIC-PE": UtilityKind.PARAMETER_ESTIMATION,
    "STATIC-MD": UtilityKind.MODEL_DISCRIMINATION,
    "STATIC-TE": UtilityKind.TOTAL_ENTROPY,
}
KNOWN_STRATEGIES = tuple(_SEQUENTIAL_STRATEGIES) + tuple(_STATIC_STRATEGIES)


@dataclass(frozen=True)
class TruthSpec:
    """One true data-generating process for simulation."""

    label: str
    model_id: int
    params: Params


@dataclass(frozen=True)
class StudyManifest:
    truths: tuple[TruthSpec, ...]
    strategies: tuple[str, ...] = ("RG", "PE", "MD", "TE")
    replications: int = 10
    n_experiments: int = 15
    n_particles: int = 1000
    models: tuple[ModelSpec, ...] = tuple(candidate_models())
    designs: tuple[int, ...] = tuple(range(1, 301))
    tau: float = 24.0
    base_seed: int = 0
    surface_stride: int = 3
    refine_window: int = 5
    move: MoveConfig = MoveConfig()
    static_B: int = 60
    static_passes: int = 1
    reoptimize_static: bool = True

    def __post_init__(self):
        if self.replications < 1:
            raise InvalidParameterError("replications must be >= 1")
        if not self.strategies:
            raise InvalidParameterError("at least one strategy is required")
        unknown = set(self.strategies) - set(KNOWN_STRATEGIES)
        if unknown:
            raise InvalidParameterError(f"unknown strategies: {sorted(unknown)}")
        ids = {m.id for m in self.models}
        for truth in self.truths:
            if truth.model_id not in ids:
                raise InvalidParameterError(
                    f"truth {truth.label!r} uses model {truth.model_id}, "
                    "which is not a candidate"
                )


@dataclass
class StudyRecord:
    """Per-cell outcome: one strategy on one truth for one replication."""

    truth: str
    model_id: int
    strategy: str
    replication: int
    seed: int
    designs: list[int] = field(default_factory=list)
    observed: list[int] = field(default_factory=list)
    log_precision_true: list[float] = field(default_factory=list)
    true_model_prob: list[float] = field(default_factory=list)
    model_probs: list[list[float]] = field(default_factory=list)
    static_points: list[int] | None = None
    wall_clock: float = 0.0
    error: str | None = None

    @property
    def key(self) -> str:
        return f"{self.truth}|{self.strategy}|{self.replication}"


def cell_seed(base_seed: int, truth_label: str, strategy: str, replication: int) -> int:
    """Deterministic per-cell seed: base xor a stable hash of the cell key."""
    digest = hashlib.sha256(
        f"{truth_label}|{strategy}|{replication}".encode()
    ).digest()
    return (base_seed ^ int.from_bytes(digest[:8], "little")) & (2**63 - 1)


def default_truths(models=None, per_model: int = 2, seed: int = 20_000,
                   tau: float = 24.0) -> list[TruthSpec]:
    """Reference truths: the documented illustration point for model 1
    (its model in the worked example) plus screened prior draws.

    Drawn truths are rejected unless desk-scale trials can actually see
    them: the expected consumed proportion must be moderate at mid-grid
    densities (0.03..0.97 at 150 prey), low-density trials must register
    kills at all (>= 0.02 at 10 prey), and beta-binomial truths must carry
    detectable over-dispersion (lambda >= 0.1, roughly a 2x variance
    inflation at 20 prey).  The vague prior happily produces processes
    outside this window, but they make every design strategy equally blind
    and say nothing about strategy quality.
    """
    models = list(models) if models is not None else candidate_models()
    rng = np.random.default_rng(seed)
    truths = []
    for model in models:
        wanted = per_model
        if model.id == 1:
            truths.append(TruthSpec(
                "m1-anchor", 1,
                Params(math.log(0.5), math.log(0.7), math.log(0.5)),
            ))
            wanted -= 1
        drawn = 0
        while drawn < wanted:
            candidate = prior_sample(model, rng)
            mid = expected_proportion(model.mech, candidate, 150, tau)
            low = expected_proportion(model.mech, candidate, 10, tau)
            dispersed = (
                model.n_params == 2 or candidate.log_lambda >= math.log(0.1)
            )
            if 0.03 <= mid <= 0.97 and low >= 0.02 and dispersed:
                drawn += 1
                truths.append(TruthSpec(f"m{model.id}-draw{drawn}", model.id, candidate))
    return truths


def _session_config(manifest: StudyManifest, strategy: str, seed: int) -> SessionConfig:
    utility = _SEQUENTIAL_STRATEGIES.get(strategy)
    return SessionConfig(
        models=manifest.models,
        n_particles=manifest.n_particles,
        move=manifest.move,
        designs=manifest.designs,
        tau=manifest.tau,
        n_experiments=manifest.n_experiments,
        utility=utility if utility is not None else UtilityKind.TOTAL_ENTROPY,
        selection="random" if strategy == "RG" else "optimal",
        seed=seed,
        surface_stride=manifest.surface_stride,
        refine_window=manifest.refine_window,
    )


def _truth_model(manifest: StudyManifest, truth: TruthSpec) -> ModelSpec:
    return next(m for m in manifest.models if m.id == truth.model_id)


def run_cell(manifest: StudyManifest, truth: TruthSpec, strategy: str,
             replication: int) -> StudyRecord:
    """Run one (truth, strategy, replication) cell to completion."""
    seed = cell_seed(manifest.base_seed, truth.label, strategy, replication)
    record = StudyRecord(
        truth=truth.label, model_id=truth.model_id, strategy=strategy,
        replication=replication, seed=seed,
    )
    started = time.perf_counter()
    try:
        config = _session_config(manifest, strategy, seed)
        truth_model = _truth_model(manifest, truth)
        if strategy in _STATIC_STRATEGIES:
            session = _run_static_cell(manifest, config, truth_model, truth, record)
        else:
            session = run_simulation(config, truth_model, truth.params)
        true_idx = [m.id for m in manifest.models].index(truth.model_id)
        for rec in session.records:
            record.designs.append(rec.design)
            record.observed.append(rec.observed)
            record.log_precision_true.append(rec.log_precisions[true_idx])
            record.true_model_prob.append(rec.model_probs[true_idx])
            record.model_probs.append(rec.model_probs)
    except Exception as err:  # cell failures must not sink the study
        record.error = f"{type(err).__name__}: {err}"
    record.wall_clock = time.perf_counter() - started
    return record


def _run_static_cell(manifest, config, truth_model, truth, record) -> Session:
    kind = _STATIC_STRATEGIES[record.strategy]
    exchange_seed = record.seed if manifest.reoptimize_static else cell_seed(
        manifest.base_seed, truth.label, record.strategy, 0
    )
    # with reoptimize_static off, the starting point must be shared too so
    # every replication walks to the same design
    rng = np.random.default_rng(np.random.SeedSequence(exchange_seed).spawn(1)[0])
    d_init = [int(d) for d in rng.choice(np.asarray(manifest.designs),
                                         size=manifest.n_experiments)]
    static = coordinate_exchange(
        manifest.models, d_init, kind,
        B=manifest.static_B, passes=manifest.static_passes, tau=manifest.tau,
        grid=manifest.designs, seed=exchange_seed,
    )
    record.static_points = list(static.designs)
    session = Session(config)
    observe = session.state.streams["observe"]
    for d in static.designs:
        obs = sample_observation(truth_model, truth.params, d, manifest.tau, observe)
        session.record_observation(d, obs.n)
    return session


def _record_to_json(record: StudyRecord) -> dict:
    doc = dict(record.__dict__)
    return doc


def _record_from_json(doc: dict) -> StudyRecord:
    return StudyRecord(**doc)


def run_study(manifest: StudyManifest, out_dir=None, workers: int = 1,
              progress=None) -> list[StudyRecord]:
    """Run every cell, checkpointing to ``out_dir`` if given.

    Completed cells found in an existing checkpoint are reused untouched,
    so an interrupted study resumes to the identical result set.
    """
    cells = [
        (truth, strategy, rep)
        for truth in manifest.truths
        for strategy in manifest.strategies
        for rep in range(manifest.replications)
    ]
    done: dict[str, StudyRecord] = {}
    checkpoint = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        checkpoint = out_dir / RECORDS_FILENAME
        if checkpoint.exists():
            with open(checkpoint) as fh:
                for line in fh:
                    rec = _record_from_json(json.loads(line))
                    done[rec.key] = rec

    pending = [
        c for c in cells if f"{c[0].label}|{c[1]}|{c[2]}" not in done
    ]

    def note(rec):
        if checkpoint is not None:
            with open(checkpoint, "a") as fh:
                fh.write(json.dumps(_record_to_json(rec)) + "\n")
        if progress is not None:
            progress(rec)

    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(run_cell, manifest, truth, strategy, rep): None
                for truth, strategy, rep in pending
            }
            for fut in as_completed(futures):
                rec = fut.result()
                done[rec.key] = rec
                note(rec)
    else:
        for truth, strategy, rep in pending:
            rec = run_cell(manifest, truth, strategy, rep)
            done[rec.key] = rec
            note(rec)

    ordered = [
        done[f"{truth.label}|{strategy}|{rep}"]
        for truth, strategy, rep in cells
    ]
    return ordered


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------

_QUANTS = (0.1, 0.25, 0.5, 0.75, 0.9)


@dataclass
class StudySummary:
    """Pure function of the records: quantiles, medians, histograms."""

    final_metrics: list[dict]
    per_iteration: list[dict]
    design_histogram: list[dict]


def _quantiles(values) -> dict:
    arr = np.asarray([v for v in values if math.isfinite(v)], dtype=float)
    if arr.size == 0:
        return {f"q{int(q * 100)}": math.nan for q in _QUANTS}
    return {f"q{int(q * 100)}": float(np.quantile(arr, q)) for q in _QUANTS}


def summarize(records: list[StudyRecord]) -> StudySummary:
    if not records:
        raise InvalidParameterError("no records to summarize")
    groups: dict[tuple[str, str], list[StudyRecord]] = {}
    for rec in records:
        if rec.error is not None:
            continue
        groups.setdefault((rec.truth, rec.strategy), []).append(rec)

    final_metrics = []
    per_iteration = []
    design_histogram = []
    for (truth, strategy), recs in sorted(groups.items()):
        final_prec = [r.log_precision_true[-1] for r in recs if r.log_precision_true]
        final_prob = [r.true_model_prob[-1] for r in recs if r.true_model_prob]
        row = {
            "truth": truth,
            "strategy": strategy,
            "replications": len(recs),
            "final_log_precision_median": float(np.median(final_prec)) if final_prec else math.nan,
            "final_true_model_prob_median": float(np.median(final_prob)) if final_prob else math.nan,
        }
        row.update({f"precision_{k}": v for k, v in _quantiles(final_prec).items()})
        row.update({f"prob_{k}": v for k, v in _quantiles(final_prob).items()})
        final_metrics.append(row)

        n_iter = max(len(r.designs) for r in recs)
        for i in range(n_iter):
            precs = [r.log_precision_true[i] for r in recs if len(r.designs) > i]
            probs = [r.true_model_prob[i] for r in recs if len(r.designs) > i]
            finite = [p for p in precs if math.isfinite(p)]
            per_iteration.append({
                "truth": truth,
                "strategy": strategy,
                "iteration": i + 1,
                "median_log_precision": float(np.median(finite)) if finite else math.nan,
                "median_true_model_prob": float(np.median(probs)) if probs else math.nan,
            })

        counts: dict[int, int] = {}
        for r in recs:
            for d in r.designs:
                counts[d] = counts.get(d, 0) + 1
        for d in sorted(counts):
            design_histogram.append({
                "truth": truth,
                "strategy": strategy,
                "design": d,
                "count": counts[d],
            })
    return StudySummary(final_metrics, per_iteration, design_histogram)


# ---------------------------------------------------------------------------
# Delimited exports
# ---------------------------------------------------------------------------


def records_to_csv(records: list[StudyRecord], path) -> None:
    """Long-form per-iteration CSV of raw study records."""
    import csv

    model_ids = sorted({rec.model_id for rec in records}) if records else []
    n_models = len(records[0].model_probs[0]) if records and records[0].model_probs else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["truth", "model_id", "strategy", "replication", "seed",
                  "iteration", "design", "observed", "log_precision_true",
                  "true_model_prob"]
        header += [f"model_prob_{k + 1}" for k in range(n_models)]
        writer.writerow(header)
        for rec in records:
            for i in range(len(rec.designs)):
                row = [rec.truth, rec.model_id, rec.strategy, rec.replication,
                       rec.seed, i + 1, rec.designs[i], rec.observed[i],
                       repr(rec.log_precision_true[i]), repr(rec.true_model_prob[i])]
                row += [repr(p) for p in rec.model_probs[i]]
                writer.writerow(row)


def _dicts_to_csv(rows: list[dict], path) -> None:
    import csv

    if not rows:
        with open(path, "w", newline="") as fh:
            fh.write("")
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({
                k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()
            })


def export_study(records: list[StudyRecord], out_dir) -> dict[str, Path]:
    """Write the record CSV plus one plot-ready CSV per figure family.

    Records are canonically ordered first, so exports are byte-identical
    whatever order the cells completed in.
    """
    records = sorted(records, key=lambda r: (r.truth, r.strategy, r.replication))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"records": out_dir / "records.csv"}
    records_to_csv(records, paths["records"])

    summary = summarize(records)
    paths["summary"] = out_dir / "summary.csv"
    _dicts_to_csv(summary.final_metrics, paths["summary"])

    # distributions behind the box plots: final precision / model probability
    final_rows = []
    prob_rows = []
    for rec in records:
        if rec.error is not None or not rec.designs:
            continue
        final_rows.append({
            "truth": rec.truth, "strategy": rec.strategy,
            "replication": rec.replication,
            "final_log_precision": rec.log_precision_true[-1],
        })
        for k, p in enumerate(rec.model_probs[-1]):
            prob_rows.append({
                "truth": rec.truth, "strategy": rec.strategy,
                "replication": rec.replication, "model": k + 1,
                "final_model_prob": p,
            })
    paths["fig_final_precision"] = out_dir / "fig_final_precision.csv"
    _dicts_to_csv(final_rows, paths["fig_final_precision"])
    paths["fig_final_model_prob"] = out_dir / "fig_final_model_prob.csv"
    _dicts_to_csv(prob_rows, paths["fig_final_model_prob"])
    paths["fig_precision_iterations"] = out_dir / "fig_precision_iterations.csv"
    _dicts_to_csv(summary.per_iteration, paths["fig_precision_iterations"])
    paths["fig_design_distribution"] = out_dir / "fig_design_distribution.csv"
    _dicts_to_csv(summary.design_histogram, paths["fig_design_distribution"])
    return paths


# ---------------------------------------------------------------------------
# Manifest (de)serialization
# ---------------------------------------------------------------------------


def manifest_to_dict(manifest: StudyManifest) -> dict:
    return {
        "truths": [
            {"label": t.label, "model_id": t.model_id,
             "params": {"log_a": t.params.log_a, "log_th": t.params.log_th,
                        "log_lambda": t.params.log_lambda}}
            for t in manifest.truths
        ],
        "strategies": list(manifest.strategies),
        "replications": manifest.replications,
        "n_experiments": manifest.n_experiments,
        "n_particles": manifest.n_particles,
        "models": [_model_to_dict(m) for m in manifest.models],
        "designs": list(manifest.designs),
        "tau": manifest.tau,
        "base_seed": manifest.base_seed,
        "surface_stride": manifest.surface_stride,
        "refine_window": manifest.refine_window,
        "move": {"c": manifest.move.c,
                 "ess_threshold_frac": manifest.move.ess_threshold_frac,
                 "proposal_scale": manifest.move.proposal_scale,
                 "r_max": manifest.move.r_max},
        "static_B": manifest.static_B,
        "static_passes": manifest.static_passes,
        "reoptimize_static": manifest.reoptimize_static,
    }


def manifest_from_dict(doc: dict) -> StudyManifest:
    defaults = StudyManifest(truths=(TruthSpec("x", 1, Params(0, 0, 0)),))
    truths = tuple(
        TruthSpec(
            label=t["label"], model_id=t["model_id"],
            params=Params(t["params"]["log_a"], t["params"]["log_th"],
                          t["params"].get("log_lambda")),
        )
        for t in doc["truths"]
    )
    models = tuple(_model_from_dict(m) for m in doc["models"]) if "models" in doc \
        else tuple(candidate_models())
    return StudyManifest(
        truths=truths,
        strategies=tuple(doc.get("strategies", defaults.strategies)),
        replications=doc.get("replications", defaults.replications),
        n_experiments=doc.get("n_experiments", defaults.n_experiments),
        n_particles=doc.get("n_particles", defaults.n_particles),
        models=models,
        designs=tuple(doc.get("designs", defaults.designs)),
        tau=doc.get("tau", defaults.tau),
        base_seed=doc.get("base_seed", defaults.base_seed),
        surface_stride=doc.get("surface_stride", defaults.surface_stride),
        refine_window=doc.get("refine_window", defaults.refine_window),
        move=MoveConfig(**doc.get("move", {})),
        static_B=doc.get("static_B", defaults.static_B),
        static_passes=doc.get("static_passes", defaults.static_passes),
        reoptimize_static=doc.get("reoptimize_static", defaults.reoptimize_static),
    )


def load_manifest(path) -> StudyManifest:
    with open(path) as fh:
        return manifest_from_dict(json.load(fh))


def save_manifest(manifest: StudyManifest, path) -> None:
    with open(path, "w") as fh:
        json.dump(manifest_to_dict(manifest), fh, indent=2)
