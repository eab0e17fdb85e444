"""The design/observe/update loop, in simulated and assisted flavours.

A session owns one :class:`~preydesign.smc.DesignState` plus an append-only
trace of experiment records.  Simulation mode draws observations from a
hidden truth; assisted mode takes them from outside (a person at a bench,
or the HTTP service).  Either way the only mutation path is
``record_observation``, so persisting the seed and the (design, observed)
sequence is enough to replay a session bit-for-bit.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateUpdateWarning, InvalidParameterError
from .models import (
    MechanisticType,
    ModelSpec,
    NormalPrior,
    Observation,
    ObservationFamily,
    Params,
    PriorSpec,
    candidate_models,
    sample_observation,
)
from .smc import (
    DesignState,
    MoveConfig,
    log_d_posterior_precision,
    new_design_state,
    update_particle_set,
    weighted_covariance,
)
from .utilities import UtilityKind, UtilitySurface, utility_surface

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SessionConfig:
    """Everything needed to rebuild a session from scratch."""

    models: tuple[ModelSpec, ...] = tuple(candidate_models())
    n_particles: int = 1000
    move: MoveConfig = MoveConfig()
    designs: tuple[int, ...] = tuple(range(1, 301))
    tau: float = 24.0
    n_experiments: int = 25
    utility: UtilityKind = UtilityKind.TOTAL_ENTROPY
    selection: str = "optimal"  # or "random"
    seed: int = 0
    surface_stride: int = 1
    refine_window: int = 5
    stop_model_prob: float | None = None
    stop_precision_gain: float | None = None

    def __post_init__(self):
        if self.n_experiments < 0:
            raise InvalidParameterError("n_experiments must be >= 0")
        if self.selection not in ("optimal", "random"):
            raise InvalidParameterError(f"unknown selection mode {self.selection!r}")
        if not self.designs or any(d < 1 for d in self.designs):
            raise InvalidParameterError("designs must be positive integers")
        if self.n_particles < 1:
            raise InvalidParameterError("n_particles must be >= 1")
        if self.tau <= 0:
            raise InvalidParameterError("tau must be > 0")


@dataclass
class ExperimentRecord:
    """What happened at one iteration of the loop."""

    index: int
    design: int
    observed: int
    log_evidences: list[float]
    model_probs: list[float]
    log_precisions: list[float]
    ess: list[float]
    warnings: list[str] = field(default_factory=list)
    surface: UtilitySurface | None = None


class Session:
    """One sequential-design session (one experimenter, one state)."""

    def __init__(self, config: SessionConfig):
        self.config = config
        self.state: DesignState = new_design_state(
            list(config.models), config.n_particles, config.seed, config.tau
        )
        self.records: list[ExperimentRecord] = []
        self._design_set = set(int(d) for d in config.designs)

    @property
    def i(self) -> int:
        return len(self.records)

    @property
    def is_complete(self) -> bool:
        return self.i >= self.config.n_experiments

    def model_probabilities(self) -> np.ndarray:
        return self.state.model_probabilities()

    def propose_next_design(self) -> tuple[int, UtilitySurface | None]:
        """Next design: utility argmax, or a uniform draw in random mode."""
        cfg = self.config
        if cfg.selection == "random":
            d = int(self.state.streams["design"].choice(np.asarray(cfg.designs)))
            return d, None
        surface = utility_surface(
            self.state, cfg.designs, cfg.utility,
            stride=cfg.surface_stride, refine_window=cfg.refine_window,
        )
        return surface.d_star, surface

    def record_observation(self, design: int, observed: int,
                           surface: UtilitySurface | None = None) -> ExperimentRecord:
        """Fold one observation into every model's posterior and log it.

        Validation happens before any state mutation, so a typo in assisted
        mode cannot corrupt the session.
        """
        design = int(design)
        if design not in self._design_set:
            raise InvalidParameterError(
                f"design {design} is not in the session grid"
            )
        obs = Observation(n0=design, n=int(observed), tau=self.config.tau)

        captured: list[str] = []
        new_sets = []
        history = self.state.history + [obs]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DegenerateUpdateWarning)
            for ps in self.state.particle_sets:
                ps2, _diag = update_particle_set(
                    ps, obs, history, self.config.move, self.state.streams["resample"]
                )
                new_sets.append(ps2)
        for w in caught:
            if issubclass(w.category, DegenerateUpdateWarning):
                captured.append(str(w.message))
            else:
                warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)

        self.state.particle_sets = new_sets
        self.state.history.append(obs)

        record = ExperimentRecord(
            index=self.i,
            design=design,
            observed=int(observed),
            log_evidences=[ps.log_evidence for ps in new_sets],
            model_probs=self.model_probabilities().tolist(),
            log_precisions=[log_d_posterior_precision(ps) for ps in new_sets],
            ess=[ps.ess for ps in new_sets],
            warnings=captured,
            surface=surface,
        )
        self.records.append(record)
        return record

    def should_stop(self) -> bool:
        cfg = self.config
        if not self.records:
            return False
        if cfg.stop_model_prob is not None:
            if max(self.records[-1].model_probs) >= cfg.stop_model_prob:
                return True
        if cfg.stop_precision_gain is not None and len(self.records) >= 2:
            probs = self.records[-1].model_probs
            best = int(np.argmax(probs))
            gain = (self.records[-1].log_precisions[best]
                    - self.records[-2].log_precisions[best])
            if math.isfinite(gain) and gain < cfg.stop_precision_gain:
                return True
        return False

    # -- persistence --------------------------------------------------------

    def particle_summaries(self) -> list[dict]:
        out = []
        for ps in self.state.particle_sets:
            mean = ps.weights @ ps.particles
            cov = weighted_covariance(ps.particles, ps.weights)
            out.append({
                "model": ps.model.id,
                "mean": mean.tolist(),
                "cov": cov.tolist(),
                "ess": ps.ess,
                "log_evidence": ps.log_evidence,
            })
        return out

    def to_dict(self, include_particles: bool = False) -> dict:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": "session",
            "config": config_to_dict(self.config),
            "records": [record_to_dict(r) for r in self.records],
            "particle_summaries": self.particle_summaries(),
        }
        if include_particles:
            doc["particles"] = [
                {"model": ps.model.id,
                 "particles": ps.particles.tolist(),
                 "weights": ps.weights.tolist()}
                for ps in self.state.particle_sets
            ]
        return doc

    def save(self, path, include_particles: bool = False) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(include_particles), fh)

    @classmethod
    def replay(cls, config: SessionConfig, trace) -> "Session":
        """Rebuild a session from its seed and (design, observed) sequence."""
        session = cls(config)
        for design, observed in trace:
            session.record_observation(design, observed)
        return session

    @classmethod
    def from_dict(cls, doc: dict) -> "Session":
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise InvalidParameterError(
                f"unsupported session schema {doc.get('schema_version')!r}"
            )
        config = config_from_dict(doc["config"])
        session = cls.replay(
            config, [(r["design"], r["observed"]) for r in doc["records"]]
        )
        # replay recomputes the numbers; reattach the stored surfaces
        for record, stored in zip(session.records, doc["records"]):
            if stored.get("surface"):
                record.surface = record_from_dict(stored).surface
        return session

    @classmethod
    def load(cls, path) -> "Session":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def run_simulation(config: SessionConfig, truth_model: ModelSpec,
                   truth_params: Params) -> Session:
    """Run the full loop with observations drawn from a hidden truth."""
    if truth_model.id not in {m.id for m in config.models}:
        raise InvalidParameterError(
            f"truth model {truth_model.id} is not among the session's candidates"
        )
    session = Session(config)
    observe = session.state.streams["observe"]
    for _ in range(config.n_experiments):
        design, surface = session.propose_next_design()
        obs = sample_observation(truth_model, truth_params, design, config.tau, observe)
        session.record_observation(design, obs.n, surface=surface)
        if session.should_stop():
            break
    return session


# ---------------------------------------------------------------------------
# Config / record (de)serialization
# ---------------------------------------------------------------------------


def config_to_dict(config: SessionConfig) -> dict:
    return {
        "models": [_model_to_dict(m) for m in config.models],
        "n_particles": config.n_particles,
        "move": asdict(config.move),
        "designs": list(config.designs),
        "tau": config.tau,
        "n_experiments": config.n_experiments,
        "utility": config.utility.value,
        "selection": config.selection,
        "seed": config.seed,
        "surface_stride": config.surface_stride,
        "refine_window": config.refine_window,
        "stop_model_prob": config.stop_model_prob,
        "stop_precision_gain": config.stop_precision_gain,
    }


def config_from_dict(doc: dict) -> SessionConfig:
    defaults = SessionConfig()
    return SessionConfig(
        models=tuple(_model_from_dict(m) for m in doc["models"]),
        n_particles=doc.get("n_particles", defaults.n_particles),
        move=MoveConfig(**doc.get("move", {})),
        designs=tuple(int(d) for d in doc.get("designs", defaults.designs)),
        tau=doc.get("tau", defaults.tau),
        n_experiments=doc.get("n_experiments", defaults.n_experiments),
        utility=UtilityKind(doc.get("utility", defaults.utility.value)),
        selection=doc.get("selection", defaults.selection),
        seed=doc.get("seed", defaults.seed),
        surface_stride=doc.get("surface_stride", defaults.surface_stride),
        refine_window=doc.get("refine_window", defaults.refine_window),
        stop_model_prob=doc.get("stop_model_prob"),
        stop_precision_gain=doc.get("stop_precision_gain"),
    )


def _model_to_dict(model: ModelSpec) -> dict:
    prior = {
        name: {"mean": coord.mean, "sd": coord.sd}
        for name, coord in (
            ("log_a", model.prior.log_a),
            ("log_th", model.prior.log_th),
            ("log_lambda", model.prior.log_lambda),
        )
    }
    return {
        "id": model.id,
        "mech": model.mech.value,
        "obs": model.obs.value,
        "prior": prior,
        "prior_model_prob": model.prior_model_prob,
    }


def _model_from_dict(doc: dict) -> ModelSpec:
    prior = PriorSpec(**{
        name: NormalPrior(**doc["prior"][name])
        for name in ("log_a", "log_th", "log_lambda")
    })
    return ModelSpec(
        id=doc["id"],
        mech=MechanisticType(doc["mech"]),
        obs=ObservationFamily(doc["obs"]),
        prior=prior,
        prior_model_prob=doc["prior_model_prob"],
    )


def record_to_dict(record: ExperimentRecord) -> dict:
    doc = {
        "index": record.index,
        "design": record.design,
        "observed": record.observed,
        "log_evidences": record.log_evidences,
        "model_probs": record.model_probs,
        "log_precisions": record.log_precisions,
        "ess": record.ess,
        "warnings": record.warnings,
        "surface": None,
    }
    if record.surface is not None:
        doc["surface"] = {
            "designs": record.surface.designs.tolist(),
            "values": record.surface.values.tolist(),
            "d_star": record.surface.d_star,
            "kind": record.surface.kind.value,
        }
    return doc


def record_from_dict(doc: dict) -> ExperimentRecord:
    surface = None
    if doc.get("surface"):
        s = doc["surface"]
        surface = UtilitySurface(
            designs=np.asarray(s["designs"], dtype=int),
            values=np.asarray(s["values"], dtype=float),
            d_star=s["d_star"],
            kind=UtilityKind(s["kind"]),
        )
    return ExperimentRecord(
        index=doc["index"],
        design=doc["design"],
        observed=doc["observed"],
        log_evidences=list(doc["log_evidences"]),
        model_probs=list(doc["model_probs"]),
        log_precisions=list(doc["log_precisions"]),
        ess=list(doc["ess"]),
        warnings=list(doc.get("warnings", [])),
        surface=surface,
    )


def trace_to_csv(records, path) -> None:
    """Flat per-iteration CSV of the session trace."""
    import csv as _csv

    if not records:
        n_models = 0
    else:
        n_models = len(records[0].model_probs)
    cols = ["iteration", "design", "observed"]
    for k in range(n_models):
        cols += [f"log_evidence_{k + 1}", f"model_prob_{k + 1}",
                 f"log_precision_{k + 1}", f"ess_{k + 1}"]
    cols.append("warnings")
    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(cols)
        for r in records:
            row = [r.index, r.design, r.observed]
            for k in range(n_models):
                row += [repr(r.log_evidences[k]), repr(r.model_probs[k]),
                        repr(r.log_precisions[k]), repr(r.ess[k])]
            row.append("; ".join(r.warnings))
            writer.writerow(row)
