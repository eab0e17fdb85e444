"""HTTP session service backing the assisted-mode workbench.

One embedded on-disk store (a directory of JSON session files), one lock
per session, JSON bodies everywhere.  Surfaces are computed lazily on the
first design request of an iteration and cached until the next
observation arrives.  Errors carry machine-readable codes::

    {"error": {"code": "out_of_range", "message": "..."}}
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .designer import (
    Session,
    SessionConfig,
    config_from_dict,
    config_to_dict,
    record_to_dict,
)
from .errors import InvalidParameterError, PreyDesignError
from .smc import weighted_covariance
from .utilities import UtilitySurface

SCHEMA_VERSION = 1

AWAITING_DESIGN = "awaiting-design"
AWAITING_OBSERVATION = "awaiting-observation"
COMPLETE = "complete"

MARGINAL_BINS = 40
MARGINAL_SPAN_SDS = 4.0


class ApiError(PreyDesignError):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


@dataclass
class ServiceSession:
    """A live session plus its workflow handle."""

    id: str
    session: Session
    status: str = AWAITING_DESIGN
    created: str = field(default_factory=_now)
    updated: str = field(default_factory=_now)
    proposal: int | None = None
    surface: UtilitySurface | None = None

    def handle(self) -> dict:
        return {
            "id": self.id,
            "status": self.status,
            "created": self.created,
            "updated": self.updated,
            "iteration": self.session.i,
            "n_experiments": self.session.config.n_experiments,
        }


def marginal_summaries(session: Session) -> list[dict]:
    """Weighted-histogram posterior marginals, with the prior overlaid.

    Bins span +/-4 prior sds per coordinate, fixed across iterations so a
    UI can animate without rescaling.
    """
    out = []
    for ps in session.state.particle_sets:
        model = ps.model
        mean = ps.weights @ ps.particles
        cov = weighted_covariance(ps.particles, ps.weights)
        sds = np.sqrt(np.maximum(np.diag(cov), 0.0))
        histograms = {}
        for k, name in enumerate(model.param_names):
            prior = model.prior.coords(model.n_params)[k]
            edges = np.linspace(
                prior.mean - MARGINAL_SPAN_SDS * prior.sd,
                prior.mean + MARGINAL_SPAN_SDS * prior.sd,
                MARGINAL_BINS + 1,
            )
            density, _ = np.histogram(ps.particles[:, k], bins=edges,
                                      weights=ps.weights, density=True)
            centers = 0.5 * (edges[:-1] + edges[1:])
            prior_density = (
                np.exp(-0.5 * ((centers - prior.mean) / prior.sd) ** 2)
                / (prior.sd * np.sqrt(2 * np.pi))
            )
            histograms[name] = {
                "edges": edges.tolist(),
                "density": density.tolist(),
                "prior_density": prior_density.tolist(),
                "mean": float(mean[k]),
                "sd": float(sds[k]),
            }
        out.append({
            "model": model.id,
            "log_evidence": ps.log_evidence,
            "ess": ps.ess,
            "histograms": histograms,
        })
    return out


class SessionStore:
    """Directory-backed store; one lock per session id."""

    def __init__(self, data_dir):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, ServiceSession] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def _path(self, sid: str) -> Path:
        return self.data_dir / f"{sid}.json"

    def lock(self, sid: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(sid, threading.Lock())

    def next_id(self, config: SessionConfig) -> str:
        digest = hashlib.sha1(
            json.dumps(config_to_dict(config), sort_keys=True).encode()
        ).hexdigest()[:8]
        with self._registry_lock:
            ordinal = len(self._sessions) + len(
                [p for p in self.data_dir.glob("*.json")
                 if p.stem not in self._sessions]
            )
        return f"s{ordinal:04d}-{digest}"

    def add(self, svc: ServiceSession) -> None:
        with self._registry_lock:
            self._sessions[svc.id] = svc
        self.save(svc)

    def get(self, sid: str) -> ServiceSession:
        with self._registry_lock:
            if sid in self._sessions:
                return self._sessions[sid]
        path = self._path(sid)
        if not path.exists():
            raise ApiError(404, "unknown_session", f"no session {sid!r}")
        with open(path) as fh:
            doc = json.load(fh)
        session = Session.from_dict(doc["session"])
        svc = ServiceSession(
            id=sid,
            session=session,
            status=doc["handle"]["status"],
            created=doc["handle"]["created"],
            updated=doc["handle"]["updated"],
            proposal=doc["handle"].get("proposal"),
        )
        with self._registry_lock:
            self._sessions.setdefault(sid, svc)
            return self._sessions[sid]

    def save(self, svc: ServiceSession) -> None:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "handle": {**svc.handle(), "proposal": svc.proposal},
            "session": svc.session.to_dict(),
        }
        tmp = self._path(svc.id).with_suffix(".tmp")
        with open(tmp, "w") as fh:
            json.dump(doc, fh)
        tmp.replace(self._path(svc.id))

    def delete(self, sid: str) -> None:
        with self._registry_lock:
            self._sessions.pop(sid, None)
            self._locks.pop(sid, None)
        path = self._path(sid)
        if path.exists():
            path.unlink()

    def ids(self) -> list[str]:
        with self._registry_lock:
            known = set(self._sessions)
        known.update(p.stem for p in self.data_dir.glob("*.json"))
        return sorted(known)


def _surface_points(surface: UtilitySurface | None):
    if surface is None:
        return None
    return {
        "designs": [int(d) for d in surface.designs],
        "values": [float(v) for v in surface.values],
        "d_star": surface.d_star,
        "kind": surface.kind.value,
    }


def create_app(data_dir="./preydesign-data") -> FastAPI:
    """Build the FastAPI app over a session store rooted at ``data_dir``."""
    app = FastAPI(title="preydesign session service", version="0.1.0")
    store = SessionStore(data_dir)
    app.state.store = store

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, err: ApiError):
        return JSONResponse(
            status_code=err.status,
            content={"error": {"code": err.code, "message": str(err)}},
        )

    @app.exception_handler(InvalidParameterError)
    async def _invalid(_req: Request, err: InvalidParameterError):
        return JSONResponse(
            status_code=422,
            content={"error": {"code": "invalid_parameter", "message": str(err)}},
        )

    @app.post("/sessions", status_code=201)
    def create_session(body: dict | None = None):
        doc = dict(body or {})
        base = config_to_dict(SessionConfig())
        unknown = set(doc) - set(base)
        if unknown:
            raise ApiError(422, "unknown_field",
                           f"unknown config fields: {sorted(unknown)}")
        base.update(doc)
        config = config_from_dict(base)
        svc = ServiceSession(id=store.next_id(config), session=Session(config))
        if svc.session.is_complete:
            svc.status = COMPLETE
        store.add(svc)
        return svc.handle()

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": [store.get(sid).handle() for sid in store.ids()]}

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        svc = store.get(sid)
        with store.lock(sid):
            return {
                **svc.handle(),
                "model_probabilities": svc.session.model_probabilities().tolist(),
                "model_ids": [m.id for m in svc.session.config.models],
            }

    @app.get("/sessions/{sid}/design")
    def get_design(sid: str):
        svc = store.get(sid)
        with store.lock(sid):
            if svc.status == COMPLETE:
                raise ApiError(409, "complete", "session has run all experiments")
            if svc.proposal is None:
                proposal, surface = svc.session.propose_next_design()
                svc.proposal = proposal
                svc.surface = surface
            elif svc.surface is None and svc.session.config.selection == "optimal":
                # surface cache lost across a restart; optimal proposals are
                # deterministic, so recomputing cannot change the design
                _, svc.surface = svc.session.propose_next_design()
            svc.status = AWAITING_OBSERVATION
            svc.updated = _now()
            store.save(svc)
            return {
                "iteration": svc.session.i + 1,
                "proposal": svc.proposal,
                "surface": _surface_points(svc.surface),
                "status": svc.status,
            }

    @app.post("/sessions/{sid}/observations")
    def submit_observation(sid: str, body: dict):
        svc = store.get(sid)
        with store.lock(sid):
            if svc.status != AWAITING_OBSERVATION:
                raise ApiError(
                    409, "not_awaiting_observation",
                    f"session status is {svc.status!r}; fetch a design first",
                )
            if "design" not in body or "observed" not in body:
                raise ApiError(422, "missing_field",
                               "body must carry 'design' and 'observed'")
            design = int(body["design"])
            observed = int(body["observed"])
            if not 0 <= observed <= design:
                raise ApiError(
                    422, "out_of_range",
                    f"observed count {observed} outside [0, {design}]",
                )
            try:
                record = svc.session.record_observation(
                    design, observed, surface=svc.surface
                )
            except InvalidParameterError as err:
                raise ApiError(422, "invalid_parameter", str(err)) from err
            svc.proposal = None
            svc.surface = None
            svc.status = COMPLETE if svc.session.is_complete else AWAITING_DESIGN
            svc.updated = _now()
            store.save(svc)
            return {
                "record": record_to_dict(record),
                "model_probabilities": record.model_probs,
                "log_precisions": record.log_precisions,
                "marginals": marginal_summaries(svc.session),
                "warnings": record.warnings,
                "status": svc.status,
            }

    @app.get("/sessions/{sid}/history")
    def get_history(sid: str):
        svc = store.get(sid)
        with store.lock(sid):
            return {
                "records": [record_to_dict(r) for r in svc.session.records],
                "status": svc.status,
            }

    @app.get("/sessions/{sid}/marginals")
    def get_marginals(sid: str):
        svc = store.get(sid)
        with store.lock(sid):
            return {"marginals": marginal_summaries(svc.session)}

    @app.delete("/sessions/{sid}", status_code=204)
    def delete_session(sid: str):
        store.get(sid)
        with store.lock(sid):
            store.delete(sid)

    return app
