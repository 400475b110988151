"""HTTP face of the visual-Turing-test service (JSON bodies, PNG images).

    POST /sessions                      spec -> {session_id, n_trials}
    GET  /sessions/{id}/next            -> {trial_id, image_url} | {done: true, ...}
    GET  /sessions/{id}/progress        -> {answered, total, kind, labels}
    POST /sessions/{id}/responses       {trial_id, answer} -> {status}
    GET  /sessions/{id}/report[?partial=true]
    GET  /images/{token}                PNG bytes

Trial payloads carry exactly {trial_id, image_url}; ground truth exists only
in the server-side log.  Image tokens are unguessable and resolved
server-side.
"""

from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

from .config import ModelConfig
from .data import load_dataset
from .errors import ConfigurationError, IngestionError
from .vtt import (ConflictError, IncompleteSessionError, NotFoundError,
                  SessionStore, VttSessionSpec, assemble_trials,
                  render_session_pools, score_session, submit_response)


@dataclass
class VttServiceConfig:
    store_root: str
    data_root: str = ""
    checkpoint_root: str = ""


class SessionRequest(BaseModel):
    kind: str
    model_tag: str = ""
    dataset_tag: str = ""
    n_real: int = 0
    n_synthetic: int = 0
    shuffle_seed: int = 0


class ResponseBody(BaseModel):
    trial_id: str
    answer: str


class VttService:
    """Owns the store plus cached sessions and the image-token table."""

    def __init__(self, config: VttServiceConfig):
        self.config = config
        self.store = SessionStore(config.store_root)
        self.sessions = {}
        self.tokens = {}
        for sid in self.store.list_sessions():
            self._cache(self.store.load(sid))

    def _cache(self, session):
        self.sessions[session.session_id] = session
        for t in session.trials:
            self.tokens[t.image_token] = t.image_file
        return session

    def get_session(self, session_id):
        if session_id not in self.sessions:
            self._cache(self.store.load(session_id))  # raises NotFoundError
        return self.sessions[session_id]

    def _load_model(self, model_tag):
        from .trainer import load_model_from_checkpoint

        ckpt = Path(self.config.checkpoint_root) / model_tag
        if not ckpt.exists():
            raise NotFoundError(f"no checkpoint directory {ckpt}")
        return load_model_from_checkpoint(ckpt)

    def _load_dataset(self, dataset_tag, image_size, num_bins):
        manifest = Path(self.config.data_root) / dataset_tag / "manifest.csv"
        if not manifest.exists():
            raise NotFoundError(f"no dataset manifest {manifest}")
        return load_dataset(manifest, image_size=image_size, num_bins=num_bins)

    def create_session(self, spec: VttSessionSpec):
        model, train_cfg = self._load_model(spec.model_tag)
        dataset = self._load_dataset(spec.dataset_tag, model.cfg.image_size,
                                     model.cfg.num_bins)
        work = self.store.root / "_staging" / f"{spec.kind}_{spec.shuffle_seed}"
        real_files, syn_files = render_session_pools(model, dataset, spec, work)
        trials = assemble_trials(spec, real_files, syn_files)
        return self._cache(self.store.create(spec, trials))


def create_app(config: VttServiceConfig, service=None):
    app = FastAPI(title="visual-turing-test service")
    svc = service or VttService(config)
    app.state.service = svc

    @app.exception_handler(NotFoundError)
    async def _not_found(request: Request, exc: NotFoundError):
        return JSONResponse(status_code=404, content={"error": str(exc)})

    @app.exception_handler(ConflictError)
    async def _conflict(request: Request, exc: ConflictError):
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.exception_handler(IncompleteSessionError)
    async def _incomplete(request: Request, exc: IncompleteSessionError):
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.exception_handler(ConfigurationError)
    async def _bad_request(request: Request, exc: ConfigurationError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(IngestionError)
    async def _bad_data(request: Request, exc: IngestionError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.post("/sessions", status_code=201)
    def create_session(body: SessionRequest):
        spec = VttSessionSpec(**body.model_dump())
        session = svc.create_session(spec)
        return {"session_id": session.session_id, "n_trials": session.n_trials}

    @app.get("/sessions/{session_id}/next")
    def next_trial(session_id: str):
        session = svc.get_session(session_id)
        trial = session.next_unanswered()
        if trial is None:
            return {"done": True, "report_url": f"/sessions/{session_id}/report"}
        return {"trial_id": trial.trial_id,
                "image_url": f"/images/{trial.image_token}"}

    @app.get("/sessions/{session_id}/progress")
    def progress(session_id: str):
        session = svc.get_session(session_id)
        return {"answered": session.n_answered, "total": session.n_trials,
                "kind": session.spec.kind, "labels": list(session.spec.labels)}

    @app.post("/sessions/{session_id}/responses")
    def respond(session_id: str, body: ResponseBody):
        session = svc.get_session(session_id)
        with svc.store.lock(session_id):
            status = submit_response(svc.store, session, body.trial_id, body.answer)
        return {"status": status}

    @app.get("/sessions/{session_id}/report")
    def report(session_id: str, partial: bool = False):
        session = svc.get_session(session_id)
        return score_session(session, partial=partial).to_dict()

    @app.get("/images/{token}")
    def image(token: str):
        path = svc.tokens.get(token)
        if path is None or not Path(path).exists():
            raise HTTPException(status_code=404, detail="unknown image token")
        return FileResponse(path, media_type="image/png")

    return app


def serve(config: VttServiceConfig, host="127.0.0.1", port=8000, ui_dir=None):
    import uvicorn

    app = create_app(config)
    if ui_dir and Path(ui_dir).exists():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    uvicorn.run(app, host=host, port=port, log_level="warning")
