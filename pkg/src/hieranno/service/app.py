"""HTTP front door for the experiment hub.

Thin adapters only: every operation delegates to `ExperimentHub`, which is
where validation and state live. Error mapping is uniform — gating
violations come back as 422 with the violation list, routing conflicts as
409, authorization problems as 403, unknown resources as 404.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware

from .. import sampling, scheme
from ..corpus import Comment
from ..errors import (
    AuthorizationError,
    CapacityError,
    HierannoError,
    IntegrityError,
    PendingAnnotatorsError,
    RoutingError,
    StoreError,
)
from ..experiment import AnnotatorProfile, ExperimentConfig, ExperimentHub
from . import schemas


def create_app(data_dir: str | Path, clock=None) -> FastAPI:
    app = FastAPI(title="hieranno annotation service", version="0.1.0")
    # The browser wizard is served separately from the API; this is a
    # no-auth local research tool, so any origin may call it.
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    hub = ExperimentHub(data_dir, clock=clock)
    app.state.hub = hub

    def get_experiment(experiment_id: str):
        try:
            return hub.get(experiment_id)
        except IntegrityError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/experiments", response_model=schemas.CreateExperimentResponse)
    def create_experiment(request: schemas.CreateExperimentRequest):
        config_data = request.config.model_dump()
        if config_data.get("binary_instruction") is None:
            config_data.pop("binary_instruction")
        try:
            config = ExperimentConfig.from_dict(config_data)
            comments = [Comment.from_dict(c.model_dump()) for c in request.comments]
            manifest = sampling.SampleManifest.from_dict(request.manifest.model_dump())
            registry = (
                scheme.ProtectedGroupRegistry.from_dict(request.registry.model_dump())
                if request.registry is not None
                else scheme.default_registry()
            )
            experiment = hub.create_experiment(config, comments, manifest, registry)
        except (ValueError, IntegrityError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return schemas.CreateExperimentResponse(
            experiment_id=config.experiment_id,
            items=len(experiment.manifest.selected_ids()),
            arms=dict(config.arm_sizes),
        )

    @app.post("/annotators", response_model=schemas.RegisterAnnotatorResponse)
    def register_annotator(request: schemas.RegisterAnnotatorRequest):
        experiment = get_experiment(request.experiment_id)
        profile = AnnotatorProfile(
            annotator_id=request.annotator_id,
            gender=request.gender,
            age_band=request.age_band,
            consent=request.consent,
        )
        try:
            arm = experiment.register_annotator(profile)
        except AuthorizationError as exc:
            raise HTTPException(status_code=403, detail=str(exc))
        except CapacityError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return schemas.RegisterAnnotatorResponse(
            annotator_id=request.annotator_id,
            arm=arm,
            items=len(experiment.manifest.selected_ids()),
        )

    @app.get("/tasks/next", response_model=schemas.NextTaskResponse)
    def next_task(
        annotator: str = Query(...), experiment: str = Query(...)
    ):
        exp = get_experiment(experiment)
        try:
            return exp.next_task(annotator)
        except AuthorizationError as exc:
            raise HTTPException(status_code=403, detail=str(exc))

    @app.post("/annotations", response_model=schemas.SubmitResponse)
    def submit_annotation(request: schemas.SubmitRequest):
        exp = get_experiment(request.experiment_id)
        try:
            result = exp.submit(
                request.annotator_id,
                request.comment_id,
                request.question,
                request.answer,
            )
        except AuthorizationError as exc:
            raise HTTPException(status_code=403, detail=str(exc))
        except RoutingError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except (ValueError, StoreError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        if not result.get("accepted", False):
            raise HTTPException(
                status_code=422, detail={"violations": result.get("violations", [])}
            )
        return result

    @app.get("/experiments/{experiment_id}")
    def experiment_status(experiment_id: str):
        return get_experiment(experiment_id).status()

    @app.get("/registry")
    def registry_names(experiment: str = Query(...)):
        """Group-name autocomplete for the UI. Deliberately omits the
        protection flags so annotators are not primed by them."""
        exp = get_experiment(experiment)
        return {"names": exp.registry.names()}

    @app.get("/reports/{experiment_id}")
    def report(experiment_id: str, force: bool = False):
        exp = get_experiment(experiment_id)
        try:
            return exp.report(force=force)
        except PendingAnnotatorsError as exc:
            raise HTTPException(
                status_code=409, detail={"pending": exc.pending, "message": str(exc)}
            )
        except IntegrityError as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.get("/export", response_model=schemas.ExportResponse)
    def export(
        experiment: str = Query(...), fmt: str = Query("jsonl", pattern="^(jsonl|csv)$")
    ):
        exp = get_experiment(experiment)
        with tempfile.TemporaryDirectory() as tmp:
            out = Path(tmp) / "export"
            manifest = exp.export(out, format=fmt)
            files = {
                path.name: path.read_text(encoding="utf-8")
                for path in sorted(out.iterdir())
            }
        return schemas.ExportResponse(manifest=manifest, files=files)

    @app.exception_handler(HierannoError)
    def domain_error_handler(request, exc: HierannoError):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=409, content={"detail": str(exc)})

    return app
