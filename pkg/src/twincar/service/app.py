"""HTTP facade over compositions, experiments, the suite, and manifests.

Compositions are created per client request, held in an in-process registry
keyed by short ids, and advanced either explicitly (virtual time) or by a
wall-clock pump (``realtime: true``). Experiment and suite endpoints build
ephemeral stacks and tear them down before responding.
"""

import threading
import uuid
from contextlib import asynccontextmanager
from typing import Any, AsyncIterator

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from ..config import StackConfig, load_config, set_velocity_factor
from ..drivers import DriveStatus
from ..errors import (
    CalibrationError,
    CompositionError,
    ConfigError,
    ManifestError,
    TwinError,
)
from ..experiment import calibrate_velocity_factor, run_one_meter_trial
from ..manifest import validate_manifest_file
from ..protocol import DRIVE_STATUS_TOPIC
from ..suite import run_integration_suite
from ..twin import Composition, assemble
from . import schemas

API_VERSION = "0.1.0"


def _resolve_config(
    inline: dict[str, Any] | None, path: str | None, kind: str | None
) -> StackConfig:
    if inline is not None and path is not None:
        raise ConfigError("provide either an inline config or a config_path, not both")
    if path is not None:
        config = load_config(path)
    elif inline is not None:
        config = StackConfig.from_dict(inline)
    else:
        config = StackConfig()
    if kind is not None:
        config = StackConfig.from_dict({**config.to_dict(), "kind": kind})
    return config


def _trial_models(reports: list) -> list[schemas.TrialReportModel]:
    return [schemas.TrialReportModel(**report.to_dict()) for report in reports]


def create_app() -> FastAPI:
    compositions: dict[str, Composition] = {}
    lock = threading.Lock()

    @asynccontextmanager
    async def lifespan(_app: FastAPI) -> AsyncIterator[None]:
        yield
        with lock:
            running = list(compositions.values())
            compositions.clear()
        for comp in running:
            comp.shutdown()

    app = FastAPI(title="twincar", version=API_VERSION, lifespan=lifespan)
    app.state.compositions = compositions

    def get_composition(composition_id: str) -> Composition:
        try:
            return compositions[composition_id]
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no composition {composition_id!r}") from None

    def info(composition_id: str, comp: Composition) -> schemas.CompositionInfo:
        return schemas.CompositionInfo(
            id=composition_id,
            kind=comp.kind.value,
            realtime=comp.realtime,
            virtual_time_ns=comp.clock.now_ns,
            nodes=sorted(comp.node_names()),
        )

    @app.exception_handler(ConfigError)
    async def config_error(_request: Request, exc: ConfigError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(ManifestError)
    async def manifest_error(_request: Request, exc: ManifestError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(CompositionError)
    async def composition_error(_request: Request, exc: CompositionError) -> JSONResponse:
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(CalibrationError)
    async def calibration_error(_request: Request, exc: CalibrationError) -> JSONResponse:
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(TwinError)
    async def twin_error(_request: Request, exc: TwinError) -> JSONResponse:
        return JSONResponse(status_code=500, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(
            status="ok", version=API_VERSION, compositions=len(compositions)
        )

    @app.post("/compositions", response_model=schemas.CompositionInfo, status_code=201)
    def create_composition(request: schemas.CompositionCreate) -> schemas.CompositionInfo:
        config = _resolve_config(request.config, request.config_path, request.kind)
        comp = assemble(config=config)
        composition_id = uuid.uuid4().hex[:8]
        with lock:
            compositions[composition_id] = comp
        if request.realtime:
            comp.start_realtime()
        return info(composition_id, comp)

    @app.get("/compositions", response_model=list[schemas.CompositionInfo])
    def list_compositions() -> list[schemas.CompositionInfo]:
        with lock:
            return [info(cid, comp) for cid, comp in compositions.items()]

    @app.get("/compositions/{composition_id}", response_model=schemas.CompositionStats)
    def composition_stats(composition_id: str) -> schemas.CompositionStats:
        comp = get_composition(composition_id)
        base = info(composition_id, comp)
        return schemas.CompositionStats(**base.model_dump(), stats=comp.stats())

    @app.delete("/compositions/{composition_id}", status_code=204)
    def delete_composition(composition_id: str) -> None:
        comp = get_composition(composition_id)
        with lock:
            compositions.pop(composition_id, None)
        comp.shutdown()

    @app.post("/compositions/{composition_id}/advance", response_model=schemas.AdvanceResponse)
    def advance(composition_id: str, request: schemas.AdvanceRequest) -> schemas.AdvanceResponse:
        comp = get_composition(composition_id)
        if comp.realtime:
            raise CompositionError("composition runs in real time; cannot advance manually")
        comp.advance(request.seconds)
        return schemas.AdvanceResponse(virtual_time_ns=comp.clock.now_ns)

    @app.post("/compositions/{composition_id}/command", response_model=schemas.CommandResponse)
    def command(composition_id: str, request: schemas.CommandRequest) -> schemas.CommandResponse:
        comp = get_composition(composition_id)
        try:
            sequence = comp.send_command(request.steering_angle_deg, request.speed, request.direction)
        except TwinError as exc:
            raise CompositionError(str(exc)) from exc
        return schemas.CommandResponse(sequence=sequence, virtual_time_ns=comp.clock.now_ns)

    @app.get("/compositions/{composition_id}/pose", response_model=schemas.PoseResponse)
    def pose(composition_id: str, side: str = "pt") -> schemas.PoseResponse:
        comp = get_composition(composition_id)
        x, y, heading = comp.pose(side)
        return schemas.PoseResponse(side=side, x_m=x, y_m=y, heading_rad=heading)

    @app.post("/compositions/{composition_id}/status", response_model=schemas.CommandResponse)
    def inject_status(composition_id: str, request: schemas.StatusInject) -> schemas.CommandResponse:
        """Feed a DriveStatus to the twin bus — how a digital model is driven
        when no vehicle is attached."""
        comp = get_composition(composition_id)
        if comp.dt_bus is None:
            raise CompositionError(f"{comp.kind.value} has no twin-side bus")
        status = DriveStatus(**request.model_dump(), timestamp_ns=comp.clock.now_ns)
        sequence = comp.dt_bus.publish(DRIVE_STATUS_TOPIC, status.to_record())
        return schemas.CommandResponse(sequence=sequence, virtual_time_ns=comp.clock.now_ns)

    @app.post("/experiments/trials", response_model=schemas.TrialResponse)
    def trials(request: schemas.TrialRequest) -> schemas.TrialResponse:
        config = _resolve_config(request.config, request.config_path, request.kind)
        with assemble(config=config) as comp:
            reports = run_one_meter_trial(
                comp,
                duration_s=request.duration_s,
                repetitions=request.repetitions,
                noise=request.noise,
                target_m=request.target_m,
                stop_delay_s=request.stop_delay_s,
            )
        return schemas.TrialResponse(
            reports=_trial_models(reports), all_passed=all(r.passed for r in reports)
        )

    @app.post("/experiments/calibration", response_model=schemas.CalibrationResponse)
    def calibration(request: schemas.CalibrationRequest) -> schemas.CalibrationResponse:
        config = _resolve_config(request.config, request.config_path, request.kind)
        with assemble(config=config) as comp:
            result = calibrate_velocity_factor(
                comp, target_m=request.target_m, duration_s=request.duration_s
            )
        persisted = False
        if request.persist:
            if request.config_path is None:
                raise ConfigError("persist requires config_path")
            set_velocity_factor(request.config_path, result.velocity_factor)
            persisted = True
        return schemas.CalibrationResponse(
            velocity_factor=result.velocity_factor,
            iterations=result.iterations,
            residual_m=result.residual_m,
            validation=_trial_models(list(result.trials)),
            mean_deviation_m=result.mean_deviation_m,
            min_deviation_m=result.min_deviation_m,
            max_deviation_m=result.max_deviation_m,
            persisted=persisted,
        )

    @app.post("/suite", response_model=schemas.SuiteResponse)
    def suite(request: schemas.SuiteRequest) -> schemas.SuiteResponse:
        config = _resolve_config(request.config, request.config_path, None)
        try:
            report = run_integration_suite(config, inject_fault=request.inject_fault)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return schemas.SuiteResponse(
            ok=report.ok,
            fault_injection=report.fault_injection,
            checks=[schemas.SuiteCheckModel(**check.to_dict()) for check in report.checks],
        )

    @app.post("/manifest/validation", response_model=schemas.ManifestResponse)
    def manifest_validation(request: schemas.ManifestRequest) -> schemas.ManifestResponse:
        report = validate_manifest_file(request.path)
        return schemas.ManifestResponse(
            ok=report.ok,
            checked_files=report.checked_files,
            errors=report.errors,
            warnings=report.warnings,
            completeness=report.manifest.completeness(),
        )

    return app
