"""Request/response bodies for the HTTP API."""

from typing import Any

from pydantic import BaseModel, Field


class CompositionCreate(BaseModel):
    kind: str | None = None  # overrides the config's kind
    config: dict[str, Any] | None = None  # inline stack config
    config_path: str | None = None  # or a YAML file on the server
    realtime: bool = False  # pace virtual time against the wall clock


class CompositionInfo(BaseModel):
    id: str
    kind: str
    realtime: bool
    virtual_time_ns: int
    nodes: list[str]


class CompositionStats(CompositionInfo):
    stats: dict[str, Any]


class AdvanceRequest(BaseModel):
    seconds: float = Field(gt=0, le=3600)


class AdvanceResponse(BaseModel):
    virtual_time_ns: int


class CommandRequest(BaseModel):
    steering_angle_deg: float = 0.0
    speed: float = Field(default=0.0, ge=0.0, le=1.0)
    direction: str = "forward"


class CommandResponse(BaseModel):
    sequence: int
    virtual_time_ns: int


class PoseResponse(BaseModel):
    side: str
    x_m: float
    y_m: float
    heading_rad: float


class StatusInject(BaseModel):
    """Raw DriveStatus fed straight to the twin bus (digital-model input)."""

    motor_left_pulse: int = Field(ge=0, le=4095)
    motor_right_pulse: int = Field(ge=0, le=4095)
    motor_left_dir: int = Field(ge=0, le=1)
    motor_right_dir: int = Field(ge=0, le=1)
    steering_pulse: int = Field(ge=500, le=2500)


class TrialReportModel(BaseModel):
    index: int
    duration_s: float
    distance_m: float
    target_m: float
    deviation_m: float
    tolerance_m: float
    noise: bool
    passed: bool


class TrialRequest(BaseModel):
    kind: str | None = None
    config: dict[str, Any] | None = None
    config_path: str | None = None
    repetitions: int = Field(default=10, ge=1, le=1000)
    duration_s: float = Field(default=1.45, ge=0)
    noise: bool = True
    target_m: float = 1.0
    stop_delay_s: float = Field(default=0.0, ge=0)


class TrialResponse(BaseModel):
    reports: list[TrialReportModel]
    all_passed: bool


class CalibrationRequest(BaseModel):
    kind: str | None = None
    config: dict[str, Any] | None = None
    config_path: str | None = None
    target_m: float = 1.0
    duration_s: float = 1.45
    persist: bool = False  # write the factor back into config_path


class CalibrationResponse(BaseModel):
    velocity_factor: float
    iterations: int
    residual_m: float
    validation: list[TrialReportModel]
    mean_deviation_m: float
    min_deviation_m: float
    max_deviation_m: float
    persisted: bool


class SuiteCheckModel(BaseModel):
    name: str
    passed: bool
    detail: str
    duration_s: float


class SuiteRequest(BaseModel):
    config: dict[str, Any] | None = None
    config_path: str | None = None
    inject_fault: str | None = None


class SuiteResponse(BaseModel):
    ok: bool
    fault_injection: str | None
    checks: list[SuiteCheckModel]


class ManifestRequest(BaseModel):
    path: str


class ManifestResponse(BaseModel):
    ok: bool
    checked_files: int
    errors: list[str]
    warnings: list[str]
    completeness: dict[str, bool]


class HealthResponse(BaseModel):
    status: str
    version: str
    compositions: int
