"""
Run configuration documents.

A run configuration is a dotenv-syntax KEY=value document. Keys are
SECTION_FIELD names from KEY_TABLE below; values are read with
python-dotenv and validated by the pydantic models in this module.

Key                         Default        Meaning
GRID_EXTENTS                (required)     comma list of side lengths, 1 or 2 entries
GRID_CELLS                  (required)     comma list of vertex counts per axis
MOTILITY_FAMILY             (required)     exponential | inverse_power | constant | hill
MOTILITY_ALPHA              1.0            exponential / inverse_power rate
MOTILITY_EPSILON            1.0            inverse_power offset
MOTILITY_C                  1.0            constant value
MOTILITY_K, MOTILITY_M      1.0, 3.0       hill scale and exponent
MU                          (required)     logistic rate
U0_PRESET                   (required)     constant | cosine_bump | random_smooth
U0_VALUE                    1.0            mean level
U0_AMPLITUDE                0.5            perturbation amplitude
U0_WAVENUMBER               1              cosine_bump wavenumber
U0_MODES                    6              random_smooth highest mode
SCHEME_FORM                 conservative   conservative | non_divergence
SCHEME_REGULARIZATION_N     (empty)        n of the regularized scheme
SCHEME_CFL_SAFETY           0.5
SCHEME_T_END                1.0
SCHEME_OUTPUT_STRIDE        100
SCHEME_FIXED_DT             (empty)        forces an exact time grid
SCHEME_LP_POWER             4.0            p of the recorded int u^p
ELLIPTIC_TOL                1e-10
ELLIPTIC_METHOD             cg             cg | direct
ENVELOPE_MODE               auto           auto | explicit
ENVELOPE_DELTA              0.01           auto straddle margin
ENVELOPE_LO, ENVELOPE_HI    (empty)        explicit start
ENVELOPE_SOURCE             measured       measured | closed_bound | zero
ENVELOPE_DT                 0.001
DIAGNOSTICS_TOL_FACTOR      10.0           C in C (h^2 + dt)
DIAGNOSTICS_T_CHECK         (empty)        defaults to SCHEME_T_END
DIAGNOSTICS_EPS             0.001
DIAGNOSTICS_GAP_AFTER       1.0
DIAGNOSTICS_C_OMEGA_SAFETY  1.5
DIAGNOSTICS_SAMPLES         64             domain-constant samples
DIAGNOSTICS_AUDIT_S_MAX     50.0
DIAGNOSTICS_AUDIT_POINTS    1000000
DIAGNOSTICS_LP_DT           0.001
DIAGNOSTICS_REGULARIZATION_NS (empty)      comma list; enables the regularization family check
DIAGNOSTICS_REGULARIZATION_EPS 0.001
RUN_SEED                    0
RUN_OUT                     runs/default
"""

from __future__ import annotations

import logging
from io import StringIO
from typing import Any, Dict, List, Optional, Tuple

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from common.env_utils import describe_duplicates, duplicates_from, scan_text
from common.logging_utils import log_event
from runner.initial_data import auto_envelope, build_initial_data
from solver.errors import ConfigParseError, ConfigurationError
from solver.grid import Field as GridField
from solver.grid import Grid
from solver.motility import MotilityFamily, MotilityFunction
from solver.pde import SchemeConfig, SchemeForm

logger = logging.getLogger(__name__)

_FROZEN = ConfigDict(extra="forbid", frozen=True)


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return tuple(part.strip() for part in value.split(",") if part.strip())
    return value


def _blank_to_none(value: Any) -> Any:
    if isinstance(value, str) and not value.strip():
        return None
    return value


class GridSpec(BaseModel):
    model_config = _FROZEN

    extents: Tuple[float, ...]
    cells: Tuple[int, ...]

    @field_validator("extents", "cells", mode="before")
    @classmethod
    def _split(cls, value: Any) -> Any:
        return _split_list(value)

    @model_validator(mode="after")
    def _check_grid(self) -> "GridSpec":
        try:
            self.build()
        except ConfigurationError as exc:
            raise ValueError(str(exc)) from exc
        return self

    def build(self) -> Grid:
        return Grid(self.extents, self.cells)


class MotilitySpec(BaseModel):
    model_config = _FROZEN

    family: MotilityFamily
    alpha: float = 1.0
    epsilon: float = 1.0
    c: float = 1.0
    k: float = 1.0
    m: float = 3.0

    @field_validator("family")
    @classmethod
    def _no_custom(cls, family: MotilityFamily) -> MotilityFamily:
        if family is MotilityFamily.CUSTOM:
            raise ValueError("custom motilities are only available from Python")
        return family

    @model_validator(mode="after")
    def _check_params(self) -> "MotilitySpec":
        try:
            self.build()
        except ConfigurationError as exc:
            raise ValueError(str(exc)) from exc
        return self

    def build(self) -> MotilityFunction:
        return MotilityFunction.from_spec(
            self.family.value, alpha=self.alpha, epsilon=self.epsilon, c=self.c, k=self.k, m=self.m
        )


class InitialDataSpec(BaseModel):
    model_config = _FROZEN

    preset: str
    value: float = 1.0
    amplitude: float = 0.5
    wavenumber: int = Field(1, ge=0)
    modes: int = Field(6, ge=1)


class SchemeSpec(BaseModel):
    model_config = _FROZEN

    form: SchemeForm = SchemeForm.CONSERVATIVE
    regularization_n: Optional[int] = Field(None, ge=1)
    cfl_safety: float = Field(0.5, gt=0.0, le=1.0)
    t_end: float = Field(1.0, gt=0.0)
    output_stride: int = Field(100, ge=1)
    fixed_dt: Optional[float] = Field(None, gt=0.0)
    lp_power: float = Field(4.0, ge=1.0)

    @field_validator("regularization_n", "fixed_dt", mode="before")
    @classmethod
    def _blank(cls, value: Any) -> Any:
        return _blank_to_none(value)


class EllipticSpec(BaseModel):
    model_config = _FROZEN

    tol: float = Field(1e-10, gt=0.0)
    method: str = "cg"

    @field_validator("method")
    @classmethod
    def _check_method(cls, method: str) -> str:
        if method not in ("cg", "direct"):
            raise ValueError(f"method must be cg or direct, got {method!r}")
        return method


class EnvelopeSpec(BaseModel):
    model_config = _FROZEN

    mode: str = "auto"
    delta: float = Field(0.01, ge=0.0)
    lo: Optional[float] = None
    hi: Optional[float] = None
    source: str = "measured"
    dt: float = Field(1e-3, gt=0.0)

    @field_validator("lo", "hi", mode="before")
    @classmethod
    def _blank(cls, value: Any) -> Any:
        return _blank_to_none(value)

    @model_validator(mode="after")
    def _check_mode(self) -> "EnvelopeSpec":
        if self.mode not in ("auto", "explicit"):
            raise ValueError(f"mode must be auto or explicit, got {self.mode!r}")
        if self.source not in ("measured", "closed_bound", "zero"):
            raise ValueError(f"source must be measured, closed_bound or zero, got {self.source!r}")
        if self.mode == "explicit":
            if self.lo is None or self.hi is None:
                raise ValueError("explicit envelopes need both lo and hi")
            if not (0.0 < self.lo <= 1.0 <= self.hi):
                raise ValueError(f"explicit envelope must satisfy 0 < lo <= 1 <= hi, got ({self.lo}, {self.hi})")
        return self


class DiagnosticsSpec(BaseModel):
    model_config = _FROZEN

    tol_factor: float = Field(10.0, gt=0.0)
    t_check: Optional[float] = Field(None, ge=0.0)
    eps: float = Field(1e-3, gt=0.0)
    gap_after: float = Field(1.0, ge=0.0)
    c_omega_safety: float = Field(1.5, ge=1.0)
    samples: int = Field(64, ge=1)
    audit_s_max: float = Field(50.0, gt=0.0)
    audit_points: int = Field(1_000_000, ge=1_000)
    lp_dt: float = Field(1e-3, gt=0.0)
    regularization_ns: Tuple[int, ...] = ()
    regularization_eps: float = Field(1e-3, gt=0.0)

    @field_validator("t_check", mode="before")
    @classmethod
    def _blank(cls, value: Any) -> Any:
        return _blank_to_none(value)

    @field_validator("regularization_ns", mode="before")
    @classmethod
    def _split(cls, value: Any) -> Any:
        return _split_list(value)

    @field_validator("regularization_ns")
    @classmethod
    def _check_ns(cls, ns: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(n < 1 for n in ns):
            raise ValueError("regularization n values must be >= 1")
        return ns


class RunConfig(BaseModel):
    model_config = _FROZEN

    grid: GridSpec
    motility: MotilitySpec
    mu: float = Field(..., gt=0.0)
    u0: InitialDataSpec
    scheme: SchemeSpec = SchemeSpec()
    elliptic: EllipticSpec = EllipticSpec()
    envelope: EnvelopeSpec = EnvelopeSpec()
    diagnostics: DiagnosticsSpec = DiagnosticsSpec()
    seed: int = 0
    out: str = "runs/default"

    @model_validator(mode="after")
    def _check_initial_data(self) -> "RunConfig":
        try:
            u0 = self.build_u0()
            self.envelope_start(u0)
        except ConfigurationError as exc:
            raise ValueError(str(exc)) from exc
        return self

    # ---------- builders ----------

    def build_grid(self) -> Grid:
        return self.grid.build()

    def build_gamma(self) -> MotilityFunction:
        return self.motility.build()

    def build_u0(self) -> GridField:
        spec = self.u0
        return build_initial_data(
            self.build_grid(),
            spec.preset,
            value=spec.value,
            amplitude=spec.amplitude,
            wavenumber=spec.wavenumber,
            modes=spec.modes,
            seed=self.seed,
        )

    def scheme_config(self) -> SchemeConfig:
        s = self.scheme
        return SchemeConfig(
            form=s.form,
            regularization_n=s.regularization_n,
            cfl_safety=s.cfl_safety,
            t_end=s.t_end,
            output_stride=s.output_stride,
            fixed_dt=s.fixed_dt,
            elliptic_tol=self.elliptic.tol,
            elliptic_method=self.elliptic.method,
            lp_power=s.lp_power,
        )

    def envelope_start(self, u0: Optional[GridField] = None) -> Tuple[float, float]:
        if self.envelope.mode == "explicit":
            return float(self.envelope.lo), float(self.envelope.hi)
        return auto_envelope(u0 if u0 is not None else self.build_u0(), self.envelope.delta)

    @property
    def t_check(self) -> float:
        t = self.diagnostics.t_check
        return self.scheme.t_end if t is None else t


# (key, section, field, default); None default means required.
KEY_TABLE: List[Tuple[str, Optional[str], str, Optional[str]]] = [
    ("GRID_EXTENTS", "grid", "extents", None),
    ("GRID_CELLS", "grid", "cells", None),
    ("MOTILITY_FAMILY", "motility", "family", None),
    ("MOTILITY_ALPHA", "motility", "alpha", "1.0"),
    ("MOTILITY_EPSILON", "motility", "epsilon", "1.0"),
    ("MOTILITY_C", "motility", "c", "1.0"),
    ("MOTILITY_K", "motility", "k", "1.0"),
    ("MOTILITY_M", "motility", "m", "3.0"),
    ("MU", None, "mu", None),
    ("U0_PRESET", "u0", "preset", None),
    ("U0_VALUE", "u0", "value", "1.0"),
    ("U0_AMPLITUDE", "u0", "amplitude", "0.5"),
    ("U0_WAVENUMBER", "u0", "wavenumber", "1"),
    ("U0_MODES", "u0", "modes", "6"),
    ("SCHEME_FORM", "scheme", "form", "conservative"),
    ("SCHEME_REGULARIZATION_N", "scheme", "regularization_n", ""),
    ("SCHEME_CFL_SAFETY", "scheme", "cfl_safety", "0.5"),
    ("SCHEME_T_END", "scheme", "t_end", "1.0"),
    ("SCHEME_OUTPUT_STRIDE", "scheme", "output_stride", "100"),
    ("SCHEME_FIXED_DT", "scheme", "fixed_dt", ""),
    ("SCHEME_LP_POWER", "scheme", "lp_power", "4.0"),
    ("ELLIPTIC_TOL", "elliptic", "tol", "1e-10"),
    ("ELLIPTIC_METHOD", "elliptic", "method", "cg"),
    ("ENVELOPE_MODE", "envelope", "mode", "auto"),
    ("ENVELOPE_DELTA", "envelope", "delta", "0.01"),
    ("ENVELOPE_LO", "envelope", "lo", ""),
    ("ENVELOPE_HI", "envelope", "hi", ""),
    ("ENVELOPE_SOURCE", "envelope", "source", "measured"),
    ("ENVELOPE_DT", "envelope", "dt", "0.001"),
    ("DIAGNOSTICS_TOL_FACTOR", "diagnostics", "tol_factor", "10.0"),
    ("DIAGNOSTICS_T_CHECK", "diagnostics", "t_check", ""),
    ("DIAGNOSTICS_EPS", "diagnostics", "eps", "0.001"),
    ("DIAGNOSTICS_GAP_AFTER", "diagnostics", "gap_after", "1.0"),
    ("DIAGNOSTICS_C_OMEGA_SAFETY", "diagnostics", "c_omega_safety", "1.5"),
    ("DIAGNOSTICS_SAMPLES", "diagnostics", "samples", "64"),
    ("DIAGNOSTICS_AUDIT_S_MAX", "diagnostics", "audit_s_max", "50.0"),
    ("DIAGNOSTICS_AUDIT_POINTS", "diagnostics", "audit_points", "1000000"),
    ("DIAGNOSTICS_LP_DT", "diagnostics", "lp_dt", "0.001"),
    ("DIAGNOSTICS_REGULARIZATION_NS", "diagnostics", "regularization_ns", ""),
    ("DIAGNOSTICS_REGULARIZATION_EPS", "diagnostics", "regularization_eps", "0.001"),
    ("RUN_SEED", None, "seed", "0"),
    ("RUN_OUT", None, "out", "runs/default"),
]

_BY_KEY = {key: (section, name) for key, section, name, _ in KEY_TABLE}
_BY_LOCATION = {(section, name): key for key, section, name, _ in KEY_TABLE}
REQUIRED_KEYS = tuple(key for key, _, _, default in KEY_TABLE if default is None)


def _fail(message: str, *, line: Optional[int] = None, key: Optional[str] = None) -> ConfigParseError:
    log_event(logger, "config_parse_failed", level=logging.WARNING, line=line, key=key, reason=message)
    return ConfigParseError(message, line=line, key=key)


def _nest(values: Dict[str, str]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for key, value in values.items():
        section, name = _BY_KEY[key]
        target = nested if section is None else nested.setdefault(section, {})
        if value == "" and key not in REQUIRED_KEYS:
            continue
        target[name] = value
    return nested


def _key_for_error(loc: Tuple[Any, ...]) -> Optional[str]:
    if not loc:
        return None
    if len(loc) >= 2 and (loc[0], loc[1]) in _BY_LOCATION:
        return _BY_LOCATION[(loc[0], loc[1])]
    if (None, loc[0]) in _BY_LOCATION:
        return _BY_LOCATION[(None, loc[0])]
    section_keys = [key for key, section, _, _ in KEY_TABLE if section == loc[0]]
    return section_keys[0] if section_keys else None


def parse_config(text: str, *, overrides: Optional[Dict[str, str]] = None) -> RunConfig:
    """Parse and validate a run configuration document.

    overrides replace document values by key (CLI flags such as --seed).
    Errors carry the offending line when one exists.
    """
    seen, malformed = scan_text(text)
    if malformed:
        first = malformed[0]
        raise _fail(f"expected KEY=value, got {first.text!r}", line=first.line)
    duplicates = duplicates_from(seen)
    if duplicates:
        first = duplicates[0]
        raise _fail(f"duplicate keys: {describe_duplicates(duplicates)}", line=first.lines[1], key=first.key)
    lines = {key: numbers[0] for key, numbers in seen.items()}
    for key, line in sorted(lines.items(), key=lambda item: item[1]):
        if key not in _BY_KEY:
            raise _fail(f"unknown key {key}", line=line, key=key)

    values = {key: ("" if value is None else value) for key, value in dotenv_values(stream=StringIO(text)).items()}
    for key, value in (overrides or {}).items():
        if key not in _BY_KEY:
            raise _fail(f"unknown override key {key}", key=key)
        values[key] = value
    missing = [key for key in REQUIRED_KEYS if not str(values.get(key, "")).strip()]
    if missing:
        raise _fail(f"missing required keys: {', '.join(missing)}", key=missing[0])

    try:
        return RunConfig.model_validate(_nest(values))
    except ValidationError as exc:
        error = exc.errors()[0]
        key = _key_for_error(tuple(error.get("loc", ())))
        message = error.get("msg", "invalid value")
        if key is not None:
            message = f"{key}: {message}"
        raise _fail(message, line=lines.get(key), key=key) from exc


def _render_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(_render_value(v) for v in value)
    if hasattr(value, "value") and not isinstance(value, (int, float)):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_config(cfg: RunConfig) -> str:
    """Fully resolved document; parse_config(render_config(cfg)) == cfg."""
    dumped = {
        "grid": cfg.grid,
        "motility": cfg.motility,
        "u0": cfg.u0,
        "scheme": cfg.scheme,
        "elliptic": cfg.elliptic,
        "envelope": cfg.envelope,
        "diagnostics": cfg.diagnostics,
    }
    lines = []
    for key, section, name, _ in KEY_TABLE:
        value = getattr(cfg, name) if section is None else getattr(dumped[section], name)
        lines.append(f"{key}={_render_value(value)}")
    return "\n".join(lines) + "\n"


def load_config(path, *, overrides: Optional[Dict[str, str]] = None) -> RunConfig:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_config(handle.read(), overrides=overrides)
