"""Observation CSV files and run configuration.

Observation files carry one claim and the header
``t,price,v_prime,at_report_date,face,maturity``. Floats are written with
``repr`` so a write/read cycle is lossless.

Run configuration is a flat ``key = value`` file (an optional ``[run]``
section header is accepted). Keys spell out their units. Any key can be
overridden by an environment variable ``HYBRIDMERTON_<KEY>``.
"""

from __future__ import annotations

import configparser
import csv
import math
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .calibration import MarketObservation
from .exceptions import ValidationError
from .model import DebtClaim, ModelParams, ReportSchedule

OBS_HEADER = ("t", "price", "v_prime", "at_report_date", "face", "maturity")
ENV_PREFIX = "HYBRIDMERTON_"


class ObservationParseError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


def _parse_flag(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes"):
        return True
    if value in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def read_observations(path) -> list[MarketObservation]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != OBS_HEADER:
            raise ObservationParseError(f"{path}:1: expected header {','.join(OBS_HEADER)}")
        observations = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(OBS_HEADER):
                raise ObservationParseError(
                    f"{path}:{line}: expected {len(OBS_HEADER)} fields, got {len(row)}")
            try:
                t, price, v_prime = (float(x) for x in row[:3])
                flag = _parse_flag(row[3])
                claim = DebtClaim(float(row[4]), float(row[5]))
                observations.append(MarketObservation(t, price, flag, claim, v_prime))
            except (ValueError, ValidationError) as exc:
                raise ObservationParseError(f"{path}:{line}: {exc}") from exc
    if not observations:
        raise ObservationParseError(f"{path}: no observations")
    claims = {o.claim for o in observations}
    if len(claims) > 1:
        raise ObservationParseError(f"{path}: one claim per file, found {len(claims)}")
    return observations


def write_observations(path, observations) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(OBS_HEADER)
        for o in observations:
            writer.writerow([repr(o.t), repr(o.price), repr(o.v_prime_observed),
                             int(o.at_report_date), repr(o.claim.face), repr(o.claim.maturity)])


def write_table(path, header, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([_fmt(v) for v in row] for row in rows)


def _fmt(value):
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, float):
        return repr(value)
    return value


# -- configuration -------------------------------------------------------------------------


def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


@dataclass(frozen=True)
class RunConfig:
    v0: float | None = None
    mu_per_year: float | None = None
    sigma_per_sqrt_year: float | None = None
    r_per_year: float | None = None
    rho: float | None = None
    report_dates_years: tuple[float, ...] | None = None
    face: float | None = None
    maturity_years: float | None = None
    valuation_times_years: tuple[float, ...] = ()
    v_prime: tuple[float, ...] = ()
    observation_times_years: tuple[float, ...] = ()
    grid_step_years: float = 0.25
    n_paths: int = 10_000
    seed: int = 0
    noise_rel_sd: float = 0.0

    _PARSERS = {
        "report_dates_years": _floats,
        "valuation_times_years": _floats,
        "v_prime": _floats,
        "observation_times_years": _floats,
        "n_paths": int,
        "seed": int,
    }

    @classmethod
    def from_mapping(cls, mapping) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        values = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                values[key] = cls._PARSERS.get(key, float)(str(raw))
            except ValueError as exc:
                raise ConfigError(f"config key {key!r}: {exc}") from exc
        cfg = cls(**values)
        cfg._check()
        return cfg

    @classmethod
    def load(cls, path=None, environ=None) -> "RunConfig":
        mapping = {}
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"config file not found: {path}")
            text = path.read_text()
            parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
            if not text.lstrip().startswith("["):
                text = "[run]\n" + text
            try:
                parser.read_string(text, source=str(path))
            except configparser.Error as exc:
                raise ConfigError(f"{path}: {exc}") from exc
            for section in parser.sections():
                mapping.update(parser[section])
        environ = os.environ if environ is None else environ
        for key in (f.name for f in fields(cls)):
            env_key = ENV_PREFIX + key.upper()
            if env_key in environ:
                mapping[key] = environ[env_key]
        return cls.from_mapping(mapping)

    def _check(self):
        for name in ("grid_step_years", "noise_rel_sd"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0 or (name == "grid_step_years" and value == 0):
                raise ConfigError(f"{name} must be positive, got {value!r}")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be >= 1")

    def require(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigError(f"missing config key(s): {', '.join(missing)}")

    def model_params(self, rho=None) -> ModelParams:
        self.require("v0", "mu_per_year", "sigma_per_sqrt_year", "r_per_year", "rho")
        try:
            return ModelParams(self.v0, self.mu_per_year, self.sigma_per_sqrt_year,
                               self.r_per_year, self.rho if rho is None else rho)
        except ValidationError as exc:
            raise ConfigError(f"model parameters: {exc}") from exc

    def schedule(self) -> ReportSchedule:
        self.require("report_dates_years")
        try:
            return ReportSchedule(self.report_dates_years)
        except ValidationError as exc:
            raise ConfigError(f"report_dates_years: {exc}") from exc

    def claim(self) -> DebtClaim:
        self.require("face", "maturity_years")
        try:
            return DebtClaim(self.face, self.maturity_years).check(self.schedule())
        except ConfigError:
            raise
        except ValidationError as exc:
            raise ConfigError(f"face/maturity_years: {exc}") from exc
