"""Scenario files: YAML documents with ``radio``, ``trigger``, ``plant``,
``disturbance`` and ``sim`` sections whose keys match the dataclass fields.

Only plain data is accepted (``yaml.safe_load``). ``radio: ideal`` selects the
zero-delay lossless link; a missing or null ``disturbance`` disables it.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np
import yaml

from .airtime import ConfigurationError, RadioConfig
from .plant import Disturbance, Mode, PlantConfig, TriggerConfig, powerful_mode, weak_mode
from .sim import ScenarioConfig

SECTIONS = ("radio", "trigger", "plant", "disturbance", "sim")
MODE_KEYS = ("A", "B", "K", "outflow", "valve_bias")
SIM_KEYS = ("horizon_s", "dt_ms", "sample_every_ms", "seed")


def _field_names(cls) -> tuple[str, ...]:
    return tuple(f.name for f in dataclasses.fields(cls))


def _check_keys(section: str, data, allowed) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{section}: expected a mapping, got {type(data).__name__}")
    for key in data:
        if key not in allowed:
            raise ConfigurationError(f"unknown key '{section}.{key}'")
    return data


def _build(section: str, cls, kwargs: dict):
    try:
        return cls(**kwargs)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{section}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{section}: {exc}") from None


def _mode(section: str, data, factory):
    data = _check_keys(section, data, MODE_KEYS)
    try:
        overrides = {k: np.asarray(v, dtype=float) for k, v in data.items()}
    except (TypeError, ValueError):
        raise ConfigurationError(f"{section}: matrix entries must be numbers") from None
    return _build(section, factory, overrides)


def scenario_from_dict(doc) -> ScenarioConfig:
    doc = _check_keys("scenario", doc, SECTIONS)

    radio_doc = doc.get("radio", {})
    if radio_doc == "ideal":
        radio = None
    else:
        radio = _build("radio", RadioConfig, _check_keys("radio", radio_doc, _field_names(RadioConfig)))

    trig = dict(_check_keys("trigger", doc.get("trigger"), _field_names(TriggerConfig)))
    if "safe_band" in trig:
        trig["safe_band"] = tuple(trig["safe_band"])
    trigger = _build("trigger", TriggerConfig, trig)

    plant_doc = dict(_check_keys("plant", doc.get("plant"), ("weak", "powerful", "setpoint", "initial_levels", "initial_mode")))
    plant_kw = {}
    plant_kw["weak"] = _mode("plant.weak", plant_doc.pop("weak", None), weak_mode)
    plant_kw["powerful"] = _mode("plant.powerful", plant_doc.pop("powerful", None), powerful_mode)
    for key in ("setpoint", "initial_levels"):
        if key in plant_doc:
            try:
                plant_kw[key] = tuple(float(v) for v in plant_doc.pop(key))
            except (TypeError, ValueError):
                raise ConfigurationError(f"plant.{key}: expected a list of numbers") from None
    if "initial_mode" in plant_doc:
        try:
            plant_kw["initial_mode"] = Mode(plant_doc.pop("initial_mode"))
        except ValueError:
            raise ConfigurationError("plant.initial_mode: expected 'weak' or 'powerful'") from None
    plant = _build("plant", PlantConfig, plant_kw)

    dist_doc = doc.get("disturbance")
    disturbance = None
    if dist_doc is not None:
        disturbance = _build(
            "disturbance", Disturbance, _check_keys("disturbance", dist_doc, _field_names(Disturbance))
        )

    sim_kw = _check_keys("sim", doc.get("sim"), SIM_KEYS)
    return _build(
        "sim",
        ScenarioConfig,
        dict(radio=radio, trigger=trigger, plant=plant, disturbance=disturbance, **sim_kw),
    )


def load_scenario(path) -> ScenarioConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not valid YAML ({exc.__class__.__name__})") from None
    return scenario_from_dict({} if doc is None else doc)
