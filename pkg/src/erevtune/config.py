"""Global configuration.

One YAML file configures every stage; the CLI reads it from ``--config``,
the ``EREVTUNE_CONFIG`` environment variable, or falls back to built-in
defaults. Per-vehicle overrides patch individual vehicle parameters on top
of the shared set. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .bayes import PriorSpec
from .errors import ConfigError
from .optimize import LsetSearchConfig
from .preprocess import PreprocessConfig
from .vehicle import VehicleParams

ENV_VAR = "EREVTUNE_CONFIG"


@dataclass(frozen=True)
class GlobalConfig:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    vehicle_overrides: dict[str, dict[str, Any]] = field(default_factory=dict)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    search: LsetSearchConfig = field(default_factory=LsetSearchConfig)
    prior: PriorSpec = field(default_factory=PriorSpec)
    baseline_l_set: float = 100.0
    confidence: float = 0.99
    posterior_dir: Path = Path("posterior_store")
    report_dir: Path = Path("reports")
    trip_dir: Path = Path("trips")
    columns: dict[str, str] = field(default_factory=dict)

    def vehicle_params(self, vehicle_id: str | None = None) -> VehicleParams:
        """Shared parameters, patched with any per-vehicle overrides."""
        if not vehicle_id or vehicle_id not in self.vehicle_overrides:
            return self.vehicle
        patch = self.vehicle_overrides[vehicle_id]
        try:
            return dataclasses.replace(self.vehicle, **patch)
        except (TypeError, ValueError) as exc:
            raise ConfigError(
                f"bad override for vehicle {vehicle_id!r}: {exc}"
            ) from exc


def _build(cls, section: Mapping[str, Any] | None, name: str):
    section = dict(section or {})
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    if cls is VehicleParams and "voc_breakpoints" in section:
        section["voc_breakpoints"] = tuple(
            (float(s), float(v)) for s, v in section["voc_breakpoints"]
        )
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{name}] section: {exc}") from exc


def load_config(path: str | Path | None = None) -> GlobalConfig:
    """Load the YAML config; missing file with no explicit path means defaults."""
    if path is None:
        env = os.environ.get(ENV_VAR)
        if env:
            path = env
    if path is None:
        return GlobalConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")

    known_top = {
        "vehicle", "vehicle_overrides", "preprocess", "ems", "search",
        "prior", "baseline_l_set", "confidence", "paths", "columns",
    }
    unknown = set(doc) - known_top
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")

    search_section = dict(doc.get("search") or {})
    # The controller constants live in their own section for readability but
    # ride on the search config (l_set itself is injected per run).
    ems = dict(doc.get("ems") or {})
    ems_map = {"soc_tev": "ems_soc_tev", "soc_ref_cap": "ems_soc_ref_cap",
               "hysteresis": "ems_hysteresis"}
    unknown_ems = set(ems) - set(ems_map)
    if unknown_ems:
        raise ConfigError(f"unknown keys in [ems]: {sorted(unknown_ems)}")
    for src, dst in ems_map.items():
        if src in ems:
            search_section[dst] = ems[src]

    paths = dict(doc.get("paths") or {})
    unknown_paths = set(paths) - {"posterior_dir", "report_dir", "trip_dir"}
    if unknown_paths:
        raise ConfigError(f"unknown keys in [paths]: {sorted(unknown_paths)}")

    overrides = doc.get("vehicle_overrides") or {}
    if not isinstance(overrides, dict):
        raise ConfigError("[vehicle_overrides] must map vehicle ids to patches")

    return GlobalConfig(
        vehicle=_build(VehicleParams, doc.get("vehicle"), "vehicle"),
        vehicle_overrides={str(k): dict(v or {}) for k, v in overrides.items()},
        preprocess=_build(PreprocessConfig, doc.get("preprocess"), "preprocess"),
        search=_build(LsetSearchConfig, search_section, "search"),
        prior=_build(PriorSpec, doc.get("prior"), "prior"),
        baseline_l_set=float(doc.get("baseline_l_set", 100.0)),
        confidence=float(doc.get("confidence", 0.99)),
        posterior_dir=Path(paths.get("posterior_dir", "posterior_store")),
        report_dir=Path(paths.get("report_dir", "reports")),
        trip_dir=Path(paths.get("trip_dir", "trips")),
        columns={str(k): str(v) for k, v in (doc.get("columns") or {}).items()},
    )
