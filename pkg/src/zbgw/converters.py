"""Data-driven translation between raw attribute reports and named values.

Device definitions are data, not code: each one maps (cluster,
attribute) pairs onto named exposes with a scale factor and codec, so
supporting a new device means dropping in a TOML file, including at
runtime. Unknown attributes are an error rather than silently dropped --
surfacing converter gaps is the whole point of this layer.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import GatewayError

__all__ = [
    "AttributeReport",
    "ConverterRegistry",
    "DefinitionError",
    "DeviceDefinition",
    "Expose",
    "NormalizedPayload",
    "NotSupported",
    "NotWritable",
    "RangeViolation",
    "ReportMapping",
    "UnknownExpose",
    "UnmappedAttribute",
    "builtin_catalog",
    "convert_command",
    "convert_report",
    "load_definition_file",
    "parse_definition",
]


class NotSupported(GatewayError):
    """No definition registered for this model id."""


class UnmappedAttribute(GatewayError):
    """The report's (cluster, attribute) pair is not in the definition."""


class RangeViolation(GatewayError):
    """A value falls outside the expose's declared min/max."""


class NotWritable(GatewayError):
    """Command targets a read-only expose."""


class UnknownExpose(GatewayError):
    """Command names an expose the definition does not have."""


class DefinitionError(GatewayError):
    """A definition file or record is internally inconsistent."""


EXPOSE_KINDS = ("numeric", "binary", "enum")
CODECS = ("numeric", "bool")


@dataclass(frozen=True)
class Expose:
    name: str
    kind: str
    unit: str = ""
    min: float | None = None
    max: float | None = None
    writable: bool = False

    def __post_init__(self) -> None:
        if self.kind not in EXPOSE_KINDS:
            raise DefinitionError(f"unknown expose kind {self.kind!r}")


@dataclass(frozen=True)
class ReportMapping:
    expose: str
    scale: float = 1.0
    codec: str = "numeric"

    def __post_init__(self) -> None:
        if self.codec not in CODECS:
            raise DefinitionError(f"unknown codec {self.codec!r}")
        if self.scale == 0:
            raise DefinitionError("scale must be non-zero")


@dataclass
class DeviceDefinition:
    model_id: str
    vendor: str
    exposes: list[Expose]
    report_map: dict[tuple[int, int], ReportMapping]
    description: str = ""

    def __post_init__(self) -> None:
        if not self.model_id:
            raise DefinitionError("model_id must be non-empty")
        names = [e.name for e in self.exposes]
        if len(names) != len(set(names)):
            raise DefinitionError(f"duplicate expose names in {self.model_id}")
        by_name = {e.name: e for e in self.exposes}
        for key, mapping in self.report_map.items():
            if mapping.expose not in by_name:
                raise DefinitionError(
                    f"{self.model_id}: report map {key} targets unknown expose "
                    f"{mapping.expose!r}"
                )
        self._by_name = by_name

    def expose(self, name: str) -> Expose:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownExpose(f"{self.model_id} has no expose {name!r}") from None

    def mapping_for_expose(self, name: str) -> tuple[tuple[int, int], ReportMapping]:
        for key, mapping in self.report_map.items():
            if mapping.expose == name:
                return key, mapping
        raise UnknownExpose(f"{self.model_id}: no report mapping for {name!r}")


@dataclass(frozen=True)
class AttributeReport:
    cluster_id: int
    attribute_id: int
    raw_value: int | bool


@dataclass
class NormalizedPayload:
    values: dict[str, Any] = field(default_factory=dict)
    linkquality: int = 0

    def as_dict(self) -> dict[str, Any]:
        return {**self.values, "linkquality": self.linkquality}


def _tidy_number(value: float) -> int | float:
    value = round(value, 10)
    return int(value) if float(value).is_integer() else value


def convert_report(
    definition: DeviceDefinition, report: AttributeReport, lqi: int
) -> NormalizedPayload:
    """Translate one raw attribute report into a named value payload.

    Values are never clamped: anything outside the expose's declared
    range raises RangeViolation so bad data is visible, not laundered.
    """
    key = (report.cluster_id, report.attribute_id)
    mapping = definition.report_map.get(key)
    if mapping is None:
        raise UnmappedAttribute(
            f"{definition.model_id}: cluster {key[0]:#06x} attribute {key[1]:#06x}"
        )
    expose = definition.expose(mapping.expose)
    if mapping.codec == "bool":
        value: Any = bool(report.raw_value)
    else:
        value = _tidy_number(report.raw_value * mapping.scale)
        if expose.min is not None and value < expose.min:
            raise RangeViolation(f"{expose.name}={value} below min {expose.min}")
        if expose.max is not None and value > expose.max:
            raise RangeViolation(f"{expose.name}={value} above max {expose.max}")
    return NormalizedPayload(values={expose.name: value}, linkquality=lqi)


def convert_command(
    definition: DeviceDefinition, name: str, desired_value: Any
) -> AttributeReport:
    """Translate a named write into the raw attribute form (inverse scale)."""
    expose = definition.expose(name)
    if not expose.writable:
        raise NotWritable(f"{definition.model_id}.{name} is read-only")
    key, mapping = definition.mapping_for_expose(name)
    if mapping.codec == "bool":
        raw: int | bool = bool(desired_value)
    else:
        if not isinstance(desired_value, (int, float)) or isinstance(desired_value, bool):
            raise RangeViolation(f"{name} expects a number, got {desired_value!r}")
        if expose.min is not None and desired_value < expose.min:
            raise RangeViolation(f"{name}={desired_value} below min {expose.min}")
        if expose.max is not None and desired_value > expose.max:
            raise RangeViolation(f"{name}={desired_value} above max {expose.max}")
        raw = round(desired_value / mapping.scale)
    return AttributeReport(cluster_id=key[0], attribute_id=key[1], raw_value=raw)


class ConverterRegistry:
    """Definitions by model id; registration is last-wins with an event."""

    def __init__(self) -> None:
        self._definitions: dict[str, DeviceDefinition] = {}
        self.events: list[dict] = []

    def register(self, definition: DeviceDefinition) -> None:
        replaced = definition.model_id in self._definitions
        self._definitions[definition.model_id] = definition
        if replaced:
            self.events.append(
                {"event": "replaced_definition", "model_id": definition.model_id}
            )

    def lookup(self, model_id: str) -> DeviceDefinition:
        try:
            return self._definitions[model_id]
        except KeyError:
            raise NotSupported(f"no definition for model {model_id!r}") from None

    def __contains__(self, model_id: str) -> bool:
        return model_id in self._definitions

    def __len__(self) -> int:
        return len(self._definitions)

    def model_ids(self) -> list[str]:
        return list(self._definitions)


def parse_definition(data: dict) -> DeviceDefinition:
    """Build a definition from a decoded TOML table."""
    try:
        exposes = [Expose(**e) for e in data.get("exposes", [])]
        report_map = {}
        for entry in data.get("report", []):
            key = (int(entry["cluster"]), int(entry["attribute"]))
            report_map[key] = ReportMapping(
                expose=entry["expose"],
                scale=float(entry.get("scale", 1.0)),
                codec=entry.get("codec", "numeric"),
            )
        return DeviceDefinition(
            model_id=data["model_id"],
            vendor=data.get("vendor", ""),
            exposes=exposes,
            report_map=report_map,
            description=data.get("description", ""),
        )
    except (KeyError, TypeError) as exc:
        raise DefinitionError(f"bad definition record: {exc}") from exc


def load_definition_file(path: str | Path) -> DeviceDefinition:
    with open(path, "rb") as fp:
        return parse_definition(tomllib.load(fp))


def builtin_catalog() -> ConverterRegistry:
    """Registry preloaded with the packaged case-study device classes."""
    registry = ConverterRegistry()
    package_files = resources.files(__package__) / "definitions"
    for entry in sorted(package_files.iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".toml"):
            registry.register(parse_definition(tomllib.loads(entry.read_text())))
    return registry
