"""Topic name/filter grammar and wildcard matching (MQTT 3.1.1 rules)."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import GatewayError

__all__ = ["InvalidFilter", "InvalidTopic", "TopicFilter", "topic_matches", "validate_topic"]


class InvalidTopic(GatewayError):
    """Topic name is empty or contains wildcard characters."""


class InvalidFilter(GatewayError):
    """Subscription filter violates the wildcard grammar."""


def validate_topic(topic: str) -> None:
    """Publish topic names: non-empty, no wildcards, no NUL."""
    if not topic:
        raise InvalidTopic("topic name must be at least one character")
    if "+" in topic or "#" in topic:
        raise InvalidTopic(f"wildcards not allowed in topic names: {topic!r}")
    if "\x00" in topic:
        raise InvalidTopic("NUL not allowed in topic names")


def _validate_filter_levels(filter_: str) -> list[str]:
    if not filter_:
        raise InvalidFilter("filter must be at least one character")
    if "\x00" in filter_:
        raise InvalidFilter("NUL not allowed in filters")
    levels = filter_.split("/")
    for i, level in enumerate(levels):
        if level == "#":
            if i != len(levels) - 1:
                raise InvalidFilter(f"'#' must be the final level: {filter_!r}")
        elif "#" in level:
            raise InvalidFilter(f"'#' must occupy a whole level: {filter_!r}")
        elif level != "+" and "+" in level:
            raise InvalidFilter(f"'+' must occupy a whole level: {filter_!r}")
    return levels


@dataclass(frozen=True)
class TopicFilter:
    """A validated subscription pattern, split into levels."""

    levels: tuple[str, ...]

    @classmethod
    def parse(cls, filter_: str) -> "TopicFilter":
        return cls(tuple(_validate_filter_levels(filter_)))

    def __str__(self) -> str:
        return "/".join(self.levels)

    def matches(self, topic: str) -> bool:
        t_levels = topic.split("/")
        f_levels = self.levels
        # wildcard-leading filters never match $-prefixed topics
        if t_levels[0].startswith("$") and f_levels[0] in ("+", "#"):
            return False
        fi = 0
        for ti, t_level in enumerate(t_levels):
            if fi == len(f_levels):
                return False
            if f_levels[fi] == "#":
                return True
            if f_levels[fi] != "+" and f_levels[fi] != t_level:
                return False
            fi += 1
        if fi == len(f_levels):
            return True
        # 'a/#' also matches 'a' itself (the parent level)
        return fi == len(f_levels) - 1 and f_levels[fi] == "#"


def topic_matches(filter_: str | TopicFilter, topic: str) -> bool:
    """True when the filter matches the topic name."""
    if isinstance(filter_, str):
        filter_ = TopicFilter.parse(filter_)
    return filter_.matches(topic)
