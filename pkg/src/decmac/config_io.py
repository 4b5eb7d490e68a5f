"""Plain-text network configuration files.

One key-value pair per line, ``#`` comments, and one ``[node]`` block per
harvesting node:

    beta0 = 0.05
    actions = 19

    [node]
    e_max = 8
    m = 2
    p_b = 0.1
    snr = 6.0
    weight = 1.0

Unknown or duplicate keys are errors (a silently ignored typo in p_b or beta0
would invalidate an experiment).  Parsing and serialization round-trip.
"""

from __future__ import annotations

from .model import NetworkConfig, NodeParams


class ConfigError(Exception):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.message = message
        self.line = line

    def __str__(self) -> str:
        if self.line is not None:
            return f"line {self.line}: {self.message}"
        return self.message


_TOP_KEYS = {
    "beta0": float,
    "actions": int,
    "horizon": int,
    "trunc_eps": float,
    "slot_duration": float,
}
_NODE_KEYS = {
    "e_max": int,
    "m": int,
    "p_b": float,
    "snr": float,
    "weight": float,
}
_NODE_REQUIRED = ("e_max", "m", "p_b", "snr")


def parse_config(text: str) -> NetworkConfig:
    top: dict[str, object] = {}
    nodes: list[dict[str, object]] = []
    current: dict[str, object] | None = None
    node_lines: list[int] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "[node]":
            current = {}
            nodes.append(current)
            node_lines.append(lineno)
            continue
        if line.startswith("["):
            raise ConfigError(f"unknown section {line!r}", lineno)
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        scope = _NODE_KEYS if current is not None else _TOP_KEYS
        target = current if current is not None else top
        if key not in scope:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in target:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        try:
            target[key] = scope[key](value)
        except ValueError:
            raise ConfigError(f"invalid value {value!r} for {key!r}", lineno) from None

    if not nodes:
        raise ConfigError("at least one [node] block is required")
    params = []
    for block, lineno in zip(nodes, node_lines):
        missing = [k for k in _NODE_REQUIRED if k not in block]
        if missing:
            raise ConfigError(f"[node] block misses keys: {', '.join(missing)}", lineno)
        try:
            params.append(NodeParams(**block))
        except ValueError as exc:
            raise ConfigError(str(exc), lineno) from None
    try:
        return NetworkConfig(nodes=tuple(params), n_actions=top.pop("actions", 19), **top)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> NetworkConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def serialize_config(config: NetworkConfig) -> str:
    lines = [
        f"beta0 = {config.beta0!r}",
        f"actions = {config.n_actions}",
        f"horizon = {config.horizon}",
        f"trunc_eps = {config.trunc_eps!r}",
        f"slot_duration = {config.slot_duration!r}",
    ]
    for node in config.nodes:
        lines.append("")
        lines.append("[node]")
        lines.append(f"e_max = {node.e_max}")
        lines.append(f"m = {node.m}")
        lines.append(f"p_b = {node.p_b!r}")
        lines.append(f"snr = {node.snr!r}")
        lines.append(f"weight = {node.weight!r}")
    return "\n".join(lines) + "\n"
