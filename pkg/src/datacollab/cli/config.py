"""Experiment configuration: a YAML/JSON key-value tree plus overrides."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from ..collaboration import GENERATIONS
from ..errors import ConfigError
from ..mappers import KINDS
from ..pipeline import LearnerSpec, MapperSpec

MODES = ("centralized", "individual", "collaboration", "collaboration-networked")

DEFAULTS: dict = {
    "modes": ["centralized", "individual", "collaboration"],
    "data": {"source": "synth"},
    "mapper": {"kind": "pca"},
    "parties": [],
    "anchor": {"generation": "standard-normal"},
    "ell": None,
    "learner": {"kind": "least-squares", "ridge": 1e-8, "k": 5, "fit_intercept": True},
    "output": {"path": None, "format": "json-lines"},
    "network": {"host": "127.0.0.1", "port": 0, "timeout": 60.0},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_tree(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        tree = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if tree is None:
        tree = {}
    if not isinstance(tree, dict):
        raise ConfigError(f"config {path} must be a mapping at top level")
    return tree


def apply_override(tree: dict, assignment: str) -> dict:
    """Apply ``a.b.c=value``; the value is parsed as YAML (so 3, 0.5, [1,2] work)."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"override {assignment!r} has an empty key")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"bad override value in {assignment!r}: {exc}") from exc
    tree = copy.deepcopy(tree)
    node = tree
    for p in parts[:-1]:
        if isinstance(node, list):
            try:
                node = node[int(p)]
            except (ValueError, IndexError):
                raise ConfigError(f"override path {key!r}: bad list index {p!r}") from None
            continue
        node = node.setdefault(p, {})
        if not isinstance(node, (dict, list)):
            raise ConfigError(f"override path {key!r} goes through a scalar")
    if isinstance(node, list):
        try:
            node[int(parts[-1])] = value
        except (ValueError, IndexError):
            raise ConfigError(f"override path {key!r}: bad list index {parts[-1]!r}") from None
    else:
        node[parts[-1]] = value
    return tree


def _int(tree, key, where, minimum=None, required=True):
    v = tree.get(key)
    if v is None:
        if required:
            raise ConfigError(f"{where}.{key} is required")
        return None
    if isinstance(v, str):
        v = v.strip()
        v = int(v) if v.lstrip("-").isdigit() else v
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise ConfigError(f"{where}.{key} must be an integer, got {v!r}")
    iv = int(v)
    if minimum is not None and iv < minimum:
        raise ConfigError(f"{where}.{key} must be >= {minimum}, got {iv}")
    return iv


def _float(tree, key, where, default=None):
    v = tree.get(key, default)
    if v is None:
        return None
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key} must be a number, got {v!r}") from None


@dataclass(frozen=True)
class AnchorSpec:
    generation: str
    r: int
    seed: Optional[int]
    low: Optional[float] = None
    high: Optional[float] = None
    path: Optional[str] = None


@dataclass(frozen=True)
class ExperimentConfig:
    modes: tuple
    data: dict
    mappers: tuple  # MapperSpec per party
    anchor: AnchorSpec
    ell: int
    learner: LearnerSpec
    output_path: Optional[str]
    output_format: str
    network: dict
    tree: dict = field(repr=False, compare=False)

    @property
    def parties(self) -> int:
        return len(self.mappers)

    def echo(self) -> dict:
        """The resolved tree, with derived defaults filled in."""
        out = copy.deepcopy(self.tree)
        out["ell"] = self.ell
        out["anchor"] = _merge(out.get("anchor", {}), {"r": self.anchor.r})
        out["parties"] = [
            {"mapper": s.kind, "dim": s.out_dim, "seed": s.seed} for s in self.mappers
        ]
        return out


def _party_count(data: dict) -> int:
    src = data.get("source")
    if src == "synth":
        return _int(data.get("synth", {}), "parties", "data.synth", minimum=1)
    if src == "csv":
        files = data.get("parties")
        if not isinstance(files, list) or not files:
            raise ConfigError("data.parties must list at least one party for source=csv")
        return len(files)
    raise ConfigError(f"data.source must be 'synth' or 'csv', got {src!r}")


def _validate_data(data: dict) -> None:
    if data["source"] == "synth":
        synth = data.get("synth", {})
        for key in ("m", "classes", "per_party", "seed"):
            _int(synth, key, "data.synth", minimum=0)
        _float(synth, "skew", "data.synth", default=0.0)
        return
    for i, entry in enumerate(data["parties"]):
        if not isinstance(entry, dict):
            raise ConfigError(f"data.parties[{i}] must be a mapping")
        if "train" in entry:
            if "test" not in entry:
                raise ConfigError(f"data.parties[{i}] has train but no test file")
        elif "path" in entry:
            if _float(entry, "test_fraction", f"data.parties[{i}]") is None:
                raise ConfigError(f"data.parties[{i}].test_fraction is required with path")
            _int(entry, "split_seed", f"data.parties[{i}]")
        else:
            raise ConfigError(f"data.parties[{i}] needs either train/test or path/test_fraction")


def build_config(tree: dict) -> ExperimentConfig:
    """Validate a raw tree (defaults merged in) into an :class:`ExperimentConfig`."""
    tree = _merge(DEFAULTS, tree)
    modes = tree["modes"]
    if isinstance(modes, str):
        modes = [modes]
    if not modes or any(m not in MODES for m in modes):
        raise ConfigError(f"modes must be a non-empty subset of {MODES}, got {modes!r}")
    data = tree["data"]
    d = _party_count(data)
    _validate_data(data)

    default = tree["mapper"] or {}
    overrides = tree["parties"] or []
    if len(overrides) not in (0, d):
        raise ConfigError(f"parties lists {len(overrides)} mapper entries for {d} parties")
    specs = []
    for i in range(d):
        entry = _merge(default, overrides[i]) if overrides else dict(default)
        where = f"parties[{i}]" if overrides else "mapper"
        kind = entry.get("mapper", entry.get("kind", "pca"))
        if kind not in KINDS or kind == "linear-explicit":
            raise ConfigError(f"{where}: mapper kind must be pca or random-projection, got {kind!r}")
        dim = _int(entry, "dim", where, minimum=1)
        if "seed" in entry and entry["seed"] is not None:
            seed = _int(entry, "seed", where)
            # a shared default seed is offset per party so maps differ
            if not overrides or "seed" not in overrides[i]:
                seed += i
        else:
            raise ConfigError(f"{where}.seed is required (no unseeded runs)")
        specs.append(MapperSpec(kind, dim, seed))

    a = tree["anchor"]
    generation = a.get("generation", "standard-normal")
    if generation not in GENERATIONS:
        raise ConfigError(f"anchor.generation must be one of {GENERATIONS}")
    max_dim = max(s.out_dim for s in specs)
    r = _int(a, "r", "anchor", minimum=1, required=False) or 2 * max_dim
    seed = _int(a, "seed", "anchor", required=generation != "user-supplied")
    if r < max_dim:
        raise ConfigError(f"anchor.r={r} is smaller than the largest party dimension {max_dim}")
    if generation == "uniform-in-box" and (a.get("low") is None or a.get("high") is None):
        raise ConfigError("anchor.low and anchor.high are required for uniform-in-box")
    if generation == "user-supplied" and not a.get("path"):
        raise ConfigError("anchor.path is required for user-supplied anchors")
    anchor = AnchorSpec(generation, r, seed, _float(a, "low", "anchor"), _float(a, "high", "anchor"), a.get("path"))

    ell = _int(tree, "ell", "config", minimum=1, required=False)
    if ell is None:
        ell = min(s.out_dim for s in specs)

    lt = tree["learner"]
    kind = lt.get("kind", "least-squares")
    if kind not in ("least-squares", "knn"):
        raise ConfigError(f"learner.kind must be least-squares or knn, got {kind!r}")
    ridge = _float(lt, "ridge", "learner", default=1e-8)
    if ridge < 0:
        raise ConfigError("learner.ridge must be nonnegative")
    learner = LearnerSpec(kind, ridge, _int(lt, "k", "learner", minimum=1), bool(lt.get("fit_intercept", True)))

    out = tree["output"] or {}
    fmt = out.get("format", "json-lines")
    if fmt not in ("json-lines", "human-table"):
        raise ConfigError(f"output.format must be json-lines or human-table, got {fmt!r}")
    return ExperimentConfig(
        modes=tuple(modes), data=data, mappers=tuple(specs), anchor=anchor, ell=ell,
        learner=learner, output_path=out.get("path"), output_format=fmt,
        network=tree["network"], tree=tree,
    )


def load_config(path=None, overrides=()) -> ExperimentConfig:
    tree = load_tree(path) if path else {}
    for o in overrides:
        tree = apply_override(tree, o)
    return build_config(tree)
