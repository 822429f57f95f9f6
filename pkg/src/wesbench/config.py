"""Benchmark configuration files (JSON).

Every section is optional and falls back to the defaults below; unknown keys
and ill-typed values are rejected with the offending line number. Relative
``output_dir`` paths resolve against the directory holding the config file.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .core import Conformation
from .errors import ConfigError
from .potentials import PotentialKind, PotentialSpec, default_start
from .propagate import PropagatorConfig
from .tica import FeatureKind, FeatureSpec

_NUM = (int, float)
_OPT_NUM = (int, float, type(None))
_OPT_INT = (int, type(None))

# section -> key -> (allowed types, default)
SCHEMA = {
    "system": {
        "kind": (str, "DOUBLE_WELL_2D"),
        "params": (dict, {}),
        "temperature": (_OPT_NUM, None),
    },
    "propagator": {
        "steps_per_segment": (int, 1000),
        "save_interval": (int, 100),
        "dt": (_OPT_NUM, None),
        "friction": (_NUM, 1.0),
        "n_threads": (_OPT_INT, None),
    },
    "reference": {
        "starts": ((list, type(None)), None),
        "segments_each": (int, 100),
    },
    "we": {
        "max_iterations": (int, 200),
        "walkers_per_bin": (int, 3),
        "bins_per_dim": (int, 7),
        "pcoord_dims": (int, 2),
        "bottleneck_bins": (bool, True),
        "initial_state": ((list, type(None)), None),
        "coverage_target": (_OPT_NUM, None),
        "coverage_every": (int, 10),
        "burn_in": (int, 0),
    },
    "tica": {
        "lag": (int, 10),
        "n_components": (int, 4),
        "featurization": ((dict, type(None)), None),
    },
    "msm": {
        "grid_n": (int, 80),
        "lag": (int, 1),
    },
    "macrostates": {
        "n_clusters": (int, 100),
        "n_macrostates": (int, 5),
        "n_tics": (int, 10),
    },
    "metrics": {
        "coverage_grid": (int, 100),
        "histogram_bins": (int, 100),
        "kl_epsilon": (_NUM, 1e-12),
        "weighting_mode": (str, "WE_WEIGHTED"),
    },
    "seeds": {
        "reference": (int, 0),
        "we": (int, 1),
        "kmeans": (int, 2),
    },
}
WEIGHTING_MODES = ("WE_WEIGHTED", "MSM_REWEIGHTED", "RAW_UNWEIGHTED")

_POSITIVE = {
    ("propagator", "steps_per_segment"), ("propagator", "save_interval"), ("propagator", "friction"),
    ("reference", "segments_each"), ("we", "walkers_per_bin"), ("we", "coverage_every"),
    ("tica", "lag"), ("tica", "n_components"), ("msm", "lag"), ("macrostates", "n_clusters"),
    ("macrostates", "n_macrostates"), ("macrostates", "n_tics"), ("metrics", "coverage_grid"),
    ("metrics", "histogram_bins"), ("metrics", "kl_epsilon"), ("we", "pcoord_dims"),
}
_NONNEGATIVE = {("we", "max_iterations"), ("we", "burn_in"), ("seeds", "reference"),
                ("seeds", "we"), ("seeds", "kmeans")}


def _line_map(text):
    """Map key paths like ``("we", "max_iterations")`` to 1-based line numbers."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    out = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (k.value,)
                out[p] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                out[path + (i,)] = v.start_mark.line + 1
                walk(v, path + (i,))

    if root is not None:
        walk(root, ())
    return out


def _typename(types):
    types = types if isinstance(types, tuple) else (types,)
    return " or ".join("null" if t is type(None) else t.__name__ for t in types)


@dataclass
class BenchmarkConfig:
    system: dict
    propagator: dict
    reference: dict
    we: dict
    tica: dict
    msm: dict
    macrostates: dict
    metrics: dict
    seeds: dict
    output_dir: str = "out"
    base_dir: str = "."
    lines: Optional[dict] = None

    # -- construction -------------------------------------------------------

    @classmethod
    def from_dict(cls, data, base_dir=".", lines=None):
        lines = lines or {}

        def fail(msg, path=()):
            line = None
            while path and line is None:
                line = lines.get(path)
                path = path[:-1]
            raise ConfigError(msg, line)

        if not isinstance(data, dict):
            raise ConfigError("top level must be a JSON object", 1)
        sections = {}
        for key in data:
            if key not in SCHEMA and key != "output_dir":
                fail(f"unknown key '{key}'", (key,))
        for name, fields in SCHEMA.items():
            raw = data.get(name, {})
            if not isinstance(raw, dict):
                fail(f"section '{name}' must be an object", (name,))
            sec = {}
            for key, value in raw.items():
                if key not in fields:
                    fail(f"unknown key '{name}.{key}'", (name, key))
                types = fields[key][0]
                ok = isinstance(value, types)
                if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
                    ok = False
                if not ok:
                    fail(f"'{name}.{key}' must be {_typename(types)}, got {type(value).__name__}",
                         (name, key))
                if (name, key) in _POSITIVE and value is not None and not value > 0:
                    fail(f"'{name}.{key}' must be > 0, got {value}", (name, key))
                if (name, key) in _NONNEGATIVE and not value >= 0:
                    fail(f"'{name}.{key}' must be >= 0, got {value}", (name, key))
                sec[key] = value
            for key, (_, default) in fields.items():
                sec.setdefault(key, copy.deepcopy(default))
            sections[name] = sec
        out = data.get("output_dir", "out")
        if not isinstance(out, str):
            fail("'output_dir' must be a string", ("output_dir",))

        cfg = cls(**sections, output_dir=out, base_dir=str(base_dir), lines=lines)
        cfg._check_semantics(fail)
        return cfg

    def _check_semantics(self, fail):
        try:
            PotentialKind(self.system["kind"])
        except ValueError:
            fail(f"unknown system kind '{self.system['kind']}'; expected one of "
                 f"{[k.value for k in PotentialKind]}", ("system", "kind"))
        try:
            self.potential()
        except (ValueError, TypeError) as exc:
            fail(str(exc), ("system",))
        try:
            self.propagator_config(0)
        except ValueError as exc:
            fail(str(exc), ("propagator",))
        if self.metrics["weighting_mode"] not in WEIGHTING_MODES:
            fail(f"weighting_mode must be one of {list(WEIGHTING_MODES)}",
                 ("metrics", "weighting_mode"))
        feat = self.tica["featurization"]
        if feat is not None:
            extra = set(feat) - {"kind", "pair_list"}
            if extra:
                fail(f"unknown featurization keys {sorted(extra)}", ("tica", "featurization"))
            try:
                self.feature_spec()
            except (ValueError, TypeError, KeyError) as exc:
                fail(f"bad featurization: {exc}", ("tica", "featurization"))
        if self.we["initial_state"] is not None:
            try:
                self.initial_state()
            except Exception as exc:  # noqa: BLE001
                fail(f"bad initial_state: {exc}", ("we", "initial_state"))
        if self.reference["starts"] is not None:
            try:
                self.reference_starts()
            except Exception as exc:  # noqa: BLE001
                fail(f"bad reference starts: {exc}", ("reference", "starts"))
        if self.we["pcoord_dims"] > self.tica["n_components"]:
            fail("we.pcoord_dims cannot exceed tica.n_components", ("we", "pcoord_dims"))
        if self.macrostates["n_macrostates"] > self.macrostates["n_clusters"]:
            fail("n_macrostates cannot exceed n_clusters", ("macrostates", "n_macrostates"))

    @classmethod
    def from_text(cls, text, base_dir="."):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from None
        return cls.from_dict(data, base_dir, _line_map(text))

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", path=str(path)) from None
        try:
            return cls.from_text(text, path.parent)
        except ConfigError as exc:
            exc.path = str(path)
            raise

    def to_dict(self):
        d = {name: copy.deepcopy(getattr(self, name)) for name in SCHEMA}
        d["output_dir"] = self.output_dir
        return d

    def with_seed(self, seed: int):
        """Copy with all seeds derived from one value (streams stay distinct)."""
        d = self.to_dict()
        d["seeds"] = {"reference": seed, "we": seed + 1, "kmeans": seed + 2}
        return BenchmarkConfig.from_dict(d, self.base_dir)

    # -- derived objects ----------------------------------------------------------

    @property
    def out_path(self) -> Path:
        p = Path(self.output_dir)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def potential(self) -> PotentialSpec:
        s = self.system
        return PotentialSpec(s["kind"], dict(s["params"]), s["temperature"])

    def propagator_config(self, seed) -> PropagatorConfig:
        p = self.propagator
        return PropagatorConfig(self.potential(), p["steps_per_segment"], p["save_interval"],
                                p["dt"], p["friction"], None, int(seed))

    def feature_spec(self) -> FeatureSpec:
        feat = self.tica["featurization"]
        if feat is None:
            spec = self.potential()
            kind = FeatureKind.PAIRWISE_DISTANCES if spec.n_particles > 1 else FeatureKind.RAW_COORDS_2D
            return FeatureSpec(kind)
        return FeatureSpec(feat["kind"], feat.get("pair_list"))

    def reference_starts(self):
        spec = self.potential()
        if self.reference["starts"] is None:
            return [default_start(spec).positions]
        return [np.asarray(s, dtype=float).reshape(-1, spec.dims) for s in self.reference["starts"]]

    def initial_state(self) -> Conformation:
        spec = self.potential()
        if self.we["initial_state"] is None:
            return default_start(spec)
        return Conformation(np.asarray(self.we["initial_state"], dtype=float).reshape(-1, spec.dims))
