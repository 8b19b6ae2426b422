"""Loading and validating experiment configuration documents.

A configuration is a JSON document checked against the schema shipped in
``diffeostat/schema/config.schema.json``, then turned into live objects
(plots, kernels, estimators, feature maps).  Every name an experiment refers
to is resolved at load time.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional

import jsonschema
import numpy as np

from .errors import DiffeostatError, ParseError, SchemaError, ValidationError
from .estimation import (CoordinatePhi, Estimator, KernelEmbeddingPhi, ParameterPhi,
                         PhiMap, TablePhi, constant, plug_in, smoothed)
from .families import Chessboard, affine_mixture_plot, chessboard, simplex_plot, table_plot
from .markov import MarkovKernel, deterministic_kernel, permutation_kernel
from .measure import FiniteSampleSpace, ProbabilityMeasure
from .model import DiffeologicalModel, GridSpec, Plot

DEFAULT_TOLERANCES = {
    "psd": 1e-9,
    "monotonicity": 1e-9,
    "sufficiency": 1e-10,
    "attained": 1e-10,
    "support": 1e-12,
}


def schema_path() -> Path:
    return Path(str(resources.files("diffeostat") / "schema" / "config.schema.json"))


def load_schema() -> dict:
    return json.loads(schema_path().read_text(encoding="utf-8"))


@dataclass(eq=False)
class ExperimentConfig:
    """A validated configuration with all objects built.

    ``raw`` keeps the document as parsed; :meth:`to_dict` returns a copy of it,
    so a config can be written back out and parsed again.
    """

    raw: dict
    space: FiniteSampleSpace
    plots: dict
    model: DiffeologicalModel
    kernels: dict = field(default_factory=dict)
    estimators: dict = field(default_factory=dict)
    phis: dict = field(default_factory=dict)
    experiments: list = field(default_factory=list)
    seed: int = 0
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    grid: GridSpec = field(default_factory=GridSpec)
    board: Optional[Chessboard] = None

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def experiment(self, name: str) -> dict:
        for exp in self.experiments:
            if exp["name"] == name:
                return exp
        raise ValidationError(f"no experiment named {name!r}")

    @property
    def experiment_names(self) -> list[str]:
        return [e["name"] for e in self.experiments]


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    return parse_config_text(text, source=str(path))


def parse_config_text(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return build_config(doc)


def _schema_message(err: jsonschema.ValidationError) -> str:
    # oneOf failures are more useful when reported at the deepest branch
    best = jsonschema.exceptions.best_match([err]) if err.context else err
    where = "/".join(str(p) for p in best.absolute_path) or "<root>"
    return f"at {where}: {best.message}"


def validate_document(doc: Any) -> None:
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise SchemaError(_schema_message(errors[0]))


def build_config(doc: Any) -> ExperimentConfig:
    validate_document(doc)
    doc = copy.deepcopy(doc)
    space = FiniteSampleSpace(tuple(doc["space"]["atoms"]))
    plots, model, board = _build_model(doc["model"], space)
    kernels = {name: _build_kernel(name, spec, space) for name, spec in doc.get("kernels", {}).items()}
    estimators = {name: _build_estimator(name, spec, space)
                  for name, spec in doc.get("estimators", {}).items()}
    phis = {name: _build_phi(name, spec, space, plots) for name, spec in doc.get("phis", {}).items()}
    sweep = doc.get("sweep", {})
    tolerances = dict(DEFAULT_TOLERANCES)
    tolerances.update(sweep.get("tolerances", {}))
    grid = build_grid(sweep.get("grid", {}))
    experiments = doc.get("experiments", [])
    cfg = ExperimentConfig(doc, space, plots, model, kernels, estimators, phis, experiments,
                           int(sweep.get("seed", 0)), tolerances, grid, board)
    _resolve_references(cfg)
    return cfg


def with_overrides(config: ExperimentConfig, tolerances: Mapping[str, float]) -> ExperimentConfig:
    """A copy of ``config`` with some sweep tolerances replaced."""
    unknown = sorted(set(tolerances) - set(DEFAULT_TOLERANCES))
    if unknown:
        raise ValidationError(f"unknown tolerance(s) {unknown}; known: {sorted(DEFAULT_TOLERANCES)}")
    doc = config.to_dict()
    doc.setdefault("sweep", {}).setdefault("tolerances", {}).update(
        {k: float(v) for k, v in tolerances.items()})
    return build_config(doc)


# ---------------------------------------------------------------- builders

def _order(value) -> float:
    return math.inf if value in (None, "inf") else float(value)


def _probability(space, weights, what: str) -> ProbabilityMeasure:
    try:
        return ProbabilityMeasure(space, weights)
    except DiffeostatError as exc:
        raise ValidationError(f"{what}: {exc}") from None


def _bounds(spec, key="sample_bounds"):
    b = spec.get(key)
    return None if b is None else (np.asarray(b[0], dtype=float), np.asarray(b[1], dtype=float))


def _build_plot(spec: dict, space: FiniteSampleSpace) -> Plot:
    name, kind = spec["name"], spec["kind"]
    try:
        if kind == "affine_mixture":
            base = _probability(space, spec["base"], f"plot {name!r} base")
            p = affine_mixture_plot(base, spec["components"], spec.get("lower"), spec.get("upper"),
                                    name=name, sample_bounds=_bounds(spec))
        elif kind == "simplex":
            p = simplex_plot(space, name=name, sample_bounds=_bounds(spec))
        else:
            p = table_plot(space, spec["grid"], spec["points"], spec.get("jacobians"), name=name)
    except ValidationError as exc:
        msg = str(exc)
        raise ValidationError(msg if repr(name) in msg else f"plot {name!r}: {msg}") from None
    if "order" in spec:
        p = Plot(p.space, p.lower, p.upper, p.func, jacobian=p.jacobian,
                 smoothness=_order(spec["order"]), region=p.region, inverse=p.inverse,
                 sample_bounds=p.sample_bounds, name=p.name)
    return p


def _build_model(spec: dict, space: FiniteSampleSpace):
    plots = {}
    for pspec in spec["plots"]:
        if pspec["name"] in plots:
            raise ValidationError(f"duplicate plot name {pspec['name']!r}")
        plots[pspec["name"]] = _build_plot(pspec, space)
    order = _order(spec.get("order"))
    board = None
    if "chessboard" in spec:
        cb = spec["chessboard"]
        src = next((p for p in spec["plots"] if p["name"] == cb["plot"]), None)
        if src is None:
            raise ValidationError(f"chessboard refers to unknown plot {cb['plot']!r}")
        if src["kind"] != "affine_mixture" or len(src["components"]) != 3:
            raise ValidationError(f"chessboard plot {cb['plot']!r} must be a 3-component affine_mixture")
        board = chessboard(cb.get("cells", 4), src["base"], src["components"], space)
        model = DiffeologicalModel(space, board.model.plots, order=order,
                                   membership=board.model.membership)
    else:
        try:
            model = DiffeologicalModel(space, tuple(plots.values()), order=order)
        except ValidationError as exc:
            raise ValidationError(f"model: {exc}") from None
    return plots, model, board


def _build_kernel(name: str, spec: dict, space: FiniteSampleSpace) -> MarkovKernel:
    if "permutation" in spec:
        try:
            return permutation_kernel(space, spec["permutation"], name=name)
        except ValidationError as exc:
            raise ValidationError(f"kernel {name!r}: {exc}") from None
    try:
        target = FiniteSampleSpace(tuple(spec["target"]))
    except DiffeostatError as exc:
        raise ValidationError(f"kernel {name!r} target: {exc}") from None
    if "rows" in spec:
        return MarkovKernel(space, target, spec["rows"], name=name)
    unknown = sorted(set(spec["atom_map"]) - set(space.atoms))
    bad = sorted(set(spec["atom_map"].values()) - set(target.atoms))
    if unknown or bad:
        raise ValidationError(f"kernel {name!r}: atom map mentions unknown atoms {unknown + bad}")
    return deterministic_kernel(spec["atom_map"], space, target, name=name)


def _build_estimator(name: str, spec: dict, space: FiniteSampleSpace) -> Estimator:
    kind = spec["kind"]
    try:
        if kind == "plug_in":
            est = plug_in(space)
        elif kind == "smoothed":
            est = smoothed(space, spec["epsilon"])
        elif kind == "constant":
            est = constant(ProbabilityMeasure(space, spec["point"]))
        else:
            est = Estimator.from_rows(space, spec["rows"], name=name)
    except DiffeostatError as exc:
        raise ValidationError(f"estimator {name!r}: {exc}") from None
    return Estimator(est.space, est.assignment, name=name)


def _build_phi(name: str, spec: dict, space: FiniteSampleSpace, plots: dict) -> PhiMap:
    kind = spec["kind"]
    try:
        if kind == "coordinate":
            return CoordinatePhi(space, spec["atoms"])
        if kind == "kernel_embedding":
            return KernelEmbeddingPhi(space, spec["matrix"])
        if kind == "parameter":
            if spec["plot"] not in plots:
                raise ValidationError(f"unknown plot {spec['plot']!r}")
            return ParameterPhi(plots[spec["plot"]])
        entries = spec["entries"]
        return TablePhi(space, [e["point"] for e in entries], [e["value"] for e in entries])
    except (DiffeostatError, KeyError) as exc:
        raise ValidationError(f"phi {name!r}: {exc}") from None


def build_grid(spec: dict) -> GridSpec:
    bounds = {k: (tuple(v[0]), tuple(v[1])) for k, v in spec.get("bounds", {}).items()}
    return GridSpec(spec.get("base_points", 3), spec.get("levels", 3), bounds)


_REFS = {
    "plot": "plots",
    "kernel": "kernels",
    "estimator": "estimators",
    "phi": "phis",
}


def _resolve_references(cfg: ExperimentConfig) -> None:
    seen = set()
    model_plots = {p.name for p in cfg.model.plots}
    for exp in cfg.experiments:
        name = exp["name"]
        if name in seen:
            raise ValidationError(f"duplicate experiment name {name!r}")
        seen.add(name)
        refs = [(key, exp[key]) for key in _REFS if key in exp]
        if "plot" in exp.get("sample", {}):
            refs.append(("plot", exp["sample"]["plot"]))
        for key, ref in refs:
            if ref not in getattr(cfg, _REFS[key]):
                raise ValidationError(f"experiment {name!r} refers to unknown {key} {ref!r}")
        missing = [p for p in exp.get("plots", []) if p not in model_plots]
        if missing:
            raise ValidationError(f"experiment {name!r}: {missing} are not plots of the model")
        thetas = exp.get("thetas", exp.get("sample", {}).get("thetas"))
        plot = exp.get("plot", exp.get("sample", {}).get("plot"))
        if thetas is not None and plot is not None:
            dim = cfg.plots[plot].domain_dim
            if any(len(t) != dim for t in thetas):
                raise ValidationError(f"experiment {name!r}: parameters must have {dim} coordinates")
        for pt in exp.get("points", []):
            dim = cfg.plots[exp["plot"]].domain_dim
            if len(pt["theta"]) != dim or any(len(d) != dim for d in pt["directions"]):
                raise ValidationError(
                    f"experiment {name!r}, point {pt['label']!r}: vectors must have {dim} coordinates")
