"""Experiment dispatch: turns a configured experiment into report records."""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .config import ExperimentConfig, build_grid
from .errors import DiffeostatError, ExperimentError, ValidationError
from .estimation import cramer_rao_gap, inverse_fisher_form, variance_form
from .families import parameter_line
from .markov import (MarkovKernel, check_sufficiency, monotonicity_gap, pushforward_model,
                     pushforward_tangent)
from .measure import FiniteSampleSpace, ProbabilityMeasure
from .model import (DiffeologicalModel, TangentVector, basis_velocities, fisher_metric,
                    gram_matrix, integrability_report, plot_point, plot_velocity,
                    sample_parameters, tangent_cone_probe)


@dataclass
class ReportRecord:
    experiment: str
    kind: str
    index: int
    inputs: dict
    results: dict
    verdicts: dict
    passed: bool
    tolerances: dict = field(default_factory=dict)
    wall_time: float = 0.0


def record_rng(seed: int, experiment: str, index: int) -> np.random.Generator:
    """Independent stream per (experiment, record index), whatever the run order."""
    key = zlib.crc32(experiment.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key, index)))


def _min_eig(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(M).min()) if M.size else 0.0


def _tols(cfg: ExperimentConfig, *keys) -> dict:
    return {k: cfg.tolerances[k] for k in keys}


def _point(cfg, plot, theta) -> ProbabilityMeasure:
    return plot_point(cfg.plots[plot], np.asarray(theta, dtype=float))


# ---------------------------------------------------------------- experiments

def _fisher_gram(cfg, exp, seed):
    tol = _tols(cfg, "psd")
    p = cfg.plots[exp["plot"]]
    for k, theta in enumerate(exp["thetas"]):
        xi = plot_point(p, np.asarray(theta, dtype=float))
        G = gram_matrix(basis_velocities(p, theta))
        lam = _min_eig(G)
        ok = lam >= -tol["psd"]
        yield k, {"plot": p.name, "theta": theta}, {
            "point": xi.weights, "gram": G, "min_eigenvalue": lam,
        }, {"psd": ok}, ok, tol


def _integrability(cfg, exp, seed):
    tol = _tols(cfg, "support")
    model = cfg.model
    if "kernel" in exp:
        model = pushforward_model(cfg.kernels[exp["kernel"]], model)
    names = exp.get("plots")
    plots = model.plots
    if names:
        prefix = f"{exp['kernel']}*" if "kernel" in exp else ""
        plots = tuple(p for p in model.plots if p.name in {prefix + n for n in names})
    sub = DiffeologicalModel(model.space, plots, order=model.order)
    grid = cfg.grid
    if "grid" in exp:
        grid = build_grid(exp["grid"])
    report = integrability_report(sub, grid)
    for k, pr in enumerate(report.plots):
        bad = [list(s.theta) for s in pr.points if not s.almost2]
        yield k, {"plot": pr.plot, "kernel": exp.get("kernel"),
                  "base_points": grid.base_points, "levels": grid.levels}, {
            "grid_points": len(pr.points), "failing_points": bad,
            "scores": pr.scores, "ratios": pr.ratios,
        }, {"almost2": pr.almost2, "stable": pr.stable, "integrability": pr.verdict}, pr.almost2, tol


def _cone_probe(cfg, exp, seed):
    ambient = cfg.plots[exp["plot"]]
    step = exp.get("ray_step", 1e-3)
    for k, pt in enumerate(exp["points"]):
        theta = np.asarray(pt["theta"], dtype=float)
        xi = ProbabilityMeasure.from_weights(cfg.space, ambient.weights(theta))
        radius = pt.get("radius", 0.05)
        curves = [parameter_line(ambient, theta, d, radius, name=f"{pt['label']}:{i}")
                  for i, d in enumerate(pt["directions"])]
        rep = tangent_cone_probe(cfg.model, xi, curves, ray_step=step)
        verdicts = {"span_dim": rep.span_dim, "is_linear": rep.is_linear}
        expect = pt.get("expect", {})
        ok = all(verdicts[key] == val for key, val in expect.items())
        if expect:
            verdicts["matches_expectation"] = ok
        yield k, {"label": pt["label"], "theta": pt["theta"], "directions": pt["directions"],
                  "radius": radius, "ray_step": step, "expect": expect}, {
            "point": xi.weights, "span_dim": rep.span_dim, "is_linear": rep.is_linear,
            "directions": np.array([d.weights for d in rep.directions]).reshape(-1, len(cfg.space)),
            "rejected": list(rep.rejected),
        }, verdicts, ok, {}


def _pushforward(cfg, exp, seed):
    tol = _tols(cfg, "monotonicity")
    T = cfg.kernels[exp["kernel"]]
    p = cfg.plots[exp["plot"]]
    for k, theta in enumerate(exp["thetas"]):
        basis = basis_velocities(p, theta)
        pushed = [pushforward_tangent(T, a) for a in basis]
        before, after = gram_matrix(basis), gram_matrix(pushed)
        gap = before - after
        lam = _min_eig(gap)
        ok = lam >= -tol["monotonicity"]
        yield k, {"kernel": T.name, "plot": p.name, "theta": theta}, {
            "point": basis[0].base.weights if basis else plot_point(p, theta).weights,
            "pushed_point": pushed[0].base.weights if pushed else None,
            "gram_before": before, "gram_after": after, "gap": gap, "gap_min_eigenvalue": lam,
        }, {"monotone": ok}, ok, tol


def _sample_measures(cfg, sample):
    if "measures" in sample:
        out = []
        for i, w in enumerate(sample["measures"]):
            try:
                out.append(ProbabilityMeasure(cfg.space, w))
            except DiffeostatError as exc:
                raise ValidationError(f"sample measure {i}: {exc}") from None
        return out
    return [_point(cfg, sample["plot"], t) for t in sample["thetas"]]


def _sufficiency(cfg, exp, seed):
    tol = _tols(cfg, "sufficiency", "support")
    T = cfg.kernels[exp["kernel"]]
    sample = _sample_measures(cfg, exp["sample"])
    rep = check_sufficiency(T, sample, tol=tol["sufficiency"])
    verdict = "sufficient" if rep.is_sufficient else "not sufficient"
    expect = exp.get("expect")
    ok = expect is None or expect == rep.is_sufficient
    conditional = np.array([rep.conditional[y].weights for y in rep.fibers]).reshape(-1, len(cfg.space))
    yield 0, {"kernel": T.name, "sample_size": len(sample), "expect": expect}, {
        "max_discrepancy": rep.max_discrepancy,
        "factorization_residual": rep.factorization_residual,
        "fibers": list(rep.fibers), "conditional": conditional,
    }, {"sufficiency": verdict}, ok, tol


def _random_simplex_tangent(space: FiniteSampleSpace, rng) -> TangentVector:
    n = len(space)
    w = rng.dirichlet(np.ones(n))
    if n > 2 and rng.random() < 0.3:
        w[rng.integers(n)] = 0.0
        w = w / w.sum()
    xi = ProbabilityMeasure(space, w)
    v = np.where(w > 0, rng.normal(size=n), 0.0)
    return TangentVector.at(xi, v - v.sum() * w)


def _random_model_tangent(model: DiffeologicalModel, rng) -> TangentVector:
    p = model.plots[int(rng.integers(len(model.plots)))]
    theta = sample_parameters(p, rng, 1)[0]
    return plot_velocity(p, theta, rng.normal(size=p.domain_dim))


def _monotonicity_sweep(cfg, exp, seed):
    tol = _tols(cfg, "monotonicity")
    source = exp.get("source", "model")
    m = exp.get("target_size", len(cfg.space))
    target = FiniteSampleSpace.of_size(m, prefix="y")
    for k in range(exp["count"]):
        rng = record_rng(seed, exp["name"], k)
        a = (_random_model_tangent(cfg.model, rng) if source == "model"
             else _random_simplex_tangent(cfg.space, rng))
        if "kernel" in exp:
            T = cfg.kernels[exp["kernel"]]
        else:
            T = MarkovKernel.random(cfg.space, target, rng, sparsity=0.3)
        gap = monotonicity_gap(T, a, check=False)
        pushed = pushforward_tangent(T, a)
        ok = gap >= -tol["monotonicity"]
        yield k, {"kernel": T.name, "source": source}, {
            "point": a.base.weights, "direction": a.direction.weights, "kernel_rows": T.rows,
            "norm_before": fisher_metric(a, a), "norm_after": fisher_metric(pushed, pushed),
            "gap": gap,
        }, {"monotone": ok}, ok, tol


def _cramer_rao(cfg, exp, seed):
    tol = _tols(cfg, "psd", "attained")
    sigma = cfg.estimators[exp["estimator"]]
    phi = cfg.phis[exp["phi"]]
    p = cfg.plots[exp["plot"]]
    for k, theta in enumerate(exp["thetas"]):
        basis = basis_velocities(p, theta)
        xi = basis[0].base if basis else plot_point(p, theta)
        V = variance_form(sigma, phi, xi).matrix
        I = inverse_fisher_form(sigma, phi, xi, basis).matrix
        gap = cramer_rao_gap(sigma, phi, xi, basis)
        gmax = float(np.max(np.abs(gap.matrix))) if gap.matrix.size else 0.0
        psd = gap.min_eigenvalue >= -tol["psd"]
        if not psd:
            verdict = "violated"
        elif gmax <= tol["attained"]:
            verdict = "attained"
        else:
            verdict = "strict"
        yield k, {"estimator": exp["estimator"], "phi": exp["phi"], "plot": p.name, "theta": theta}, {
            "point": xi.weights, "variance": V, "inverse_fisher": I, "gap": gap.matrix,
            "gap_min_eigenvalue": gap.min_eigenvalue, "gap_max_abs": gmax,
        }, {"psd": psd, "bound": verdict}, psd, tol


DISPATCH: dict[str, Callable] = {
    "fisher_gram": _fisher_gram,
    "integrability": _integrability,
    "cone_probe": _cone_probe,
    "pushforward": _pushforward,
    "sufficiency": _sufficiency,
    "monotonicity_sweep": _monotonicity_sweep,
    "cramer_rao": _cramer_rao,
}


def run_experiment(config: ExperimentConfig, name: str, seed: Optional[int] = None) -> list[ReportRecord]:
    """Run one named experiment; records come back sorted by index.

    Module errors are re-raised as :class:`ExperimentError` carrying the
    experiment name.
    """
    exp = config.experiment(name)
    seed = config.seed if seed is None else int(seed)
    records = []
    gen = DISPATCH[exp["kind"]](config, exp, seed)
    try:
        while True:
            start = time.perf_counter()
            try:
                k, inputs, results, verdicts, passed, tol = next(gen)
            except StopIteration:
                break
            records.append(ReportRecord(name, exp["kind"], k, inputs, results, verdicts,
                                        bool(passed), dict(tol), time.perf_counter() - start))
    except DiffeostatError as exc:
        raise ExperimentError(name, exc) from exc
    except (ValueError, ArithmeticError, KeyError, np.linalg.LinAlgError) as exc:
        raise ExperimentError(name, exc) from exc
    records.sort(key=lambda r: r.index)
    return records


def run_all(config: ExperimentConfig, seed: Optional[int] = None,
            names: Optional[list[str]] = None) -> list[ReportRecord]:
    records = []
    for name in names or config.experiment_names:
        records.extend(run_experiment(config, name, seed))
    return records
