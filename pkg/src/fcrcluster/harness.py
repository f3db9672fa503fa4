"""Configuration-driven replication engine and real-data workflow.

A scenario pins a generating mixture (or a separation-parametrized family),
a sweep (over separation, sample size, or nominal level), the procedures to
compare, and a seed.  Replication RNG streams derive from
``(seed, sweep_index, rep_index)``, so reordering replications changes
nothing.  Ground-truth labels are visible to the scorer only, never to
estimation, selection, or calibration.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _svg
from .bootstrap import (
    BootstrapConfig,
    FullRefit,
    WarmStart,
    calibrate_level,
    clustering_at_calibrated_level,
)
from .em import EmConfig, fit_mixture
from .evaluation import FcrReport, sample_fcr
from .mixtures import (
    ComponentParams,
    MixtureParams,
    posterior_matrix,
    sample_mixture,
    validate_data,
)
from .selection import SelectiveClustering, select_and_label, write_clustering_csv

logger = logging.getLogger(__name__)

PROCEDURES = ("oracle", "plugin", "boot_param", "boot_nonparam", "fixed")
SWEEP_KINDS = ("epsilon", "n", "alpha")


@dataclass
class TruthSpec:
    """Generating truth: either an explicit mixture or a separation family.

    The separation family places Q unit-covariance Gaussians: component 0 at
    the origin, component 1 at ``(eps/sqrt(d), ..., eps/sqrt(d))`` (so the
    mean separation is ``eps``), and, for Q = 3, component 2 at
    ``(0, sqrt(eps), 0, ...)``.
    """

    family: str = "gaussian_separation"  # or "fixed"
    q: int = 2
    d: int = 2
    epsilon: float | None = None
    params: MixtureParams | None = None

    def truth_for(self, epsilon: float | None = None) -> MixtureParams:
        if self.family == "fixed":
            if self.params is None:
                raise ValueError("fixed truth requires explicit params")
            return self.params
        eps = self.epsilon if epsilon is None else float(epsilon)
        if eps is None:
            raise ValueError("separation family requires an epsilon")
        return gaussian_separation_truth(self.q, self.d, eps)


def gaussian_separation_truth(q: int, d: int, epsilon: float) -> MixtureParams:
    """Unit-covariance Gaussian layout controlled by the mean separation."""
    if q not in (2, 3):
        raise ValueError("separation family supports q in {2, 3}")
    if d < 2 and q == 3:
        raise ValueError("q=3 layout needs d >= 2")
    eye = np.eye(d)
    mus = [np.zeros(d), np.full(d, epsilon / math.sqrt(d))]
    if q == 3:
        mu3 = np.zeros(d)
        mu3[1] = math.sqrt(epsilon)
        mus.append(mu3)
    comps = tuple(ComponentParams(kind="gaussian", mean=m, scatter=eye) for m in mus)
    return MixtureParams(weights=np.full(q, 1.0 / q), components=comps, structure="full")


@dataclass
class ScenarioConfig:
    name: str
    generator: TruthSpec
    n: int
    reps: int
    procedures: tuple[str, ...]
    sweep_kind: str
    sweep_values: tuple[float, ...]
    alpha: float
    em: EmConfig = field(default_factory=EmConfig)
    boot: BootstrapConfig = field(default_factory=BootstrapConfig)
    seed: int = 0

    def validate(self) -> None:
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.sweep_kind not in SWEEP_KINDS:
            raise ValueError(f"sweep kind must be one of {SWEEP_KINDS}")
        if not self.sweep_values:
            raise ValueError("sweep_values must be non-empty")
        for p in self.procedures:
            if p not in PROCEDURES:
                raise ValueError(f"unknown procedure {p!r}")
        if self.sweep_kind == "alpha":
            if any(not 0.0 < a < 1.0 for a in self.sweep_values):
                raise ValueError("alpha sweep values must lie in (0, 1)")
        if self.sweep_kind == "n":
            if any(int(v) < 1 for v in self.sweep_values):
                raise ValueError("n sweep values must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.sweep_kind != "epsilon":
            # resolving the truth must work without a sweep-supplied epsilon
            self.generator.truth_for(None)
        self.boot.validate()


@dataclass(frozen=True)
class RepDetail:
    procedure: str
    sweep_value: float
    rep: int
    fcr: float
    selection_frequency: float
    n_selected: int


@dataclass(frozen=True)
class SweepCell:
    procedure: str
    sweep_value: float
    mean_fcr: float
    se_fcr: float
    mean_selection: float
    se_selection: float
    reps: int


@dataclass
class SweepResult:
    config: ScenarioConfig
    cells: list[SweepCell]
    details: list[RepDetail]
    failures: list[str]


def builtin_scenarios() -> list[ScenarioConfig]:
    """Named scenario configurations for the simulation studies."""
    eps_grid = (1.0, math.sqrt(2.0), 2.0, 4.0)
    alpha_grid = (0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2)
    n_grid = (50.0, 100.0, 200.0, 500.0, 1000.0)

    def em(structure: str) -> EmConfig:
        return EmConfig(structure=structure, max_iter=100, n_starts=10)

    def boot() -> BootstrapConfig:
        return BootstrapConfig(b=1000, refit=FullRefit())

    def scenario(name, q, d, sweep_kind, sweep_values, structure, *, n=100,
                 alpha=0.1, epsilon=None, procedures=PROCEDURES, seed=0):
        return ScenarioConfig(
            name=name,
            generator=TruthSpec(q=q, d=d, epsilon=epsilon),
            n=n,
            reps=100,
            procedures=tuple(procedures),
            sweep_kind=sweep_kind,
            sweep_values=tuple(float(v) for v in sweep_values),
            alpha=alpha,
            em=em(structure),
            boot=boot(),
            seed=seed,
        )

    return [
        scenario("known-params", 2, 2, "epsilon", eps_grid, "known", seed=11),
        scenario("diagonal", 2, 2, "epsilon", eps_grid, "diagonal", seed=12),
        scenario("diagonal-n", 2, 2, "n", n_grid, "diagonal",
                 epsilon=math.sqrt(2.0), seed=13),
        scenario("diagonal-alpha-n200", 2, 2, "alpha", alpha_grid, "diagonal",
                 n=200, epsilon=math.sqrt(2.0), seed=14),
        scenario("diagonal-alpha-n1000", 2, 2, "alpha", alpha_grid, "diagonal",
                 n=1000, epsilon=math.sqrt(2.0), seed=15),
        scenario("high-dim", 2, 20, "alpha", alpha_grid, "diagonal",
                 n=200, epsilon=math.sqrt(2.0), seed=16),
        scenario("three-component", 3, 2, "alpha", alpha_grid, "diagonal",
                 n=200, epsilon=math.sqrt(2.0), seed=17),
        scenario("unconstrained", 2, 2, "alpha", alpha_grid, "full",
                 n=200, epsilon=math.sqrt(2.0), seed=18),
        scenario("typical", 3, 4, "alpha", alpha_grid, "full",
                 n=1000, epsilon=2.0, seed=19),
    ]


def get_scenario(name: str) -> ScenarioConfig:
    for cfg in builtin_scenarios():
        if cfg.name == name:
            return cfg
    known = ", ".join(c.name for c in builtin_scenarios())
    raise KeyError(f"no scenario named {name!r}; known scenarios: {known}")


def _em_with_known(em_cfg: EmConfig, truth: MixtureParams) -> EmConfig:
    """Inject true weights/covariances for the known-parameters regime."""
    if em_cfg.structure != "known":
        return em_cfg
    cfg = replace(em_cfg)
    if cfg.known_weights is None:
        cfg.known_weights = truth.weights.copy()
    if cfg.known_covariances is None:
        cfg.known_covariances = tuple(c.scatter.copy() for c in truth.components)
    return cfg


def run_replication(
    data,
    truth: MixtureParams,
    alpha: float,
    procedures: tuple[str, ...],
    em_cfg: EmConfig,
    boot_cfg: BootstrapConfig,
    rng: np.random.Generator,
) -> dict[str, SelectiveClustering]:
    """Run the requested procedures on one sample.

    Only the generating parameters (for the oracle) and the data enter;
    latent labels never do.  The plug-in, fixed baseline and both bootstrap
    corrections share one EM fit, so their selections are comparable
    replication by replication.
    """
    x = validate_data(data)
    out: dict[str, SelectiveClustering] = {}
    if "oracle" in procedures:
        out["oracle"] = select_and_label(posterior_matrix(truth, x), alpha, "cumulative")
    needs_fit = [p for p in procedures if p != "oracle"]
    if not needs_fit:
        return out
    em_cfg = _em_with_known(em_cfg, truth)
    fit = fit_mixture(x, truth.q, em_cfg, rng)
    post_hat = posterior_matrix(fit.params, x)
    if "plugin" in procedures:
        out["plugin"] = select_and_label(post_hat, alpha, "cumulative")
    if "fixed" in procedures:
        out["fixed"] = select_and_label(post_hat, alpha, "fixed")
    for proc, mode in (("boot_param", "parametric"), ("boot_nonparam", "nonparametric")):
        if proc not in procedures:
            continue
        cfg = replace(boot_cfg, mode=mode)
        curve = calibrate_level(x, fit.params, alpha, cfg, em_cfg, rng)
        out[proc] = clustering_at_calibrated_level(fit.params, x, alpha, curve)
    return out


def run_scenario(config: ScenarioConfig) -> SweepResult:
    """All sweep points and replications of one scenario, fully seeded."""
    config.validate()
    details: list[RepDetail] = []
    failures: list[str] = []
    cells: list[SweepCell] = []
    for j, value in enumerate(config.sweep_values):
        if config.sweep_kind == "epsilon":
            truth = config.generator.truth_for(value)
        else:
            truth = config.generator.truth_for(None)
        n = int(value) if config.sweep_kind == "n" else config.n
        alpha = float(value) if config.sweep_kind == "alpha" else config.alpha
        per_proc: dict[str, list[tuple[float, float, int]]] = {
            p: [] for p in config.procedures
        }
        for r in range(config.reps):
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, j, r]))
            z, x = sample_mixture(truth, n, rng)
            try:
                outcomes = run_replication(
                    x, truth, alpha, config.procedures, config.em, config.boot, rng
                )
            except Exception as exc:  # noqa: BLE001 - replication-level abort
                msg = f"sweep value {value}, rep {r}: {exc!r}"
                logger.error("replication aborted: %s", msg)
                failures.append(msg)
                continue
            for proc, sc in outcomes.items():
                report = sample_fcr(z, sc.labels, sc.selection.selected)
                per_proc[proc].append(
                    (report.sample_fcr, report.selection_frequency, report.n_selected)
                )
                details.append(
                    RepDetail(
                        procedure=proc,
                        sweep_value=float(value),
                        rep=r,
                        fcr=report.sample_fcr,
                        selection_frequency=report.selection_frequency,
                        n_selected=report.n_selected,
                    )
                )
        for proc in config.procedures:
            rows = per_proc[proc]
            if not rows:
                continue
            fcrs = np.array([row[0] for row in rows])
            sels = np.array([row[1] for row in rows])
            k = len(rows)
            cells.append(
                SweepCell(
                    procedure=proc,
                    sweep_value=float(value),
                    mean_fcr=float(fcrs.mean()),
                    se_fcr=float(fcrs.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0,
                    mean_selection=float(sels.mean()),
                    se_selection=float(sels.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0,
                    reps=k,
                )
            )
    if failures:
        logger.warning("%d replications failed; aggregates flagged", len(failures))
    return SweepResult(config=config, cells=cells, details=details, failures=failures)


# --- real data ---------------------------------------------------------------

def run_real_data(
    csv_path,
    columns: list[str],
    q: int,
    alpha: float,
    em_cfg: EmConfig | None = None,
    boot_cfg: BootstrapConfig | None = None,
    ground_truth_column: str | None = None,
    procedure: str = "boot_param",
    standardize: bool = False,
    seed: int = 0,
    out_csv=None,
) -> tuple[SelectiveClustering, FcrReport | None]:
    """Cluster a CSV with abstention; score against ground truth if given.

    Defaults follow the heavy-tail workflow: a Student-t mixture with fixed
    dof 4 and an unconstrained scatter, calibrated by parametric bootstrap.
    Ground-truth labels never feed the fit; they are read separately and
    only compared against the output.
    """
    if procedure not in ("plugin", "fixed", "boot_param", "boot_nonparam"):
        raise ValueError(f"unsupported real-data procedure {procedure!r}")
    header, rows = _read_csv_table(csv_path)
    missing = [c for c in columns if c not in header]
    if missing:
        raise ValueError(f"{csv_path}: missing columns {missing}")
    take = [header.index(c) for c in columns]
    try:
        x = np.array([[float(row[j]) for j in take] for row in rows])
    except ValueError as exc:
        raise ValueError(f"{csv_path}: non-numeric cell in {columns}") from exc
    x = validate_data(x)
    if x.shape[0] < q:
        raise ValueError(f"{csv_path}: fewer rows ({x.shape[0]}) than clusters ({q})")
    if standardize:
        scale = x.std(axis=0, ddof=0)
        x = (x - x.mean(axis=0)) / np.where(scale > 0, scale, 1.0)

    em_cfg = em_cfg or EmConfig(family="student", dof=4.0, structure="full")
    boot_cfg = boot_cfg or BootstrapConfig()
    rng = np.random.default_rng(seed)
    fit = fit_mixture(x, q, em_cfg, rng)
    post = posterior_matrix(fit.params, x)
    if procedure == "plugin":
        sc = select_and_label(post, alpha, "cumulative")
    elif procedure == "fixed":
        sc = select_and_label(post, alpha, "fixed")
    else:
        mode = "parametric" if procedure == "boot_param" else "nonparametric"
        cfg = replace(boot_cfg, mode=mode)
        curve = calibrate_level(x, fit.params, alpha, cfg, em_cfg, rng)
        sc = clustering_at_calibrated_level(fit.params, x, alpha, curve)

    report = None
    if ground_truth_column is not None:
        if ground_truth_column not in header:
            raise ValueError(f"{csv_path}: missing column {ground_truth_column!r}")
        gt_idx = header.index(ground_truth_column)
        raw = [row[gt_idx] for row in rows]
        codes = {v: i for i, v in enumerate(sorted(set(raw)))}
        truth_labels = np.array([codes[v] for v in raw], dtype=np.int64)
        report = sample_fcr(truth_labels, sc.labels, sc.selection.selected)
    if out_csv is not None:
        write_clustering_csv(sc, out_csv)
    return sc, report


def _read_csv_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty CSV") from None
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    return header, rows


# --- output emission ---------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def scenario_to_json(config: ScenarioConfig) -> dict:
    gen = {
        "family": config.generator.family,
        "q": config.generator.q,
        "d": config.generator.d,
        "epsilon": config.generator.epsilon,
    }
    if config.generator.params is not None:
        from .mixtures import mixture_to_json

        gen["params"] = mixture_to_json(config.generator.params)
    refit = config.boot.refit
    return {
        "name": config.name,
        "generator": gen,
        "n": config.n,
        "reps": config.reps,
        "procedures": list(config.procedures),
        "sweep": {"kind": config.sweep_kind, "values": list(config.sweep_values)},
        "alpha": config.alpha,
        "em": {
            "family": config.em.family,
            "structure": config.em.structure,
            "max_iter": config.em.max_iter,
            "n_starts": config.em.n_starts,
            "rel_tol": config.em.rel_tol,
            "dof": config.em.dof,
        },
        "boot": {
            "mode": config.boot.mode,
            "b": config.boot.b,
            "grid": None if config.boot.grid is None else list(config.boot.grid),
            "refit": (
                {"warm_start": refit.iters}
                if isinstance(refit, WarmStart)
                else {"full_refit": True}
            ),
        },
        "seed": config.seed,
    }


def scenario_from_json(obj: dict) -> ScenarioConfig:
    gen = obj["generator"]
    if "params" in gen and gen["params"] is not None:
        from .mixtures import mixture_from_json

        spec = TruthSpec(family="fixed", params=mixture_from_json(gen["params"]))
    else:
        spec = TruthSpec(
            family=gen.get("family", "gaussian_separation"),
            q=int(gen.get("q", 2)),
            d=int(gen.get("d", 2)),
            epsilon=gen.get("epsilon"),
        )
    em_obj = obj.get("em", {})
    em_cfg = EmConfig(
        family=em_obj.get("family", "gaussian"),
        structure=em_obj.get("structure", "full"),
        max_iter=int(em_obj.get("max_iter", 100)),
        n_starts=int(em_obj.get("n_starts", 10)),
        rel_tol=em_obj.get("rel_tol", 1e-8),
        dof=float(em_obj.get("dof", 4.0)),
    )
    boot_obj = obj.get("boot", {})
    refit_obj = boot_obj.get("refit", {"full_refit": True})
    if "warm_start" in refit_obj:
        refit = WarmStart(iters=int(refit_obj["warm_start"]))
    else:
        refit = FullRefit()
    boot_cfg = BootstrapConfig(
        mode=boot_obj.get("mode", "parametric"),
        b=int(boot_obj.get("b", 1000)),
        grid=None if boot_obj.get("grid") is None else np.asarray(boot_obj["grid"]),
        refit=refit,
    )
    sweep = obj["sweep"]
    return ScenarioConfig(
        name=obj["name"],
        generator=spec,
        n=int(obj["n"]),
        reps=int(obj["reps"]),
        procedures=tuple(obj.get("procedures", PROCEDURES)),
        sweep_kind=sweep["kind"],
        sweep_values=tuple(float(v) for v in sweep["values"]),
        alpha=float(obj["alpha"]),
        em=em_cfg,
        boot=boot_cfg,
        seed=int(obj.get("seed", 0)),
    )


def config_hash(config: ScenarioConfig) -> str:
    canonical = json.dumps(scenario_to_json(config), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


def emit_outputs(result: SweepResult, out_dir) -> list[Path]:
    """Write results.csv, per-run details, the sweep chart, and a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    written: list[Path] = []

    results_path = out / "results.csv"
    with open(results_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "procedure", "sweep_value", "metric", "mean", "se"])
        for cell in result.cells:
            writer.writerow(
                [cfg.name, cell.procedure, _fmt(cell.sweep_value), "fcr",
                 _fmt(cell.mean_fcr), _fmt(cell.se_fcr)]
            )
            writer.writerow(
                [cfg.name, cell.procedure, _fmt(cell.sweep_value),
                 "selection_frequency", _fmt(cell.mean_selection), _fmt(cell.se_selection)]
            )
    written.append(results_path)

    details_path = out / "details.csv"
    with open(details_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["scenario", "sweep_value", "rep", "procedure", "fcr",
             "selection_frequency", "n_selected"]
        )
        for d in result.details:
            writer.writerow(
                [cfg.name, _fmt(d.sweep_value), d.rep, d.procedure, _fmt(d.fcr),
                 _fmt(d.selection_frequency), d.n_selected]
            )
    written.append(details_path)

    if result.cells:
        xs = sorted({c.sweep_value for c in result.cells})
        procs = [p for p in cfg.procedures if any(c.procedure == p for c in result.cells)]
        by_key = {(c.procedure, c.sweep_value): c for c in result.cells}
        fcr_series = {
            p: [by_key[(p, v)].mean_fcr if (p, v) in by_key else float("nan") for v in xs]
            for p in procs
        }
        sel_series = {
            p: [
                by_key[(p, v)].mean_selection if (p, v) in by_key else float("nan")
                for v in xs
            ]
            for p in procs
        }
        svg = _svg.sweep_chart(
            xs,
            fcr_series,
            sel_series,
            xlabel=cfg.sweep_kind,
            alpha=cfg.alpha,
            alpha_is_x=cfg.sweep_kind == "alpha",
            title=cfg.name,
        )
        svg_path = out / f"{cfg.name}_sweep.svg"
        svg_path.write_text(svg)
        written.append(svg_path)

    import numpy as _np
    import scipy as _scipy

    from . import __version__

    manifest = {
        "scenario": cfg.name,
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
        "config": scenario_to_json(cfg),
        "failed_replications": result.failures,
        "versions": {
            "fcrcluster": __version__,
            "numpy": _np.__version__,
            "scipy": _scipy.__version__,
        },
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    written.append(manifest_path)
    return written
