"""Declarative experiment runner: simulate, fit all candidates, score, report.

An experiment is a grid of cells (true parameter settings) crossed with
observation counts and replicates.  Every replicate draws its data with a seed
derived from ``(master_seed, experiment index, cell, n_obs, replicate)``, so
adding replicates or reordering cells never changes existing draws, and reruns
with the same config are byte-identical.

Outputs per run: ``selections.csv`` (one row per replicate and criterion, with
per-model scores), ``rates.csv`` (selection-rate table over cells), and
``report.json`` (config echo, versions, wall times).
"""

from __future__ import annotations

import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bolfi import LowerConfidenceBound, MaxVariance, bolfi_minimize, sic_bolfi
from .categorical import CountVector, empirical_from_counts, sample_multinomial
from .errors import ConfigError
from .estimate import OptimizerSettings, min_jsd_fit, mle_fit
from .model import ParametricModel, loglinear_model, multilogit_model
from .razor import ModelScore, refined_penalty, select, sic, sic_jsd
from .rng import generator, split_seed
from .simulators import (ModelSimulator, NFDSConfig, load_cluster_csv,
                         nfds_config_from_cluster_data, nfds_simulator,
                         synthetic_cluster_data)

EXPERIMENTS = ("nested_multilogit", "loglinear", "nfds")
_EXPERIMENT_INDEX = {name: i + 1 for i, name in enumerate(EXPERIMENTS)}
VALID_CRITERIA = ("sic", "sic_jsd", "sic_bolfi", "refined")

_DEFAULT_MULTILOGIT_TRUE = [[0.0, 0.0], [0.2, 0.0], [0.7, 0.0],
                            [0.2, 0.2], [0.7, 0.2], [0.2, 0.7], [0.7, 0.7]]
_DEFAULT_LAMBDA_XY = [round(-0.5 + 0.1 * i, 1) for i in range(11)]
_DEFAULT_NFDS_TRUE = [
    {"variant": "neutral", "theta": [math.log(0.007), math.log(0.050)]},
    {"variant": "homogeneous", "theta": [math.log(0.007), math.log(0.050), math.log(0.007)]},
]


@dataclass(frozen=True)
class BolfiConfig:
    budget: int = 200
    init_points: int = 10
    acquisition: str = "lcb"
    lcb_beta: float = 2.0
    reps: int = 1
    n_per_sim: Optional[int] = None
    gp_update_interval: int = 20

    def rule(self):
        if self.acquisition == "lcb":
            return LowerConfidenceBound(self.lcb_beta)
        if self.acquisition == "maxvar":
            return MaxVariance()
        raise ConfigError(f"bolfi.acquisition must be 'lcb' or 'maxvar', got {self.acquisition!r}")


@dataclass(frozen=True)
class NFDSExperimentConfig:
    pop_size: int = 10_000
    generations_per_obs: int = 1
    n_loci: int = 16
    data_seed: int = 0
    cluster_csv: Optional[str] = None
    obs_weights: Optional[list[float]] = None
    true_models: list[dict] = field(default_factory=lambda: list(_DEFAULT_NFDS_TRUE))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n_obs: list[int] = field(default_factory=lambda: [100, 1000])
    replicates: int = 20
    criteria: list[str] = field(default_factory=lambda: ["sic", "sic_jsd"])
    master_seed: int = 20_240_601
    output_dir: str = "jsdrazor_out"
    jobs: int = 1
    optimizer: OptimizerSettings = OptimizerSettings(starts=4)
    bolfi: BolfiConfig = BolfiConfig()
    multilogit_true_params: list[list[float]] = field(
        default_factory=lambda: [list(p) for p in _DEFAULT_MULTILOGIT_TRUE])
    lambda_xy: list[float] = field(default_factory=lambda: list(_DEFAULT_LAMBDA_XY))
    nfds: NFDSExperimentConfig = NFDSExperimentConfig()

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.replicates < 1:
            raise ConfigError(f"replicates must be >= 1, got {self.replicates}")
        unknown = [c for c in self.criteria if c not in VALID_CRITERIA]
        if unknown:
            raise ConfigError(f"unknown criteria {unknown}; valid: {VALID_CRITERIA}")
        if not self.criteria:
            raise ConfigError("criteria must not be empty")
        needs_njsd = {"sic_jsd", "sic_bolfi", "refined"} & set(self.criteria)
        if needs_njsd and any(n <= 25 for n in self.n_obs):
            raise ConfigError("n_obs entries must exceed 25 when a JSD criterion is requested")
        if self.experiment == "nfds" and set(self.criteria) != {"sic_bolfi"}:
            raise ConfigError("the nfds experiment has no probability map; criteria must be "
                              "['sic_bolfi']")


def _coerce_section(name: str, raw: dict, cls):
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"section {name!r}: {exc}") from None


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build and validate a config, naming the offending field on error."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    data = dict(raw)
    kwargs = {}
    for section, cls in (("optimizer", OptimizerSettings), ("bolfi", BolfiConfig),
                         ("nfds", NFDSExperimentConfig)):
        if section in data:
            block = data.pop(section)
            if not isinstance(block, dict):
                raise ConfigError(f"section {section!r} must be a mapping")
            kwargs[section] = _coerce_section(section, block, cls)
    try:
        return ExperimentConfig(**data, **kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def apply_paper_scale(cfg: ExperimentConfig) -> ExperimentConfig:
    """Restore the publication-size budgets: 100 replicates, long BOLFI runs."""
    budget = 1000 if cfg.experiment == "nested_multilogit" else 2000
    from dataclasses import replace
    return replace(cfg, replicates=100, bolfi=replace(cfg.bolfi, budget=budget))


# ---------------------------------------------------------------------------
# Cells: one true-parameter setting each


@dataclass(frozen=True)
class Cell:
    index: int
    key: str
    true_model: str
    true_params: list[float]


def _multilogit_candidates() -> list[ParametricModel]:
    return [multilogit_model(np.eye(2), l) for l in (0, 1, 2)]


def _loglinear_candidates() -> list[ParametricModel]:
    return [loglinear_model("two_param"), loglinear_model("saturated")]


def _cells(cfg: ExperimentConfig) -> list[Cell]:
    if cfg.experiment == "nested_multilogit":
        cells = []
        for i, theta in enumerate(cfg.multilogit_true_params):
            theta = [float(x) for x in theta]
            if len(theta) != 2:
                raise ConfigError(f"multilogit_true_params[{i}] must have 2 entries")
            dim = 2 if theta[1] != 0 else (1 if theta[0] != 0 else 0)
            cells.append(Cell(i, f"theta=({theta[0]:g},{theta[1]:g})",
                              f"multilogit_d{dim}", theta))
        return cells
    if cfg.experiment == "loglinear":
        return [Cell(i, f"lambda_xy={lxy:g}",
                     "loglinear_saturated" if lxy != 0 else "loglinear_two_param",
                     [float(lxy)])
                for i, lxy in enumerate(cfg.lambda_xy)]
    cells = []
    for i, spec in enumerate(cfg.nfds.true_models):
        variant = spec.get("variant")
        theta = [float(x) for x in spec.get("theta", [])]
        if variant not in ("neutral", "homogeneous", "heterogeneous"):
            raise ConfigError(f"nfds.true_models[{i}].variant invalid: {variant!r}")
        cells.append(Cell(i, f"true={variant}", f"nfds_{variant}", theta))
    return cells


def _nfds_shared_config(cfg: ExperimentConfig) -> NFDSConfig:
    nf = cfg.nfds
    if nf.cluster_csv:
        data = load_cluster_csv(nf.cluster_csv)
    else:
        data = synthetic_cluster_data(seed=nf.data_seed)
    base = nfds_config_from_cluster_data(data, n_loci=nf.n_loci, pop_size=nf.pop_size,
                                         generations_per_obs=nf.generations_per_obs,
                                         seed=nf.data_seed)
    if nf.obs_weights is not None:
        from dataclasses import replace
        base = replace(base, obs_weights=tuple(float(w) for w in nf.obs_weights))
    return base


# ---------------------------------------------------------------------------
# One replicate of one cell


@dataclass(frozen=True)
class SelectionRow:
    experiment: str
    cell_index: int
    cell: str
    true_model: str
    true_params: str
    n_obs: int
    replicate: int
    criterion: str
    selected_model: str
    scores: dict[str, float]


def _simulate_cell_data(cfg: ExperimentConfig, cell: Cell, n_obs: int, rep: int,
                        data_seed: int) -> CountVector:
    if cfg.experiment == "nested_multilogit":
        model = multilogit_model(np.eye(2), 2)
        return sample_multinomial(model.probs(np.array(cell.true_params)), n_obs, data_seed)
    if cfg.experiment == "loglinear":
        draw = generator(split_seed(cfg.master_seed, 2, 0xD12A, rep))
        lx, ly = draw.uniform(-1.0, 1.0, size=2)
        model = loglinear_model("saturated")
        theta = np.array([lx, ly, cell.true_params[0]])
        return sample_multinomial(model.probs(theta), n_obs, data_seed)
    shared = _nfds_shared_config(cfg)
    sim = nfds_simulator(shared, cell.true_model.removeprefix("nfds_"))
    return sim.run(np.array(cell.true_params), n_obs, data_seed)


def _score_replicate(cfg: ExperimentConfig, cell: Cell, n_obs: int, rep: int) -> list[SelectionRow]:
    exp_ix = _EXPERIMENT_INDEX[cfg.experiment]
    data_seed = split_seed(cfg.master_seed, exp_ix, cell.index, n_obs, rep)
    counts = _simulate_cell_data(cfg, cell, n_obs, rep, data_seed)
    p_hat = empirical_from_counts(counts)

    if cfg.experiment == "nfds":
        shared = _nfds_shared_config(cfg)
        candidates = [nfds_simulator(shared, v) for v in ("neutral", "homogeneous", "heterogeneous")]
        exact_models: list[ParametricModel] = []
    else:
        exact_models = (_multilogit_candidates() if cfg.experiment == "nested_multilogit"
                        else _loglinear_candidates())
        candidates = exact_models

    rows = []
    jsd_fits = mle_fits = bolfi_fits = None
    for criterion in cfg.criteria:
        scores = []
        for j, cand in enumerate(candidates):
            if criterion in ("sic_jsd", "refined"):
                if jsd_fits is None:
                    jsd_fits = [min_jsd_fit(m, p_hat, cfg.optimizer, split_seed(data_seed, 0xF17, jj))
                                for jj, m in enumerate(exact_models)]
                fit = jsd_fits[j]
                value_jsd = sic_jsd(cand, counts, fit)
                refined = None
                if criterion == "refined":
                    refined = 2.0 * counts.total * fit.objective + refined_penalty(cand, counts, fit)
                scores.append(ModelScore(cand.name, cand.d, fit, sic_jsd=value_jsd, refined=refined))
            elif criterion == "sic":
                if mle_fits is None:
                    mle_fits = [mle_fit(m, counts, cfg.optimizer, split_seed(data_seed, 0x31E, jj))
                                for jj, m in enumerate(exact_models)]
                scores.append(ModelScore(cand.name, cand.d, mle_fits[j],
                                         sic=sic(cand, counts, mle_fits[j])))
            else:  # sic_bolfi
                if bolfi_fits is None:
                    bolfi_fits = []
                    for jj, sim_cand in enumerate(candidates):
                        sim = sim_cand if not isinstance(sim_cand, ParametricModel) \
                            else ModelSimulator(sim_cand)
                        n_sim = cfg.bolfi.n_per_sim or counts.total
                        bolfi_fits.append(bolfi_minimize(
                            sim, p_hat, cfg.bolfi.budget, cfg.bolfi.rule(),
                            n_per_sim=n_sim, seed=split_seed(data_seed, 0xB01F, jj),
                            reps=cfg.bolfi.reps, init_points=cfg.bolfi.init_points,
                            gp_update_interval=cfg.bolfi.gp_update_interval))
                fit = bolfi_fits[j]
                name = cand.name if hasattr(cand, "name") else f"model{j}"
                scores.append(ModelScore(name, cand.d, fit,
                                         sic_bolfi=sic_bolfi(fit, cand.d, counts.total)))
        report = select(scores, n_o=counts.total, criterion=criterion)
        rows.append(SelectionRow(
            experiment=cfg.experiment, cell_index=cell.index, cell=cell.key,
            true_model=cell.true_model,
            true_params=";".join(format(x, "g") for x in cell.true_params),
            n_obs=n_obs, replicate=rep, criterion=criterion,
            selected_model=report.model_names[report.selected_index],
            scores={s.name: s.value(criterion) for s in scores}))
    return rows


_WORKER_CFG: Optional[ExperimentConfig] = None


def _init_worker(cfg: ExperimentConfig) -> None:
    global _WORKER_CFG
    _WORKER_CFG = cfg


def _run_task(task: tuple[int, int, int]) -> list[SelectionRow]:
    cell_ix, n_obs, rep = task
    cfg = _WORKER_CFG
    return _score_replicate(cfg, _cells(cfg)[cell_ix], n_obs, rep)


# ---------------------------------------------------------------------------
# Output files


def _fmt(x: float) -> str:
    return format(x, ".17g")


def write_selections_csv(path: Path, rows: list[SelectionRow], model_names: list[str]) -> None:
    header = ["experiment", "cell", "true_model", "true_params", "n_obs", "replicate",
              "criterion", "selected_model"] + [f"score_{m}" for m in model_names]
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join([
            r.experiment, r.cell, r.true_model, r.true_params, str(r.n_obs),
            str(r.replicate), r.criterion, r.selected_model,
            *[_fmt(r.scores[m]) for m in model_names]]))
    path.write_text("\n".join(lines) + "\n")


def selection_rates(rows: list[SelectionRow], model_names: list[str]) -> list[dict]:
    """Per (criterion, n_obs, cell) mean selection indicators; exact means of
    the indicator columns implied by ``selections.csv``."""
    groups: dict[tuple, list[SelectionRow]] = {}
    for r in rows:
        groups.setdefault((r.criterion, r.n_obs, r.cell_index, r.cell), []).append(r)
    out = []
    for (criterion, n_obs, _, cell), members in sorted(groups.items()):
        total = len(members)
        entry = {"criterion": criterion, "n_obs": n_obs, "cell": cell,
                 "n_replicates": total,
                 "true_model": members[0].true_model,
                 "rate_true": sum(m.selected_model == m.true_model for m in members) / total}
        for name in model_names:
            entry[f"rate_{name}"] = sum(m.selected_model == name for m in members) / total
        out.append(entry)
    return out


def write_rates_csv(path: Path, rates: list[dict], model_names: list[str]) -> None:
    header = ["criterion", "n_obs", "cell", "true_model", "n_replicates", "rate_true"] + \
             [f"rate_{m}" for m in model_names]
    lines = [",".join(header)]
    for row in rates:
        lines.append(",".join([
            row["criterion"], str(row["n_obs"]), row["cell"], row["true_model"],
            str(row["n_replicates"]), _fmt(row["rate_true"]),
            *[_fmt(row[f"rate_{m}"]) for m in model_names]]))
    path.write_text("\n".join(lines) + "\n")


def candidate_names(cfg: ExperimentConfig) -> list[str]:
    if cfg.experiment == "nested_multilogit":
        return [m.name for m in _multilogit_candidates()]
    if cfg.experiment == "loglinear":
        return [m.name for m in _loglinear_candidates()]
    return ["nfds_neutral", "nfds_homogeneous", "nfds_heterogeneous"]


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Execute the experiment and write selections.csv, rates.csv, report.json.

    Returns the report dictionary (also written to disk).
    """
    t_start = time.time()
    cells = _cells(cfg)
    tasks = [(cell.index, n_obs, rep)
             for cell in cells for n_obs in cfg.n_obs for rep in range(cfg.replicates)]

    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs, initializer=_init_worker,
                                 initargs=(cfg,)) as pool:
            nested = list(pool.map(_run_task, tasks, chunksize=4))
    else:
        _init_worker(cfg)
        nested = [_run_task(t) for t in tasks]
    rows = [row for chunk in nested for row in chunk]

    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = candidate_names(cfg)
    write_selections_csv(out_dir / "selections.csv", rows, names)
    rates = selection_rates(rows, names)
    write_rates_csv(out_dir / "rates.csv", rates, names)

    import scipy

    report = {
        "config": asdict(cfg),
        "versions": {"jsdrazor": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "n_rows": len(rows),
        "wall_time_s": round(time.time() - t_start, 3),
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, default=str) + "\n")
    return report
