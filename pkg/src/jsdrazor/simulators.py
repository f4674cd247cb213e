"""Built-in simulators: multinomial wrappers and a toy NFDS population model.

The NFDS simulator is a deliberately small reconstruction of the pneumococcal
post-vaccine dynamics family: a discrete-time population resampled each
generation with reproduction probabilities proportional to

    count_i * exp( -v [vaccine_type_i] + sum_{l in loci(i)} sigma_l (e_l - f_l) ),

where ``f_l`` is the current population frequency of accessory locus ``l`` and
``e_l`` its equilibrium value, plus migration: each offspring is, with
probability ``m``, drawn from the realized initial cluster distribution
instead.  Variants differ in the locus selection strengths ``sigma_l``: all
zero (neutral, d = 2), all equal to ``sigma_f`` (homogeneous, d = 3), or
``sigma_f`` on a fraction ``p_f`` of loci and ``sigma_w`` on the rest
(heterogeneous, d = 5, constrained to ``sigma_f > sigma_w``).  Parameters are
log-scaled except ``p_f``.

Observations mirror the cluster-frequency surveys: at each observation month
the simulator samples isolates without replacement and concatenates the
per-timepoint count blocks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .categorical import Categorical, CountVector, sample_multinomial
from .errors import ConfigError, ConstraintError, DomainError
from .model import ParametricModel, loglinear_model
from .rng import generator, split_seed

NFDS_VARIANTS = ("neutral", "homogeneous", "heterogeneous")

# Parameter rows: ln m, ln v, ln sigma_f, ln sigma_w, p_f.
_NFDS_BOX_FULL = np.array([
    [-7.0, -1.6],
    [-7.0, -0.7],
    [-7.0, -1.6],
    [-7.0, -1.9],
    [0.0, 1.0],
])
_NFDS_DIMS = {"neutral": 2, "homogeneous": 3, "heterogeneous": 5}


@dataclass(frozen=True)
class ModelSimulator:
    """Multinomial sampling from a model's category probabilities."""

    model: ParametricModel

    @property
    def k(self) -> int:
        return self.model.k

    @property
    def d(self) -> int:
        return self.model.d

    @property
    def theta_box(self) -> np.ndarray:
        return self.model.theta_box

    def run(self, theta: np.ndarray, n: int, seed: int) -> CountVector:
        return sample_multinomial(self.model.probs(theta), n, seed)


def multilogit_simulator(model: ParametricModel) -> ModelSimulator:
    return ModelSimulator(model)


def loglinear_simulator(variant: str, n: int | None = None) -> ModelSimulator:
    return ModelSimulator(loglinear_model(variant, n))


@dataclass(frozen=True)
class NFDSConfig:
    """Static configuration of the toy NFDS population model."""

    n_clusters: int
    vaccine_type: np.ndarray
    loci: np.ndarray
    equilibrium_freqs: np.ndarray
    initial_freqs: np.ndarray
    pop_size: int = 10_000
    generations_per_obs: int = 1
    obs_times: tuple[int, ...] = (36, 72)
    obs_weights: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        vt = np.asarray(self.vaccine_type, dtype=bool)
        loci = np.asarray(self.loci, dtype=np.float64)
        eq = np.asarray(self.equilibrium_freqs, dtype=np.float64)
        init = np.asarray(self.initial_freqs, dtype=np.float64)
        k = self.n_clusters
        if vt.shape != (k,):
            raise ConfigError(f"vaccine_type must have shape ({k},)")
        if loci.ndim != 2 or loci.shape[0] != k:
            raise ConfigError(f"loci must be (n_clusters, L), got {loci.shape}")
        if not np.all((loci == 0) | (loci == 1)):
            raise ConfigError("loci entries must be binary")
        if eq.shape != (loci.shape[1],) or np.any(eq <= 0) or np.any(eq >= 1):
            raise ConfigError("equilibrium frequencies must be strictly inside (0, 1)")
        if init.shape != (k,) or np.any(init < 0) or abs(init.sum() - 1.0) > 1e-9:
            raise ConfigError("initial_freqs must be a probability vector over clusters")
        if self.pop_size < 2 or self.generations_per_obs < 1:
            raise ConfigError("pop_size >= 2 and generations_per_obs >= 1 required")
        if not self.obs_times or any(t < 1 for t in self.obs_times) or \
                list(self.obs_times) != sorted(self.obs_times):
            raise ConfigError("obs_times must be increasing months >= 1")
        if self.obs_weights is not None and len(self.obs_weights) != len(self.obs_times):
            raise ConfigError("obs_weights must match obs_times")
        for name, arr in (("vaccine_type", vt), ("loci", loci),
                          ("equilibrium_freqs", eq), ("initial_freqs", init / init.sum())):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def _allocate(n: int, weights: np.ndarray) -> np.ndarray:
    """Largest-remainder split of n across blocks; each block gets >= 1 when possible."""
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    raw = n * w
    base = np.floor(raw).astype(np.int64)
    short = n - base.sum()
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    if n >= len(w):
        while np.any(base == 0):
            base[np.argmax(base)] -= 1
            base[np.argmin(base)] += 1
    return base


class NFDSSimulator:
    """Simulator-protocol wrapper around one NFDS variant."""

    def __init__(self, cfg: NFDSConfig, variant: str):
        if variant not in NFDS_VARIANTS:
            raise ConfigError(f"unknown NFDS variant {variant!r}; choose from {NFDS_VARIANTS}")
        self.cfg = cfg
        self.variant = variant
        self.d = _NFDS_DIMS[variant]
        self.theta_box = _NFDS_BOX_FULL[: self.d].copy()
        self.theta_box.flags.writeable = False
        self.block_lengths = tuple(cfg.n_clusters for _ in cfg.obs_times)
        self.k = cfg.n_clusters * len(cfg.obs_times)
        self.name = f"nfds_{variant}"

    def constraint(self, theta: np.ndarray) -> bool:
        """Feasibility: the strong selection rate must exceed the weak one."""
        if self.variant != "heterogeneous":
            return True
        return bool(theta[2] > theta[3])

    def _sigmas(self, theta: np.ndarray, seed: int) -> np.ndarray:
        n_loci = self.cfg.loci.shape[1]
        if self.variant == "neutral":
            return np.zeros(n_loci)
        sigma_f = math.exp(theta[2])
        if self.variant == "homogeneous":
            return np.full(n_loci, sigma_f)
        sigma_w, p_f = math.exp(theta[3]), theta[4]
        # Per-locus strengths from dedicated hash streams so the p_f = 1 case
        # consumes exactly the same main-stream randomness as homogeneous.
        draws = np.array([generator(split_seed(seed, 0x10C1, l)).random()
                          for l in range(n_loci)])
        return np.where(draws < p_f, sigma_f, sigma_w)

    def run(self, theta: np.ndarray, n: int, seed: int) -> CountVector:
        theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        if theta.shape != (self.d,):
            raise DomainError(f"theta must have shape ({self.d},), got {theta.shape}")
        lo, hi = self.theta_box[:, 0], self.theta_box[:, 1]
        if np.any(theta < lo) or np.any(theta > hi):
            raise DomainError(f"theta={theta} outside the parameter box")
        if self.variant == "heterogeneous" and not self.constraint(theta):
            raise ConstraintError("heterogeneous variant requires sigma_f > sigma_w")
        cfg = self.cfg
        m, v = math.exp(theta[0]), math.exp(theta[1])
        sigmas = self._sigmas(theta, seed)

        rng = generator(split_seed(seed, 0x9090))
        counts = rng.multinomial(cfg.pop_size, cfg.initial_freqs)
        origin = counts / cfg.pop_size
        vt_penalty = np.where(cfg.vaccine_type, -v, 0.0)

        block_sizes = _allocate(n, np.asarray(cfg.obs_weights if cfg.obs_weights is not None
                                              else np.ones(len(cfg.obs_times))))
        blocks: list[np.ndarray] = []
        obs_iter = iter(zip(cfg.obs_times, block_sizes))
        next_obs = next(obs_iter, None)
        for month in range(1, max(cfg.obs_times) + 1):
            for _ in range(cfg.generations_per_obs):
                freqs = counts / cfg.pop_size
                locus_freqs = cfg.loci.T @ freqs
                fitness = vt_penalty + cfg.loci @ (sigmas * (cfg.equilibrium_freqs - locus_freqs))
                weights = counts * np.exp(fitness)
                weights = weights / weights.sum()
                q = (1.0 - m) * weights + m * origin
                counts = rng.multinomial(cfg.pop_size, q / q.sum())
            if next_obs is not None and month == next_obs[0]:
                blocks.append(rng.multivariate_hypergeometric(counts, int(next_obs[1])))
                next_obs = next(obs_iter, None)
        return CountVector(np.concatenate(blocks))


def nfds_simulator(cfg: NFDSConfig, variant: str) -> NFDSSimulator:
    return NFDSSimulator(cfg, variant)


# ---------------------------------------------------------------------------
# Cluster-frequency data files (the post-vaccine survey shape)

_CLUSTER_HEADER = ["cluster_id", "vt_flag", "count_t0", "count_t36", "count_t72"]


@dataclass(frozen=True)
class ClusterData:
    """Cluster survey counts at months 0, 36, 72 with vaccine-type flags."""

    cluster_ids: list[str]
    vt_flag: np.ndarray
    counts: np.ndarray  # (n_clusters, 3)

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_ids)

    def observed_counts(self) -> CountVector:
        """Post-vaccine blocks (t=36, t=72) concatenated; t=0 initializes."""
        return CountVector(np.concatenate([self.counts[:, 1], self.counts[:, 2]]))


def write_cluster_csv(path, data: ClusterData) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CLUSTER_HEADER)
        for i, cid in enumerate(data.cluster_ids):
            writer.writerow([cid, int(data.vt_flag[i]), *[int(x) for x in data.counts[i]]])


def load_cluster_csv(path) -> ClusterData:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != _CLUSTER_HEADER:
            raise ConfigError(f"expected columns {_CLUSTER_HEADER}, got {reader.fieldnames}")
        ids, flags, rows = [], [], []
        for row in reader:
            ids.append(row["cluster_id"])
            flags.append(bool(int(row["vt_flag"])))
            rows.append([int(row["count_t0"]), int(row["count_t36"]), int(row["count_t72"])])
    return ClusterData(ids, np.array(flags), np.array(rows, dtype=np.int64))


def synthetic_cluster_data(seed: int = 0, n_clusters: int = 41,
                           sample_sizes: tuple[int, int, int] = (133, 203, 280)) -> ClusterData:
    """A synthetic stand-in with the survey's shape: skewed cluster frequencies
    and a visible post-vaccine decline of vaccine-type isolates."""
    rng = generator(split_seed(seed, 0x5A5A))
    base = rng.dirichlet(np.full(n_clusters, 0.7))
    vt = rng.random(n_clusters) < 0.4
    tilt36 = base * np.exp(np.where(vt, -1.2, 0.0) + 0.15 * rng.standard_normal(n_clusters))
    tilt72 = base * np.exp(np.where(vt, -2.4, 0.0) + 0.25 * rng.standard_normal(n_clusters))
    counts = np.column_stack([
        rng.multinomial(sample_sizes[0], base),
        rng.multinomial(sample_sizes[1], tilt36 / tilt36.sum()),
        rng.multinomial(sample_sizes[2], tilt72 / tilt72.sum()),
    ])
    ids = [f"SC{i + 1:02d}" for i in range(n_clusters)]
    return ClusterData(ids, vt, counts)


def nfds_config_from_cluster_data(data: ClusterData, *, n_loci: int = 16,
                                  pop_size: int = 10_000, generations_per_obs: int = 1,
                                  seed: int = 0) -> NFDSConfig:
    """Build an NFDS configuration around observed cluster surveys.

    The initial cluster distribution comes from the ``t=0`` sample (Laplace
    smoothed so later-appearing clusters are reachable), the accessory-genome
    matrix is seeded binary, and locus equilibria are set to the initial
    population's locus frequencies, so selection pressure arises only once the
    vaccine term displaces the population.
    """
    k = data.n_clusters
    init = (data.counts[:, 0] + 0.5) / (data.counts[:, 0].sum() + 0.5 * k)
    rng = generator(split_seed(seed, 0xB10C))
    loci = (rng.random((k, n_loci)) < 0.5).astype(np.float64)
    eq = np.clip(loci.T @ init, 0.02, 0.98)
    totals = (float(data.counts[:, 1].sum()), float(data.counts[:, 2].sum()))
    return NFDSConfig(
        n_clusters=k,
        vaccine_type=data.vt_flag,
        loci=loci,
        equilibrium_freqs=eq,
        initial_freqs=init / init.sum(),
        pop_size=pop_size,
        generations_per_obs=generations_per_obs,
        obs_times=(36, 72),
        obs_weights=totals,
    )
