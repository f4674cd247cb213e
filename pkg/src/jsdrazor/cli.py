"""Command-line entry points.

    jsdrazor run <config>        reproduce an experiment from a config file
    jsdrazor validate            run the theory-property suites, report margins
    jsdrazor score               score count data under named built-in models

Configs are JSON, or INI-style key-value text with sections (``[experiment]``
for the top level plus ``[optimizer]``, ``[bolfi]``, ``[nfds]``).  Exit codes:
0 ok, 2 config error, 3 runtime error, 4 property failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .categorical import Categorical, CountVector, empirical_from_counts, sample_multinomial
from .divergence import LN2, jsd_pairwise
from .errors import ConfigError, JsdRazorError
from .estimate import min_jsd_fit, mle_fit
from .evidence import PriorSpec, acceptance_rate_limit, razor_bound_check
from .experiments import (ExperimentConfig, apply_paper_scale, config_from_dict,
                          run_experiment)
from .model import (ParametricModel, fisher_info, jsd_gradient, jsd_hessian,
                    loglinear_model, multilogit_model)
from .razor import ModelScore, model_volume, select, sic, sic_jsd
from .rng import generator, split_seed


def _parse_scalar(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except (json.JSONDecodeError, ValueError):
        pass
    if "," in text:
        return [_parse_scalar(part) for part in text.split(",")]
    return text


def load_config_file(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix.lower() == ".json":
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    raw: dict = {}
    for section in parser.sections():
        block = {key: _parse_scalar(value) for key, value in parser.items(section)}
        if section == "experiment":
            raw.update(block)
        else:
            raw[section] = block
    return raw


def _cmd_run(args) -> int:
    try:
        raw = load_config_file(Path(args.config))
        if args.seed is not None:
            raw["master_seed"] = args.seed
        if args.out is not None:
            raw["output_dir"] = args.out
        if args.jobs is not None:
            raw["jobs"] = args.jobs
        cfg = config_from_dict(raw)
        if args.paper_scale:
            cfg = apply_paper_scale(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_experiment(cfg)
    except JsdRazorError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    out = Path(cfg.output_dir)
    print(f"wrote {out / 'selections.csv'}, {out / 'rates.csv'}, {out / 'report.json'} "
          f"({report['n_rows']} rows, {report['wall_time_s']}s)")
    return 0


# ---------------------------------------------------------------------------
# Theory validation batch


def _random_simplex_pairs(n: int, seed: int):
    rng = generator(split_seed(seed, 0xD1CE))
    ks = rng.integers(2, 11, size=n)
    pairs = []
    for k in ks:
        pairs.append((rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))))
    return pairs


def _check(name: str, ok: bool, margin: str, lines: list[str]) -> bool:
    lines.append(f"{'PASS' if ok else 'FAIL'}  {name}  ({margin})")
    return ok


def validate_theory(seed: int = 0, pair_count: int = 10_000) -> tuple[bool, list[str]]:
    """Run the cross-module property batches; returns (all_passed, report lines)."""
    lines: list[str] = []
    ok = True
    rng = generator(split_seed(seed, 0xA11))

    # Divergence bounds on random simplex pairs, vectorized per k.
    worst_range, worst_half_kl, worst_l2 = 0.0, -math.inf, -math.inf
    for k in range(2, 11):
        p = rng.dirichlet(np.ones(k), size=pair_count // 9)
        q = rng.dirichlet(np.ones(k), size=pair_count // 9)
        js = jsd_pairwise(p, q)
        worst_range = max(worst_range, float(np.max(js - LN2)), float(np.max(-js)))
        with np.errstate(divide="ignore"):
            kl_vals = np.sum(np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0), axis=1)
        worst_half_kl = max(worst_half_kl, float(np.max(js - 0.5 * kl_vals)))
        l2 = np.sqrt(np.sum((p - q) ** 2, axis=1))
        worst_l2 = max(worst_l2, float(np.max(math.sqrt(2.0) / 4.0 * l2 - np.sqrt(js))))
    ok &= _check("jsd range [0, ln2]", worst_range <= 1e-12, f"max excess {worst_range:.2e}", lines)
    ok &= _check("jsd <= kl/2", worst_half_kl <= 1e-12, f"max excess {worst_half_kl:.2e}", lines)
    ok &= _check("sqrt(jsd) >= sqrt(2)/4 * l2", worst_l2 <= 1e-12, f"max excess {worst_l2:.2e}", lines)

    # Triangle inequality of the root divergence on random triples.
    k = 4
    a = rng.dirichlet(np.ones(k), size=pair_count)
    b = rng.dirichlet(np.ones(k), size=pair_count)
    c = rng.dirichlet(np.ones(k), size=pair_count)
    d_ab = np.sqrt(jsd_pairwise(a, b))
    d_ac = np.sqrt(jsd_pairwise(a, c))
    d_cb = np.sqrt(jsd_pairwise(c, b))
    tri = float(np.max(d_ab - d_ac - d_cb))
    ok &= _check("sqrt(jsd) triangle inequality", tri <= 1e-12, f"max excess {tri:.2e}", lines)

    # Derivative identities at random interior instances.
    m2 = multilogit_model(np.eye(2), 2)
    worst_grad = worst_iq = 0.0
    for i in range(20):
        theta = rng.uniform(-2.0, 2.0, 2)
        p_hat = Categorical(rng.dirichlet(np.ones(3)))
        grad = jsd_gradient(p_hat, m2, theta)
        fd = np.zeros(2)
        for s in range(2):
            h = 1e-6
            up, dn = theta.copy(), theta.copy()
            up[s] += h
            dn[s] -= h
            fd[s] = (float(jsd_pairwise(p_hat.probs[None], m2.probs_array(up)[None])[0])
                     - float(jsd_pairwise(p_hat.probs[None], m2.probs_array(dn)[None])[0])) / (2 * h)
        worst_grad = max(worst_grad, float(np.abs(grad - fd).max()))
        h_at_fit = jsd_hessian(m2.probs(theta), m2, theta)
        worst_iq = max(worst_iq, float(np.abs(h_at_fit - fisher_info(m2, theta) / 4).max()))
    ok &= _check("jsd gradient vs finite differences", worst_grad < 1e-6,
                 f"max dev {worst_grad:.2e}", lines)
    ok &= _check("hessian at perfect fit = I/4", worst_iq <= 1e-12,
                 f"max dev {worst_iq:.2e}", lines)

    # Volume integral bounds for the one-parameter three-category family.
    m1 = multilogit_model(np.eye(2), 1)
    vol_ok, worst_vol = True, 0.0
    for i in range(50):
        lo = rng.uniform(-4, 1)
        hi = lo + rng.uniform(0.5, 5)
        m_i = multilogit_model(np.eye(2), 1, box=np.array([[lo, hi]]))
        v64 = model_volume(m_i, 64)
        v32 = model_volume(m_i, 32)
        worst_vol = max(worst_vol, abs(v64 - v32))
        vol_ok &= 0 < v64 < 2 * math.pi
    ok &= _check("0 < volume < 2*pi and quadrature stable", vol_ok and worst_vol < 1e-8,
                 f"max 64-vs-32 node dev {worst_vol:.2e}", lines)

    # SIC_JSD < SIC on fitted instances.
    candidates = [multilogit_model(np.eye(2), l) for l in (0, 1, 2)]
    violations, instances, min_gap = 0, 0, math.inf
    for i in range(40):
        theta = rng.uniform(-1.0, 1.0, 2)
        counts = sample_multinomial(m2.probs(theta), 400, split_seed(seed, 0x5EED, i))
        p_hat = empirical_from_counts(counts)
        for j, cand in enumerate(candidates):
            fj = min_jsd_fit(cand, p_hat, seed=split_seed(seed, 1, i, j))
            fm = mle_fit(cand, counts, seed=split_seed(seed, 2, i, j))
            gap = sic(cand, counts, fm) - sic_jsd(cand, counts, fj)
            min_gap = min(min_gap, gap)
            violations += gap <= 0
            instances += 1
    ok &= _check(f"sic_jsd < sic on {instances} fits", violations == 0,
                 f"min gap {min_gap:.4f}", lines)

    # Evidence bound chain on random desk instances, both priors.
    chain_ok, n_checked = True, 0
    for i in range(24):
        k_cat = int(rng.integers(2, 4))
        model = multilogit_model(np.eye(k_cat - 1), min(k_cat - 1, int(rng.integers(0, 3))),
                                 box=np.tile([-2.0, 2.0], (min(k_cat - 1, 2), 1)))
        counts = CountVector(rng.integers(0, 9, size=k_cat) + (1 if k_cat == 2 else 0))
        if counts.total < 1:
            continue
        for variant in ("uniform_on_box", "jeffreys"):
            try:
                razor_bound_check(model, counts, PriorSpec(variant, 32))
                n_checked += 1
            except RuntimeError:
                chain_ok = False
    ok &= _check(f"evidence razor chain on {n_checked} instances", chain_ok, "strict order held", lines)

    # Acceptance-rate limit identity at desk scale.
    m_small = multilogit_model(np.eye(1), 1, box=np.array([[-2.0, 2.0]]))
    table = acceptance_rate_limit(m_small, CountVector(np.array([2, 2])), PriorSpec(nodes_per_dim=32))
    gap = abs(table.rows[-1].integral - table.limit_value)
    ok &= _check("acceptance-rate limit equals coefficient * evidence", gap < 1e-10,
                 f"gap {gap:.2e}", lines)

    return bool(ok), lines


def _cmd_validate(args) -> int:
    passed, lines = validate_theory(seed=args.seed,
                                    pair_count=2000 if args.fast else 10_000)
    print("\n".join(lines))
    print("all properties passed" if passed else "PROPERTY FAILURES PRESENT")
    return 0 if passed else 4


# ---------------------------------------------------------------------------
# Ad-hoc scoring of a counts file


def _builtin_model(name: str, k: int) -> ParametricModel:
    if name == "uniform":
        return multilogit_model(np.eye(max(k - 1, 1)), 0, name="uniform")
    if name in ("multilogit_d1", "multilogit_d2"):
        if k != 3:
            raise ConfigError(f"{name} needs k=3 categories, counts file has k={k}")
        return multilogit_model(np.eye(2), int(name[-1]))
    if name in ("loglinear_two_param", "loglinear_saturated"):
        if k != 4:
            raise ConfigError(f"{name} needs k=4 categories, counts file has k={k}")
        return loglinear_model(name.removeprefix("loglinear_"))
    raise ConfigError(f"unknown model {name!r}; built-ins: uniform, multilogit_d1, "
                      f"multilogit_d2, loglinear_two_param, loglinear_saturated")


def _load_counts(path: Path) -> CountVector:
    if not path.exists():
        raise ConfigError(f"counts file not found: {path}")
    row = path.read_text().strip().splitlines()[0]
    try:
        values = [int(x) for x in row.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"counts file must hold one CSV row of integers, got {row!r}") from None
    return CountVector(np.array(values, dtype=np.int64))


def _cmd_score(args) -> int:
    try:
        counts = _load_counts(Path(args.counts))
        models = [_builtin_model(name, counts.k) for name in args.model]
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        p_hat = empirical_from_counts(counts)
        scores = []
        for j, m in enumerate(models):
            fit = min_jsd_fit(m, p_hat, seed=split_seed(args.seed, 0x5C0, j))
            fm = mle_fit(m, counts, seed=split_seed(args.seed, 0x5C1, j))
            scores.append(ModelScore(m.name, m.d, fit,
                                     sic_jsd=sic_jsd(m, counts, fit),
                                     sic=sic(m, counts, fm)))
        if len(scores) >= 2:
            print(select(scores, n_o=counts.total, criterion=args.criterion).to_json())
        else:
            s = scores[0]
            print(json.dumps({"model": s.name, "d": s.d, "n_o": counts.total,
                              "sic_jsd": s.sic_jsd, "sic": s.sic,
                              "theta_hat": [float(x) for x in s.fit.theta_hat],
                              "min_jsd": s.fit.objective}, indent=2))
    except JsdRazorError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jsdrazor",
                                     description="Likelihood-free model choice via JSD scoring")
    parser.add_argument("--version", action="version", version=f"jsdrazor {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment from a config file")
    run_p.add_argument("config", help="JSON or INI config path")
    run_p.add_argument("--seed", type=int, default=None, help="override master_seed")
    run_p.add_argument("--paper-scale", action="store_true",
                       help="publication-size replicates and BOLFI budgets")
    run_p.add_argument("--jobs", type=int, default=None, help="worker processes")
    run_p.add_argument("--out", default=None, help="override output_dir")
    run_p.set_defaults(fn=_cmd_run)

    val_p = sub.add_parser("validate", help="run the theory-property suites")
    val_p.add_argument("--seed", type=int, default=0)
    val_p.add_argument("--fast", action="store_true", help="smaller sample counts")
    val_p.set_defaults(fn=_cmd_validate)

    score_p = sub.add_parser("score", help="score a CSV row of counts under built-in models")
    score_p.add_argument("--model", action="append", required=True,
                         help="built-in model name (repeatable)")
    score_p.add_argument("--counts", required=True, help="CSV file with one row of counts")
    score_p.add_argument("--criterion", default="sic_jsd", choices=["sic_jsd", "sic"])
    score_p.add_argument("--seed", type=int, default=0)
    score_p.set_defaults(fn=_cmd_score)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
