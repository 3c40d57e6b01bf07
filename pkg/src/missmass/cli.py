"""Command-line entry point.

    missmass <experiment> --config PATH [--out DIR] [--seed N] [--threads N]

Exit status: 0 success, 2 configuration error, 3 numerical failure,
4 a concentration bound was violated, 5 I/O error.  Reports land in ``--out``,
else ``$MISSMASS_OUT_DIR``, else ``./results``.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from . import config as cfgmod
from .asymptotics import consistency_diagnostic, expected_k_nr_power_law, karlin_constant, phi_vs_ek_gap, slowly_varying_part
from .bounds import empirical_tail_compare, variance_factor_minus, variance_factor_plus
from .config import ConfigError, ExperimentConfig
from .errors import DomainError, NumericalError
from .generators import GammaProcessSpec, RegVarSpec, finite_uniform, gamma_process_draw, geometric, power_law
from .inconsistency import QUANTILES, inconsistency_experiment
from .model import ProbabilityVector, expected_k_n, expected_k_nr, expected_m_n, phi_n, phi_nr
from .report import Table, emit
from .sampler import ReplicateDataset, derive_seed, run_replicates

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VIOLATION = 4
EXIT_IO = 5

OUT_ENV = "MISSMASS_OUT_DIR"


class BoundViolation(Exception):
    pass


def spec_of(family) -> RegVarSpec | GammaProcessSpec | None:
    if family.kind == "power_law":
        return RegVarSpec(family.alpha, family.scale, family.log_exponent, family.truncation_threshold)
    if family.kind == "gamma_process":
        return GammaProcessSpec(family.jump_truncation, family.tilt)
    return None


def build_vector(family, seed: int) -> ProbabilityVector:
    if family.kind == "power_law":
        return power_law(spec_of(family))
    if family.kind == "geometric":
        return geometric(family.q, family.truncation_threshold)
    if family.kind == "finite_uniform":
        return finite_uniform(family.J, family.p)
    return gamma_process_draw(spec_of(family), derive_seed(seed, 0))


def _meta(cfg: ExperimentConfig) -> dict:
    return {
        "experiment": cfg.experiment,
        "software_version": __version__,
        "config_digest": cfg.digest(),
        "master_seed": cfg.master_seed,
        "config": cfg.model_dump(mode="json"),
    }


def record_table(ds: ReplicateDataset, name: str = "records") -> Table:
    cols = ["replicate", "n", "k_n"] + [f"k_n{r}" for r in range(1, ds.R + 1)] + ["m_oracle", "m_hat", "tail_mass_bound"]
    rows = [
        [ds.replicate[i], ds.n[i], ds.k_n[i], *ds.k_nr[i], ds.m_oracle[i], ds.m_hat[i], ds.tail_mass_bound[i]]
        for i in range(len(ds))
    ]
    return Table(name, cols, rows)


# --- experiments: each returns (tables, summary, violated) ------------------------------


def run_moments(cfg: ExperimentConfig, p: ProbabilityVector, workers: int):
    cols = ["n", "expected_k_n"] + [f"expected_k_n{r}" for r in range(1, cfg.R + 1)]
    cols += ["expected_m_n", "phi_n", "phi_n1", "phi_n2", "v_minus", "v_plus", "tail_mass_bound"]
    rows = []
    for n in cfg.n_grid:
        knr = [expected_k_nr(p, n, r) if r <= n else 0.0 for r in range(1, cfg.R + 1)]
        vp = variance_factor_plus(p, n) if n > 2 else math.nan
        rows.append(
            [n, expected_k_n(p, n), *knr, expected_m_n(p, n), phi_n(p, n), phi_nr(p, n, 1), phi_nr(p, n, 2),
             variance_factor_minus(p, n), vp, p.tail_mass_bound]
        )
    return [Table("moments", cols, rows)], {"features": len(p)}, False


def run_simulate(cfg: ExperimentConfig, source, workers: int):
    ds = run_replicates(source, cfg.n_grid, cfg.replicates, cfg.master_seed, R=cfg.R, workers=workers, config_digest=cfg.digest())
    return [record_table(ds)], {"records": len(ds)}, False


def run_bounds(cfg: ExperimentConfig, p: ProbabilityVector, workers: int):
    main = Table(
        "bounds",
        ["n", "x", "v_minus", "v_plus", "left_bound", "right_bound", "emp_left", "emp_right",
         "stderr_left", "stderr_right", "violation_flag", "right_bound_chernoff"],
    )
    knr = Table("knr", ["n", "r", "x", "expected_k_nr", "bound", "emp", "stderr", "violation_flag"])
    violations = []
    for n in cfg.n_grid:
        ds = run_replicates(p, [n], cfg.replicates, derive_seed(cfg.master_seed, n), R=cfg.R, workers=workers, config_digest=cfg.digest())
        rep = empirical_tail_compare(ds, p, n, cfg.x_grid, cfg.k_grid, r=1)
        vl, vr = rep.violation_left, rep.violation_right
        for i, x in enumerate(rep.x_grid):
            main.rows.append(
                [n, x, rep.v_minus, rep.v_plus, rep.left_bounds[i], rep.right_bounds[i], rep.empirical_left[i],
                 rep.empirical_right[i], rep.stderr_left[i], rep.stderr_right[i], bool(vl[i] or vr[i]),
                 rep.right_bounds_chernoff[i]]
            )
        vk = rep.violation_knr
        for i, x in enumerate(rep.k_grid):
            knr.rows.append([n, rep.r, x, rep.expected_knr, rep.knr_bounds[i], rep.empirical_knr[i], rep.stderr_knr[i], bool(vk[i])])
        violations.extend({"n": n, "event": e, "x": x} for e, x in rep.violations)
    return [main, knr], {"violations": violations}, bool(violations)


def run_karlin(cfg: ExperimentConfig, p: ProbabilityVector, workers: int):
    spec = spec_of(cfg.family)
    exact = spec.log_exponent == 0.0
    cols = ["n", "r", "expected_k_nr", "karlin_constant", "asymptote", "ratio", "phi_nr", "r_gap", "implied_c",
            "aggregate_gap", "aggregate_budget", "exact_normalization"]
    rows = []
    for n in cfg.n_grid:
        gaps = {r: phi_vs_ek_gap(p, n, r) if n > 2 else None for r in cfg.r_values}
        for r in cfg.r_values:
            if r > n:
                continue
            e = expected_k_nr_power_law(spec, n, r)
            k = karlin_constant(spec.alpha, r)
            asym = k * n**spec.alpha * slowly_varying_part(spec, n)
            g = gaps[r]
            rows.append([n, r, e, k, asym, e / asym, phi_nr(p, n, r),
                         g.r_gap if g else math.nan, g.implied_c if g else math.nan,
                         g.gap if g else math.nan, g.budget if g else math.nan, exact])
    return [Table("karlin", cols, rows)], {}, False


def run_consistency(cfg: ExperimentConfig, source, workers: int):
    ds = run_replicates(source, cfg.n_grid, cfg.replicates, cfg.master_seed, R=cfg.R, workers=workers, config_digest=cfg.digest())
    d = consistency_diagnostic(ds, cfg.epsilon)
    cols = ["n", "count", "degenerate", "mean_ratio", "median_ratio", "std_ratio", "frac_within"]
    rows = [[d.n_grid[i], d.count[i], d.degenerate[i], d.mean[i], d.median[i], d.std[i], d.frac_within[i]] for i in range(d.n_grid.size)]
    return [Table("consistency", cols, rows), record_table(ds)], {"epsilon": cfg.epsilon}, False


def run_inconsistency(cfg: ExperimentConfig, source, workers: int):
    control = spec_of(cfg.control) if cfg.control is not None else None
    rep, _, _ = inconsistency_experiment(
        cfg.n_grid, cfg.replicates, cfg.epsilon, cfg.master_seed,
        jump_truncation=cfg.family.jump_truncation, control=control, R=cfg.R, workers=workers,
    )
    qcols = [f"q{int(round(q * 100)):02d}" for q in QUANTILES]
    cols = ["n", "count", "degenerate", "frac_outside", *qcols, "mean_ratio", "control_frac_outside", "analytic_floor"]
    rows = []
    for i, n in enumerate(rep.n_grid):
        cf = rep.control_frac_outside[i] if rep.control_frac_outside is not None else math.nan
        rows.append([n, rep.count[i], rep.degenerate[i], rep.frac_outside[i], *rep.quantiles[i], rep.mean_ratio[i], cf, rep.analytic_floor])
    summary = {
        "header": rep.header,
        "epsilon": rep.epsilon,
        "epsilon_bar": rep.epsilon_bar,
        "analytic_floor": rep.analytic_floor,
        "persists": rep.persists,
        "separated": rep.separated,
    }
    return [Table("inconsistency", cols, rows)], summary, False


RUNNERS = {
    "moments": run_moments,
    "simulate": run_simulate,
    "bounds": run_bounds,
    "karlin": run_karlin,
    "consistency": run_consistency,
    "inconsistency": run_inconsistency,
}


def prepare(cfg: ExperimentConfig):
    """Build the probability source up front so bad parameters fail before any output."""
    try:
        if cfg.experiment in ("simulate", "consistency", "inconsistency") and cfg.family.kind == "gamma_process":
            return spec_of(cfg.family)
        return build_vector(cfg.family, cfg.master_seed)
    except DomainError as err:
        raise ConfigError(f"family: {err}") from None


def run(cfg: ExperimentConfig, out_dir: Path, workers: int = 1) -> int:
    """Execute ``cfg`` and write its reports; returns the exit status."""
    source = prepare(cfg)
    tables, summary, violated = RUNNERS[cfg.experiment](cfg, source, workers)
    emit(out_dir, cfg.stem, _meta(cfg), tables, summary)
    return EXIT_VIOLATION if violated else EXIT_OK


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="missmass", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in cfgmod.EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", required=True, type=Path, help="YAML experiment config")
        sp.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV} or ./results)")
        sp.add_argument("--seed", type=int, default=None, help="override master_seed")
        sp.add_argument("--threads", type=int, default=1, help="worker processes, 0 = one per CPU")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        raw = cfgmod.yaml.safe_load(args.config.read_text())
    except OSError as err:
        print(f"error: config: cannot read {args.config} ({err.strerror})", file=sys.stderr)
        return EXIT_CONFIG
    except cfgmod.yaml.YAMLError as err:
        print(f"error: config: not valid YAML ({err})", file=sys.stderr)
        return EXIT_CONFIG
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        print("error: config: top level must be a mapping", file=sys.stderr)
        return EXIT_CONFIG
    raw.setdefault("experiment", args.experiment)
    if raw["experiment"] != args.experiment:
        print(f"error: experiment: config says {raw['experiment']!r} but subcommand is {args.experiment!r}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        raw["master_seed"] = args.seed
    if args.threads < 0:
        print("error: --threads: must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.out or Path(os.environ.get(OUT_ENV, "results"))
    try:
        cfg = cfgmod.parse_config(raw)
        status = run(cfg, out_dir, args.threads)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, DomainError) as err:
        print(f"error: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as err:
        print(f"error: output: {err}", file=sys.stderr)
        return EXIT_IO
    if status == EXIT_VIOLATION:
        print("bound violation detected; see the report", file=sys.stderr)
    else:
        print(f"wrote {cfg.stem}.* to {out_dir}")
    return status


if __name__ == "__main__":
    sys.exit(main())
