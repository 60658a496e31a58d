"""Command-line entry point: ``runtumble {analyze,ldp,simulate,verify}``.

Global flags ``--config PATH --out DIR --threads N --seed U64`` may be given
before or after the command. Exit codes: 0 ok, 2 config error, 3 numerical
failure, 4 acceptance failure.

Config file schema (sections and keys are case-insensitive, velocity names
are not; lists are comma separated or ``linspace(a, b, n)``)::

    [model]        type = lattice | continuum
                   lambda, kappa, gamma   rates (gamma > 0)
                   E                      field (continuum only)
                   kernel_rate            passive jump rate multiplier
    [kernel]       z1, ..., zd = p        symmetric jump law on Z^d
    [velocities]   name = v1, ..., vd     velocity set
    [flips]        from, to = rate        flip rates pi (default: all pairs at 1)
    [grids]        alpha, q, z, x, gamma, epsilon, scaling_q, scaling_z
    [simulation]   t, n, seed, threads, clt_t, clt_n,
                   scgf_alpha, scgf_t, scgf_n, endpoints
    [tolerances]   closed_spectral, spectral_variational, diffusion_rel,
                   mc_stderr, matrix_exponential, dirichlet, dv_convex,
                   dv_stationary, fk_stderr, min_order, young,
                   rate_at_mean, ks_level
    [verify]       seed, random_triples, random_models, mc_t, mc_n, fk_t,
                   fk_n, clt_t, clt_n, continuum_epsilon, gammas,
                   record_alpha, record_fk_t, record_fk_n
    [output]       dir

A lattice model without [kernel] and [velocities] is the one-dimensional
two-state model. Unknown sections or keys are rejected with the offending
line number. Outputs per command, all under the output directory:

    analyze    fourier_laplace.csv, diffusion.json, scaling_diagnostic.csv
    ldp        free_energy.csv, rate_function.csv, verify.json
    simulate   sim_stats.json, endpoints.csv (if ``endpoints = true``)
    verify     report.json
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, dump_config, load_config, with_overrides
from .free_energy import rate_function_curve
from .model import ContinuumModel, DomainError, ModelError, NumericalError
from .simulate import clt_check, estimate_diffusion, estimate_scgf, simulate_lattice, simulate_telegrapher
from .spectral import cumulant_rates, free_energy_spectral
from .transforms import diffusion_constant, scaling_diagnostic, transform_grid
from .verify import axis_free_energy, free_energy_table, gamma_monotone, model_records, run_all

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 2, 3, 4


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_plain(data), indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else ("" if v is None else v)
                        for v in row])


def _has_closed_transform(model) -> bool:
    if isinstance(model, ContinuumModel):
        return model.E == 0
    return model.is_two_state_1d()


# --- commands -------------------------------------------------------------------------------


def cmd_analyze(cfg: RunConfig, out: Path) -> int:
    model = cfg.model.build()
    g = cfg.grids
    velocity, D = cumulant_rates(model)
    summary = {"model_type": cfg.model.type, "velocity": velocity, "diffusion_matrix": D}
    if isinstance(model, ContinuumModel) or model.is_two_state_1d():
        summary["sigma2"] = diffusion_constant(model)
    if _has_closed_transform(model):
        rows = transform_grid(model, g.q, g.z)
        keys = ["q", "z_re", "z_im", "S_re", "S_im", "closed_form_residual"]
        _write_csv(out / "fourier_laplace.csv", keys, ([r[k] for k in keys] for r in rows))
        diag = scaling_diagnostic(model, g.scaling_q, g.scaling_z, g.epsilon)
        _write_csv(out / "scaling_diagnostic.csv", ["epsilon", "deviation"], diag.rows)
        summary["scaling"] = {"q": g.scaling_q, "z": g.scaling_z, "limit": diag.limit, "order": diag.order}
    else:
        print("note: no closed-form transform for this model; wrote diffusion.json only", file=sys.stderr)
    _write_json(out / "diffusion.json", summary)
    return EXIT_OK


def cmd_ldp(cfg: RunConfig, out: Path) -> int:
    model = cfg.model.build()
    table = free_energy_table(model, cfg.grids.alpha)
    d = model.d
    alpha_cols = ["alpha"] if d == 1 else [f"alpha_{k + 1}" for k in range(d)]
    _write_csv(out / "free_energy.csv", alpha_cols + ["F_closed", "F_spectral", "F_variational"],
               ([*a, c, s, v] for a, c, s, v in zip(table.alphas, table.closed, table.spectral, table.variational)))
    # rate function of the first coordinate
    F, dF = axis_free_energy(model, 0)
    curve = rate_function_curve(F, cfg.grids.x, dF)
    _write_csv(out / "rate_function.csv", ["x", "I", "alpha_star"],
               zip(curve.xs, curve.values, curve.maximizers))
    report = {"max_abs_discrepancy": table.max_discrepancy, "rate_function_coordinate": 1}
    if cfg.grids.gamma:
        report["gamma_grid"] = cfg.grids.gamma
        report["gamma_monotone"] = gamma_monotone(model, cfg.grids.gamma, cfg.grids.alpha)
    _write_json(out / "verify.json", report)
    return EXIT_OK


def _sub_seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    model = cfg.model.build()
    sim = cfg.simulation
    s_diff, s_clt, s_scgf = _sub_seeds(sim.seed, 3)
    est = estimate_diffusion(model, sim.t, sim.n, seed=s_diff, threads=sim.threads)
    velocity, D = cumulant_rates(model)
    clt = clt_check(model, sim.clt_t, sim.clt_n, seed=s_clt, threads=sim.threads)
    stats = {
        "t": sim.t,
        "n": sim.n,
        "seed": sim.seed,
        "sigma2": est.sigma2,
        "sigma2_stderr": est.stderr,
        "diffusion_matrix_analytic": D,
        "velocity": est.velocity,
        "velocity_stderr": est.velocity_stderr,
        "velocity_analytic": velocity,
        "n_batches": est.n_batches,
        "reliable": est.reliable,
        "clt": {"t": sim.clt_t, "n": sim.clt_n, "ks_statistic": clt.ks_statistic,
                "critical_value": clt.critical_value, "passed": clt.passed},
    }
    if sim.scgf_alpha:
        alphas = np.asarray(sim.scgf_alpha, dtype=float).reshape(-1, model.d)
        points = estimate_scgf(model, alphas, sim.scgf_t, sim.scgf_n, seed=s_scgf, threads=sim.threads)
        stats["scgf"] = [
            {
                "alpha": p.alpha,
                "F_hat": p.F_hat,
                "stderr": p.stderr,
                "F_hat_2t": p.F_hat_2t,
                "stderr_2t": p.stderr_2t,
                "bias_bound": p.bias_bound,
                "effective_sample_size": p.ess,
                "reliable": p.reliable,
                "F_spectral": free_energy_spectral(model, p.alpha),
            }
            for p in points
        ]
    _write_json(out / "sim_stats.json", stats)
    if sim.endpoints:
        sampler = simulate_telegrapher if isinstance(model, ContinuumModel) else simulate_lattice
        ends = sampler(model, sim.t, sim.n, seed=s_diff, threads=sim.threads)
        x = ends.x[0]
        cols = [f"x_{k + 1}" for k in range(x.shape[1])]
        _write_csv(out / "endpoints.csv", ["replica", *cols, "v_index"],
                   ([i, *x[i].tolist(), int(ends.v[i])] for i in range(x.shape[0])))
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path, only=None) -> int:
    threads = cfg.simulation.threads
    results = run_all(cfg.tolerances, cfg.verify, threads=threads, only=only)
    for r in results:
        print(r.line())
    model = cfg.model.build()
    v = cfg.verify
    report = {
        "passed": all(r.passed for r in results),
        "criteria": [
            {"number": r.number, "name": r.name, "passed": r.passed, "seconds": r.seconds, "details": r.details}
            for r in results
        ],
        "model_records": model_records(model, v.record_alpha, v.record_fk_t, v.record_fk_n,
                                       seed=v.seed, threads=threads),
    }
    _write_json(out / "report.json", report)
    failed = [r.number for r in results if not r.passed]
    if failed:
        print(f"failed criteria: {', '.join(map(str, failed))}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "ldp": cmd_ldp, "simulate": cmd_simulate, "verify": cmd_verify}


# --- argument parsing -----------------------------------------------------------------------


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", metavar="PATH", default=default, help="model/run configuration file")
    p.add_argument("--out", metavar="DIR", default=default, help="directory for all output files")
    p.add_argument("--threads", metavar="N", type=int, default=default, help="worker threads")
    p.add_argument("--seed", metavar="U64", type=int, default=default, help="top-level random seed")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="runtumble", description=__doc__.splitlines()[0],
                                     epilog="See the module docstring of runtumble.cli for the config schema.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "analyze": "Fourier-Laplace transforms, diffusion constant, scaling diagnostic",
        "ldp": "free energy by three methods and the rate function",
        "simulate": "Monte Carlo diffusion, drift, CLT and SCGF estimates",
        "verify": "run the cross-verification matrix and write report.json",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        _global_flags(p, suppress=True)
        if name == "verify":
            p.add_argument("--criteria", metavar="LIST", type=_int_list, default=None,
                           help="comma-separated criterion numbers to run (default: all)")
    sub.add_parser("show-config", help="print the parsed configuration with defaults filled in")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be a nonnegative integer")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = with_overrides(cfg, out=args.out, threads=args.threads, seed=args.seed)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "show-config":
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if args.command == "verify":
            return cmd_verify(cfg, out, only=args.criteria)
        return COMMANDS[args.command](cfg, out)
    except (ModelError, DomainError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
