"""Command-line orchestration: config in, JSON/CSV (and figures) out, manifest last.

Exit codes: 0 success, 1 validation failure (bad config/arguments), 2 numeric
failure (precision loss, one-cut violation, non-converged quadrature).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import asymptotics, equilibrium, kernels
from .clt import ExperimentSpec, clt_experiment
from .config import ConfigError, ExperimentConfig, write_resolved
from .equilibrium import (InconsistentPotential, OneCutViolation, QuadratureError,
                          compute_P, compute_density, verify_one_cut)
from .orthopoly import PrecisionError, RangeError, build_recurrence, evaluate_basis, overlap_matrix
from .persist import (PersistError, RunManifest, StepTimer, batch_to_binary,
                      batch_to_csv, config_hash, save_json)
from .potential import ConfigurationError, DomainError, TestFunction
from .sampler import SamplerConfig, SamplerError, chain_diagnostics, sample_log_gas

VALIDATION_ERRORS = (ConfigError, ConfigurationError, DomainError, SamplerError,
                     RangeError, kernels.KernelRangeError, PersistError, ValueError)
NUMERIC_ERRORS = (PrecisionError, OneCutViolation, InconsistentPotential,
                  QuadratureError, FloatingPointError)


def _write_csv(path: Path, header: str, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [header]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, float) else str(v)
                              for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def cmd_equilibrium(cfg: ExperimentConfig, out: Path, manifest: RunManifest) -> list:
    r = cfg.resolved()
    pot = cfg.potential()
    eq = compute_density(pot)
    rep = verify_one_cut(pot)
    payload = {
        "P_coeffs": list(eq.P_coeffs),
        "mass": eq.mass,
        "mass_quadrature_error": eq.mass_quadrature_error,
        "grid_points": eq.grid_points.tolist(),
        "density_values": eq.density_values.tolist(),
        "u_points": eq.u_points.tolist(),
        "u_values": eq.u_values.tolist(),
        "conditions": rep.as_dict(),
    }
    outputs = [save_json(payload, out / "equilibrium.json")]
    outputs.append(_write_csv(out / "equilibrium_density.csv", "lambda,density",
                              zip(eq.grid_points.tolist(), eq.density_values.tolist())))
    return outputs


def cmd_orthopoly(cfg: ExperimentConfig, out: Path, manifest: RunManifest) -> list:
    r = cfg.resolved()
    pot = cfg.potential()
    n = r["n"]
    table = build_recurrence(pot, n, quad=cfg.quad(),
                             precision_digits=r["precision.digits"])
    basis = evaluate_basis(table, pot, min(table.K - 1, n + 6), quad=cfg.quad())
    payload = {
        "n": n, "t": table.t, "K": table.K,
        "precision_digits": table.precision_digits,
        "J": table.J.tolist(), "q": table.q.tolist(),
        "gram_residual": basis.gram_residual,
        "coeff_error": table.coeff_error,
    }
    outputs = [save_json(payload, out / "orthopoly.json")]
    outputs.append(_write_csv(out / "recurrence.csv", "k,J,q",
                              zip(range(table.K), table.J.tolist(), table.q.tolist())))
    return outputs


def cmd_kernels(cfg: ExperimentConfig, out: Path, manifest: RunManifest) -> list:
    r = cfg.resolved()
    pot_base = ExperimentConfig({k: v for k, v in cfg.values.items() if k != "t"})
    pot = pot_base.potential()
    phi = cfg.phi()
    beta = r["beta"]
    rows = kernels.perturbation_stability(
        pot, phi, phi, r["kernels.n_list"], r["t_list"], beta,
        quad=cfg.quad(), precision_digits=r["precision.digits"])
    var_rows = [(row.n, row.t, row.variance, row.delta_from_t0,
                 row.error_estimate) for row in rows]
    n0 = r["kernels.n_list"][0]
    table, basis = kernels.build_basis(pot, n0, quad=cfg.quad(),
                                       precision_digits=r["precision.digits"],
                                       keep_mp_basis=(beta == 1))
    if beta == 1:
        bundle = kernels.build_matrix_kernel(basis, table, n0, pot)
        dens = bundle.one_point_density()
        extra = {"M_inv_norm": bundle.M_inv_norm, "M_condition": bundle.M_condition,
                 "marginalization_residual": kernels.marginalization_residual(bundle)}
    else:
        K = kernels.cd_kernel(basis, table, n0, pot)
        dens = np.diag(K.grid_matrix()) / n0
        extra = {"kernel_trace": K.trace()}
    payload = {"beta": beta, "phi_coeffs": list(phi.coeffs),
               "variance_table": [list(v) for v in var_rows],
               "density_lambda": basis.nodes.tolist(),
               "density_values": dens.tolist(), **extra}
    outputs = [save_json(payload, out / "kernels.json")]
    outputs.append(_write_csv(out / "variance_table.csv",
                              "n,t,variance,delta_from_t0,error_estimate",
                              var_rows))
    outputs.append(_write_csv(out / "one_point_density.csv", "lambda,density",
                              zip(basis.nodes.tolist(), dens.tolist())))
    return outputs


def cmd_verify(cfg: ExperimentConfig, out: Path, manifest: RunManifest) -> list:
    r = cfg.resolved()
    pot = cfg.potential()
    n = r["n"]
    checks = {}

    with StepTimer(manifest, "verify.equilibrium"):
        eq_rep = verify_one_cut(pot)
        eq = compute_density(pot)
        pts = np.linspace(-1.9, 1.9, 21)
        resid = equilibrium.equilibrium_residual(pot, eq, pts)
        checks["one_cut_conditions"] = {"pass": eq_rep.all_pass, **eq_rep.as_dict()}
        checks["equilibrium_residual"] = {"pass": resid <= 1e-6, "max_residual": resid}

    with StepTimer(manifest, "verify.recurrence"):
        table = build_recurrence(pot, n, quad=cfg.quad(),
                                 precision_digits=r["precision.digits"])
        basis = evaluate_basis(table, pot, min(table.K - 1, n + 6), quad=cfg.quad())
        drift = asymptotics.recurrence_asymptotics_check(table, eq.P_coeffs,
                                                         j_max=min(10, table.K - n - 1))
        checks["recurrence_drift"] = {
            "pass": drift.max_J_deviation <= 1.5 / n,
            "max_J_deviation": drift.max_J_deviation,
            "max_q_deviation": drift.max_q_deviation,
            "fitted_offset": drift.fitted_offset,
            "J_deviation": drift.J_deviation.tolist(),
        }
        sd, so, ks, dres, ores = asymptotics.string_equation_residual(table, pot)
        checks["string_equations"] = {"pass": max(sd, so) <= 1e-6,
                                      "diag_residual": sd, "offdiag_residual": so}

    with StepTimer(manifest, "verify.toeplitz"):
        td = asymptotics.toeplitz_limits(eq.P_coeffs)
        conv = asymptotics.symbol_convolution_residual(td)
        checks["symbol_inverse"] = {"pass": conv <= 1e-8, "residual": conv}
        M = overlap_matrix(basis, n, band=min(4, basis.k_max - n), pot=pot)
        mrep = asymptotics.m_matrix_limit_check(M, td, n, band=min(4, basis.k_max - n))
        checks["m_matrix_limit"] = {
            "pass": mrep.max_deviation <= 0.5 and mrep.parity_zero_max <= 1e-10,
            "max_deviation": mrep.max_deviation,
            "parity_zero_max": mrep.parity_zero_max,
            "deviations": mrep.deviations.tolist(),
        }
        eps_res = asymptotics.epsilon_difference_check(basis, td, n, j=0)
        checks["epsilon_difference"] = {"pass": eps_res <= 0.5, "residual_norm": eps_res}
        gram = basis.gram_residual
        checks["orthonormality"] = {"pass": gram <= 1e-9, "gram_residual": gram}

    all_pass = all(c["pass"] for c in checks.values())
    payload = {"all_pass": all_pass, "n": n, "checks": checks}
    outputs = [save_json(payload, out / "verify.json")]
    return outputs, all_pass


def cmd_sample(cfg: ExperimentConfig, out: Path, manifest: RunManifest,
               binary: bool = False) -> list:
    r = cfg.resolved()
    scfg = SamplerConfig(n=r["n"], beta=r["beta"], pot=cfg.potential(),
                         chains=r["sampler.chains"], sweeps=r["sampler.sweeps"],
                         burnin=r["sampler.burnin"], thin=r["sampler.thin"],
                         step_size=r["sampler.step_size"], master_seed=r["seed"])
    batch = sample_log_gas(scfg, threads=r["threads"])
    diag = chain_diagnostics(batch) if batch.draws >= 100 else None
    outputs = [batch_to_csv(batch, out / "samples.csv")]
    meta = {
        "n": batch.n, "beta": batch.beta, "draws": batch.draws,
        "acceptance_rates": batch.acceptance_rates,
        "step_sizes": batch.step_sizes,
        "tau": batch.tau, "ess": batch.ess, "seeds": batch.seeds,
        "diagnostics": None if diag is None else {
            "tau": diag.tau, "ess": diag.ess, "split_rhat": diag.split_rhat,
            "reliable": diag.reliable, "notes": diag.notes},
    }
    outputs.append(save_json(meta, out / "samples_meta.json"))
    if binary:
        outputs.append(batch_to_binary(batch, out / "samples.bin"))
    return outputs


def cmd_clt(cfg: ExperimentConfig, out: Path, manifest: RunManifest) -> list:
    r = cfg.resolved()
    pot = cfg.potential()
    outputs = []
    merged = []
    for phi_coeffs in r["clt.phis"]:
        phi = TestFunction(tuple(phi_coeffs))
        spec = ExperimentSpec(pot=pot, phi=phi, beta=r["beta"],
                              n_ladder=r["clt.n_ladder"], chains=r["sampler.chains"],
                              sweeps=r["sampler.sweeps"], burnin=r["sampler.burnin"],
                              thin=r["sampler.thin"], master_seed=r["seed"],
                              potential_id=config_hash({"c": r["potential.coeffs"]}),
                              precision_digits=r["precision.digits"],
                              threads=r["threads"], keep_series=True)
        ladder = clt_experiment(spec, persist_dir=out)
        merged.append(ladder.as_dict())
        # histogram data for external plotting: largest completed n
        if ladder.per_n:
            biggest = ladder.per_n[-1]
            centered = ladder.series_by_n[biggest.n]
            counts, edges = np.histogram(centered, bins=64)
            tag = "".join(str(int(c)) for c in phi_coeffs)[:8]
            outputs.append(_write_csv(out / f"clt_hist_phi{tag}.csv",
                                      "bin_left,bin_right,count",
                                      zip(edges[:-1].tolist(), edges[1:].tolist(),
                                          counts.tolist())))
            outputs.append(_write_csv(out / f"clt_values_phi{tag}.csv", "value",
                                      ((v,) for v in centered.tolist())))
    outputs.append(save_json({"runs": merged}, out / "clt.json"))
    return outputs


def cmd_report(cfg: ExperimentConfig, out: Path, manifest: RunManifest,
               inputs: list) -> list:
    """Merge clt run JSONs; render figures next to the delimited output."""
    from .figures import density_overlay, fluctuation_histogram, variance_ladder
    from .persist import load_json
    runs = []
    outputs = []
    for p in inputs:
        doc = load_json(p)
        if "density_values" in doc:  # an equilibrium.json: render the density
            outputs.append(density_overlay(doc["grid_points"], doc["density_values"],
                                           out / f"density_{Path(p).stem}.png"))
            continue
        runs.extend(doc.get("runs", [doc] if "per_n" in doc else []))
    if not runs and not outputs:
        raise ConfigError("report needs at least one clt or equilibrium output JSON")
    merged_path = save_json({"runs": runs}, out / "report.json")
    outputs.append(merged_path)
    ladder_rows = []
    for i, run in enumerate(runs):
        rows = [tuple(r) for r in run.get("variance_by_n", [])]
        for n_, v_, s_ in rows:
            ladder_rows.append((i, n_, v_, s_))
        if rows:
            kp = [(d["n"], d["kernel_variance"]) for d in run.get("per_n", [])
                  if d.get("kernel_variance") is not None]
            outputs.append(variance_ladder(rows, run.get("limit_variance_estimate",
                                                         float("nan")),
                                           out / f"variance_ladder_run{i}.png",
                                           kernel_points=kp or None))
    for p in inputs:
        side = sorted(Path(p).parent.glob("clt_values_phi*.csv"))
        for sv in side:
            vals = np.array([float(x) for x in sv.read_text().splitlines()[1:]])
            if vals.size:
                rep = {"mc_variance": float(vals.var(ddof=1)), "n": "merged",
                       "ks_pvalue": float("nan")}
                outputs.append(fluctuation_histogram(
                    vals, rep, out / (sv.stem.replace("clt_values", "fluct_hist")
                                      + ".png")))
    outputs.append(_write_csv(out / "report_ladders.csv", "run,n,variance,se",
                              ladder_rows))
    return outputs


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="onecut",
                                 description="one-cut log-gas numerical laboratory")
    ap.add_argument("--config", type=Path, default=None, help="dotted-key config file")
    ap.add_argument("--out", type=Path, default=None, help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="master seed (u64)")
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--precision", type=int, default=None, help="working digits")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("equilibrium", "orthopoly", "kernels", "verify", "clt"):
        sub.add_parser(name)
    ps = sub.add_parser("sample")
    ps.add_argument("--binary", action="store_true", help="also write the binary dump")
    pr = sub.add_parser("report")
    pr.add_argument("inputs", nargs="+", type=Path, help="clt output JSONs to merge")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = (ExperimentConfig.from_file(args.config) if args.config
               else ExperimentConfig({}))
        if args.seed is not None:
            cfg.values["seed"] = args.seed
        if args.threads is not None:
            cfg.values["threads"] = args.threads
        if args.precision is not None:
            cfg.values["precision.digits"] = args.precision
        resolved = cfg.resolved()
        out = args.out if args.out is not None else Path(resolved["output.dir"])
        out.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(config_hash=config_hash(resolved))
        outputs = [write_resolved(resolved, out / "resolved_config.txt")]
        verify_ok = True
        with StepTimer(manifest, args.command):
            if args.command == "equilibrium":
                outputs += cmd_equilibrium(cfg, out, manifest)
            elif args.command == "orthopoly":
                outputs += cmd_orthopoly(cfg, out, manifest)
            elif args.command == "kernels":
                outputs += cmd_kernels(cfg, out, manifest)
            elif args.command == "verify":
                more, verify_ok = cmd_verify(cfg, out, manifest)
                outputs += more
            elif args.command == "sample":
                outputs += cmd_sample(cfg, out, manifest, binary=args.binary)
            elif args.command == "clt":
                outputs += cmd_clt(cfg, out, manifest)
            elif args.command == "report":
                outputs += cmd_report(cfg, out, manifest, args.inputs)
        for p in outputs:
            manifest.add_output(p)
        manifest.write(out / "manifest.json")
        if not verify_ok:
            print("verification checks failed (see verify.json)", file=sys.stderr)
            return 2
        return 0
    except NUMERIC_ERRORS as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2
    except VALIDATION_ERRORS as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
