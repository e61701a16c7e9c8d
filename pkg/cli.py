# cli.py - opstable command line: check, norm, sample, cf, tangent, selftest
import os
import sys
import json
import math
import logging
import argparse
from contextlib import contextmanager
from typing import Callable, Dict, Tuple

from acceptance import run_selftest
from database import Database
from errors import ConfigError, NotIntegrableError, OpStableError
from fields import Verdict, check_conditions
from integrand_space import H, norm_M
from levy_cf import law_at, log_cf
from model_config import build_integrand, build_tangent, load_config
from operator_core import spectral_bounds
from pdf_generator import generate_report_pdf
from sampler import SMALL_JUMP_MODES, SeedSpec, sample_field
from serialization import json_default
from settings import get_quad_tol, setup_logging
from tangent import (
    additive_tangent_check, check_limit_hypotheses, convergence_sweep, oss_identity_check,
)

logger = logging.getLogger(__name__)

DEFAULT_K_MAX = 12

CommandRunner = Callable[[argparse.Namespace, object], Tuple[int, dict]]


class _ArgumentParser(argparse.ArgumentParser):
    # usage errors are operational errors: exit 1, never the verdict code 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _seed(text):
    value = int(text)
    if value < 0 or value >= 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def parse_args(argv=None) -> argparse.Namespace:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Path to the ModelConfig JSON document")
    common.add_argument("--out", help="Output path (report JSON, or CSV for sample)")
    common.add_argument("--seed", type=_seed, default=None, help="Master seed, overrides the config seed")
    common.add_argument("--tol", type=float, default=None,
                        help="Quadrature tolerance, overrides OPSTABLE_TOL and settings.quad_tol")
    common.add_argument("--ledger", help="Record the run in this sqlite ledger")
    common.add_argument("--pdf", metavar="DIR", help="Also write a PDF report into DIR (check, tangent)")
    common.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level (default: WARNING)")

    parser = _ArgumentParser(prog="opstable",
                             description="Multi operator-stable random measures: checks, sampling and tangent sweeps.")
    verbs = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)
    verbs.add_parser("check", parents=[common], help="Existence conditions, fullness and limit hypotheses")

    norm = verbs.add_parser("norm", parents=[common], help="Quasi-norm of the configured integrand")
    norm.add_argument("--t", type=float, nargs="+", default=None, help="Field time, overrides integrand.t")

    sample = verbs.add_parser("sample", parents=[common], help="Sample field paths on the configured grid")
    sample.add_argument("--n-paths", type=int, default=None, help="Number of paths, overrides sampling.n_paths")
    sample.add_argument("--small-jumps", choices=SMALL_JUMP_MODES, default=None,
                        help="Treatment of the jumps beyond the series truncation")

    verbs.add_parser("cf", parents=[common], help="Log-characteristic function at the configured points")

    tangent = verbs.add_parser("tangent", parents=[common], help="Convergence sweep towards the tangent law")
    tangent.add_argument("--u", type=float, nargs="+", default=None, help="Base point, overrides tangent.u")
    tangent.add_argument("--kmax", type=int, default=None,
                         help=f"Sweep r = 2^-k for k = 1..KMAX (default: {DEFAULT_K_MAX})")
    tangent.add_argument("--self-similarity", action="store_true",
                         help="Also check the operator self-similarity identity of the limit")

    selftest = verbs.add_parser("selftest", parents=[common], help="Run the bundled acceptance corpus")
    selftest.add_argument("--check", action="append", default=None, help="Check name to run. Repeatable.")
    selftest.add_argument("--quick", action="store_true", help="Skip the Monte Carlo sampling checks")
    return parser.parse_args(argv)


# ---------- HELPERS ----------

@contextmanager
def _tolerance(tol):
    """Expose ``tol`` as OPSTABLE_TOL for the duration of one command."""
    if tol is None:
        yield
        return
    previous = os.environ.get("OPSTABLE_TOL")
    os.environ["OPSTABLE_TOL"] = repr(float(tol))
    try:
        get_quad_tol()
        yield
    finally:
        if previous is None:
            os.environ.pop("OPSTABLE_TOL", None)
        else:
            os.environ["OPSTABLE_TOL"] = previous


def _effective_tol(args, cfg):
    if args.tol is not None:
        return args.tol
    if os.environ.get("OPSTABLE_TOL"):
        return None
    return cfg.settings.get("quad_tol") if cfg is not None else None


def _emit(doc, out):
    text = json.dumps(doc, indent=2, default=json_default)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
        logger.info(f"report written to {out}")
    else:
        print(text)


def _verdict_doc(verdicts):
    return {name: v.as_dict() for name, v in verdicts.items()}


def _seed_of(args, cfg):
    return args.seed if args.seed is not None else cfg.seed


# ---------- COMMANDS ----------

def cmd_check(args, cfg):
    sb = spectral_bounds(cfg.family, cfg.probes)
    report = {"command": "check",
              "spectral_bounds": {"a_hat": sb.a_hat, "b_hat": sb.b_hat, "within_declared": sb.within_declared}}
    if cfg.field_spec is not None:
        verdicts = dict(check_conditions(cfg.field_spec))
    else:
        margin = min(sb.a_hat, 2.0 - sb.b_hat)
        verdicts = {"existence": Verdict("existence", sb.within_declared, margin,
                                         {"a_hat": sb.a_hat, "b_hat": sb.b_hat})}
    if cfg.tangent is not None:
        hypotheses = check_limit_hypotheses(build_tangent(cfg))
        report["hypotheses"] = hypotheses
        verdicts["limit_hypotheses"] = Verdict("limit_hypotheses", hypotheses["passed"],
                                               1.0 if hypotheses["passed"] else -1.0,
                                               {"flags": hypotheses["flags"]})
    unknown = [name for name in cfg.require if name not in verdicts]
    if unknown:
        raise ConfigError("require", f"unknown verdicts {unknown}, available {sorted(verdicts)}")
    report["verdicts"] = _verdict_doc(verdicts)
    report["require"] = list(cfg.require)
    failed = [name for name in cfg.require if not verdicts[name].passed]
    report["failed"] = failed
    _emit(report, args.out)
    return (2 if failed else 0), report


def cmd_norm(args, cfg):
    node = cfg.integrand
    if args.t is not None:
        if node is None or node.get("kind") != "field":
            raise ConfigError("integrand", "--t applies to field integrands only")
        node = dict(node, t=args.t)
    f = build_integrand(cfg, node)
    value = norm_M(f, cfg.family)
    residual = H(f, cfg.family, lam=value) - 1.0 if value > 0 else 0.0
    report = {"command": "norm", "norm": value, "residual": residual}
    _emit(report, args.out)
    return 0, report


def cmd_sample(args, cfg):
    if cfg.field_spec is None:
        raise ConfigError("field", "sampling needs a field section")
    verdicts = check_conditions(cfg.field_spec)
    if not verdicts["existence"].passed:
        print("[error] existence conditions fail; the field is not defined", file=sys.stderr)
        return 2, {"command": "sample", "verdicts": _verdict_doc(verdicts)}
    if not args.out:
        raise ValueError("sample needs --out for the CSV file")
    sampling = cfg.sampling
    n_paths = sampling["n_paths"] if args.n_paths is None else args.n_paths
    small_jumps = args.small_jumps or sampling["small_jumps"]
    sample = sample_field(cfg.field_spec, sampling["grid"], n_paths, sampling["partition"],
                          sampling["n_terms"], SeedSpec(_seed_of(args, cfg)), small_jumps)
    binary = f"{args.out}.bin"
    sample.to_csv(args.out)
    sample.to_binary(binary)
    if sample.provenance["coverage_warning"]:
        logger.warning("part of the integrand mass lies outside the sampling box; see the sidecar")
    report = {"command": "sample", "csv": args.out, "binary": binary, "sidecar": f"{binary}.json",
              "provenance": sample.provenance, "verdicts": _verdict_doc(verdicts)}
    print(json.dumps({k: report[k] for k in ("csv", "binary", "sidecar")}, indent=2))
    return 0, report


def cmd_cf(args, cfg):
    if not cfg.cf_points:
        raise ConfigError("cf.points", "no evaluation points configured")
    rows = []
    for s, u in cfg.cf_points:
        psi = log_cf(law_at(cfg.family, cfg.sigma, s), u)
        rows.append({"s": s.tolist(), "u": u.tolist(), "log_cf": psi, "cf": math.exp(psi)})
    report = {"command": "cf", "points": rows}
    _emit(report, args.out)
    return 0, report


def cmd_tangent(args, cfg):
    k_max = args.kmax
    if k_max is None:
        k_max = int((cfg.tangent or {}).get("k_max", DEFAULT_K_MAX))
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    tspec = build_tangent(cfg, args.u)
    if tspec.kind == "additive":
        result = additive_tangent_check(tspec.weight, tspec.u, k_max, cfg.family, cfg.sigma,
                                        tspec.times, tspec.thetas)
    else:
        result = convergence_sweep(tspec, k_max)
    if args.self_similarity:
        if tspec.kind == "measure":
            raise ValueError("the self-similarity identity applies to field and additive tangents")
        oss = oss_identity_check(tspec)
        result.notes["self_similarity"] = {"max_gap": oss["max_gap"], "passed": oss["passed"]}
    report = result.as_dict()
    report["command"] = "tangent"
    report["kind"] = tspec.kind
    report["u"] = tspec.u.tolist()
    converged = result.verdict == "converges"
    report["verdicts"] = {"convergence": Verdict("convergence", converged, -result.deviations[-1],
                                                 {"verdict": result.verdict}).as_dict()}
    _emit(report, args.out)
    return (0 if converged else 2), report


def cmd_selftest(args, cfg):
    table = run_selftest(args.check, quick=args.quick)
    print(table.to_string(index=False))
    passed = bool(table["passed"].all())
    report = {"command": "selftest",
              "verdicts": {row["check"]: {"name": row["check"], "passed": bool(row["passed"]), "margin": 0.0,
                                          "details": {"detail": row["detail"]}}
                           for row in table.to_dict(orient="records")}}
    if args.out:
        table.to_csv(args.out, index=False)
    return (0 if passed else 2), report


def command_runners() -> Dict[str, CommandRunner]:
    return {
        "check": cmd_check,
        "norm": cmd_norm,
        "sample": cmd_sample,
        "cf": cmd_cf,
        "tangent": cmd_tangent,
        "selftest": cmd_selftest,
    }


# ---------- ENTRY POINT ----------

def _record(args, cfg, code, report):
    if args.ledger:
        seed = None if cfg is None else _seed_of(args, cfg)
        Database(args.ledger).record_run(args.command, args.config, seed, code, report)
    if args.pdf and report and args.command in ("check", "tangent"):
        path = generate_report_pdf(report, f"opstable {args.command}: {args.config}", args.pdf)
        logger.info(f"PDF report written to {path}")


def main(argv=None) -> int:
    args = parse_args(argv)
    setup_logging(getattr(logging, args.log_level))
    cfg = None
    report = {}
    try:
        if args.command != "selftest":
            if not args.config:
                raise ConfigError("--config", f"the {args.command} command needs a config file")
            with _tolerance(args.tol):
                cfg = load_config(args.config)
        with _tolerance(_effective_tol(args, cfg)):
            code, report = command_runners()[args.command](args, cfg)
    except NotIntegrableError as e:
        logger.info(str(e))
        print("not integrable")
        code, report = 2, {"command": args.command, "error": "not integrable"}
    except (OpStableError, ValueError, OSError) as e:
        logger.debug(f"{args.command} failed", exc_info=True)
        print(f"[error] {e}", file=sys.stderr)
        return 1
    try:
        _record(args, cfg, code, report)
    except OSError as e:
        print(f"[error] {e}", file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())
