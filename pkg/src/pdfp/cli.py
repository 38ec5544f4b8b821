"""Experiment runner: build a problem from a config file, solve, write artifacts.

Config files are plain text, one ``section.key = value`` per line, with ``#``
comments. The full key table is documented in the README. Subcommands:

* ``solve <config>``: run one solver, write ``trace.csv``, ``recon.pgm``,
  ``summary.txt`` into the output directory.
* ``compare <config_a> <config_b> --out <path>``: run two configs on the
  same problem and write an iteration-aligned quality CSV.
* ``certify <config>``: emit the geometric-rate certificate as CSV when the
  problem supports one.

Exit codes: 0 on success/convergence, 2 when the iteration budget ran out,
1 on configuration errors (including unknown keys and mismatched compares).
"""

import argparse
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import rate_certificate, rel_err, snr, write_trace_csv
from .schedules import ScheduleSpec
from .solvers import StoppingRule, chambolle_pock, ifp2o, pdfp2o, pdfp2o_ds, \
    pdfp2o_dsn, pdfp2o_kappa, pfbs_fp2o, siu
from .tomo import DEFAULT_CT_REG_WEIGHT, TomoGeometry, make_deblur_problem, \
    make_denoise_problem, make_lasso_problem, make_tomo_problem, make_tv_problem, \
    seed_stream, write_pgm

POWER_CHANNEL = 1


class ConfigError(ValueError):
    """A config file could not be parsed or validated."""


PROBLEM_KINDS = ("ct", "denoise", "deblur", "lasso")
SOLVER_NAMES = (
    "pdfp2o", "pdfp2o_kappa", "pdfp2o_ds", "pdfp2o_dsn", "pfbs_fp2o", "ifp2o", "cp", "siu"
)
SCHEDULE_KINDS = ("constant", "bb_dynamic", "convergent_perturbation")

# key -> (parser, default); "auto" stands for a problem-derived value.
_AUTO = "auto"


def _num(text):
    return float(text)


def _auto_or_num(text):
    return _AUTO if text == _AUTO else float(text)


CONFIG_KEYS = {
    "problem.kind": (str, "denoise"),
    "problem.size": (int, 32),
    "problem.noise": (_num, 0.01),
    "problem.reg_weight": (_auto_or_num, _AUTO),
    "problem.tv": (str, "anisotropic"),
    "problem.angle_step": (_num, 10.0),
    "problem.angle_count": (int, 18),
    "problem.rays": (_auto_or_num, _AUTO),
    "problem.blur_radius": (int, 2),
    "problem.blur_sigma": (_num, 1.5),
    "solver.name": (str, "pdfp2o"),
    "solver.gamma": (_auto_or_num, _AUTO),
    "solver.lambda": (_auto_or_num, _AUTO),
    "solver.kappa": (_auto_or_num, _AUTO),
    "solver.theta": (_num, 1.0),
    "solver.inner_tol": (_num, 1e-10),
    "solver.inner_max_iter": (int, 200),
    "solver.sigma_strong": (_auto_or_num, _AUTO),
    "schedule.kind": (str, "constant"),
    "schedule.alpha": (_num, 0.0),
    "schedule.decay": (_num, 0.0),
    "schedule.gamma_lo": (_auto_or_num, _AUTO),
    "schedule.gamma_hi": (_auto_or_num, _AUTO),
    "schedule.lambda_lo": (_auto_or_num, _AUTO),
    "schedule.lambda_hi": (_auto_or_num, _AUTO),
    "schedule.alpha_lo": (_num, 0.1),
    "schedule.alpha_hi": (_num, 0.9),
    "run.max_iter": (int, 2000),
    "run.tol": (_num, 1e-8),
    "run.seed": (int, 0),
    "run.output_dir": (str, "out"),
}

# Keys that must agree for two configs to target the same experiment.
PROBLEM_IDENTITY_KEYS = (
    "problem.kind", "problem.size", "problem.noise", "problem.reg_weight",
    "problem.tv", "problem.angle_step", "problem.angle_count", "problem.rays",
    "problem.blur_radius", "problem.blur_sigma", "run.seed",
)


def parse_config_text(text):
    """Parse ``key = value`` lines with ``#`` comments into a raw dict."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


@dataclass
class ExperimentConfig:
    """Typed, validated view of one experiment's configuration."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def load(cls, path, overrides=None):
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        raw = parse_config_text(text)
        if overrides:
            raw.update({k: str(v) for k, v in overrides.items() if v is not None})
        values = {}
        for key, value in raw.items():
            if key not in CONFIG_KEYS:
                raise ConfigError(f"unknown config key: {key}")
            parser, _ = CONFIG_KEYS[key]
            try:
                values[key] = parser(value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {value!r}") from exc
        for key, (parser, default) in CONFIG_KEYS.items():
            values.setdefault(key, default)
        cfg = cls(values)
        cfg._validate()
        return cfg

    def _validate(self):
        v = self.values
        if v["problem.kind"] not in PROBLEM_KINDS:
            raise ConfigError(f"unknown problem kind: {v['problem.kind']}")
        if v["solver.name"] not in SOLVER_NAMES:
            raise ConfigError(f"unknown solver: {v['solver.name']}")
        if v["schedule.kind"] not in SCHEDULE_KINDS:
            raise ConfigError(f"unknown schedule kind: {v['schedule.kind']}")
        if v["problem.tv"] not in ("anisotropic", "isotropic"):
            raise ConfigError("problem.tv must be anisotropic or isotropic")
        if v["problem.size"] < 16:
            raise ConfigError("problem.size must be at least 16")
        if v["problem.noise"] < 0:
            raise ConfigError("problem.noise must be nonnegative")
        if v["run.max_iter"] < 1:
            raise ConfigError("run.max_iter must be positive")
        if v["run.tol"] < 0:
            raise ConfigError("run.tol must be nonnegative")

    @property
    def tv_variant(self):
        return "anisotropic" if self["problem.tv"] == "anisotropic" else "isotropic-pair"

    def reg_weight(self):
        w = self["problem.reg_weight"]
        if w != _AUTO:
            return w
        return {
            "ct": DEFAULT_CT_REG_WEIGHT, "denoise": 0.1, "deblur": 0.02, "lasso": 0.05
        }[self["problem.kind"]]

    def build_problem(self):
        """Build (Problem, x_true_image, meta) from the problem section."""
        kind = self["problem.kind"]
        n = self["problem.size"]
        noise = self["problem.noise"]
        seed = self["run.seed"]
        w = self.reg_weight()
        power_seed = seed_stream(seed, POWER_CHANNEL)
        if kind == "ct":
            rays = self["problem.rays"]
            rays = int(round(math.sqrt(2.0) * n)) if rays == _AUTO else int(rays)
            step = self["problem.angle_step"]
            angles = tuple(step * k for k in range(self["problem.angle_count"]))
            geom = TomoGeometry(image_side=n, angles_deg=angles, rays_per_angle=rays)
            tp = make_tomo_problem(geom, noise, seed)
            problem = make_tv_problem(tp, w, self.tv_variant, power_seed=power_seed)
            return problem, tp.x_true, {"geometry": geom}
        if kind == "denoise":
            problem, x_true = make_denoise_problem(n, noise, seed, w, self.tv_variant)
            return problem, x_true, {}
        if kind == "deblur":
            problem, x_true = make_deblur_problem(
                n, self["problem.blur_radius"], self["problem.blur_sigma"],
                noise, seed, w, self.tv_variant, power_seed=power_seed,
            )
            return problem, x_true, {}
        problem, x_true = make_lasso_problem(n, noise, seed, w)
        return problem, x_true, {}

    def resolve_steps(self, problem):
        gamma = self["solver.gamma"]
        lam = self["solver.lambda"]
        gamma = 1.99 * problem.beta if gamma == _AUTO else gamma
        lam = problem.lambda_hi if lam == _AUTO else lam
        return gamma, lam

    def schedule_spec(self, gamma, lam, alpha):
        clamp_keys = ("schedule.gamma_lo", "schedule.gamma_hi",
                      "schedule.lambda_lo", "schedule.lambda_hi")
        clamp = None
        if any(self[k] != _AUTO for k in clamp_keys):
            if any(self[k] == _AUTO for k in clamp_keys):
                raise ConfigError(
                    "set all of schedule.gamma_lo/gamma_hi/lambda_lo/lambda_hi together"
                )
            clamp = tuple(self[k] for k in clamp_keys) + (
                self["schedule.alpha_lo"], self["schedule.alpha_hi"],
            )
        return ScheduleSpec(
            kind=self["schedule.kind"], gamma0=gamma, lambda0=lam,
            alpha0=alpha, decay=self["schedule.decay"], clamp=clamp,
        )


def _run_solver(cfg, problem, x_true):
    """Dispatch the configured solver; returns (x_final, trace)."""
    name = cfg["solver.name"]
    gamma, lam = cfg.resolve_steps(problem)
    stop = StoppingRule(tol=cfg["run.tol"], max_iter=cfg["run.max_iter"])
    xt = x_true.ravel()
    kappa = cfg["solver.kappa"]
    if name == "pdfp2o":
        u, tr = pdfp2o(problem, gamma, lam, stop=stop, x_true=xt)
        return u.x, tr
    if name == "pdfp2o_kappa":
        k = 0.5 if kappa == _AUTO else kappa
        u, tr = pdfp2o_kappa(problem, gamma, lam, k, stop=stop, x_true=xt)
        return u.x, tr
    if name == "pdfp2o_ds":
        sched = cfg.schedule_spec(gamma, lam, cfg["schedule.alpha"]).build(problem)
        u, tr = pdfp2o_ds(problem, sched, stop=stop, x_true=xt)
        return u.x, tr
    if name == "pdfp2o_dsn":
        alpha = cfg["schedule.alpha"] or 0.5
        sched = cfg.schedule_spec(gamma, lam, alpha).build(problem)
        u, tr = pdfp2o_dsn(problem, sched, stop=stop, x_true=xt)
        return u.x, tr
    if name == "pfbs_fp2o":
        k = 0.0 if kappa == _AUTO else kappa
        inner = StoppingRule(tol=cfg["solver.inner_tol"], max_iter=cfg["solver.inner_max_iter"])
        u, tr = pfbs_fp2o(problem, gamma, lam, k, inner, stop=stop, x_true=xt)
        return u.x, tr
    if name == "ifp2o":
        n = problem.D.in_dim
        if n > 1024:
            raise ConfigError("ifp2o needs a dense system; use problem.size <= 32")
        if problem.f2.A.tag != "identity":
            raise ConfigError("ifp2o supports identity data operators only (denoise/lasso)")
        k = 0.5 if kappa == _AUTO else kappa
        x, tr = ifp2o(np.eye(n), problem.f2.b, problem.f1, problem.D, lam, k, stop=stop)
        return x, tr
    if name == "cp":
        lam_cp = min(lam, 0.99 * problem.lambda_hi)
        u, tr = chambolle_pock(
            problem, lam_cp / gamma, gamma, cfg["solver.theta"], stop=stop, x_true=xt
        )
        return u.x, tr
    if name == "siu":
        state, tr = siu(problem, gamma, lam / gamma, stop=stop, x_true=xt)
        return state.x, tr
    raise ConfigError(f"unknown solver: {name}")


def _output_dir(cfg):
    env = os.environ.get("PDFP_OUTPUT_DIR")
    return Path(env) if env else Path(cfg["run.output_dir"])


def _write_summary(path, cfg, trace, final_snr, final_rel):
    lines = [
        f"solver={cfg['solver.name']}",
        f"problem={cfg['problem.kind']}",
        f"iterations={trace.n_iter}",
        f"converged={'true' if trace.converged else 'false'}",
        f"objective={float(trace.objectives[-1])!r}",
        f"snr_db={float(final_snr)!r}",
        f"relerr={float(final_rel)!r}",
        f"wall_ms={float(trace.wall_ms[-1])!r}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def run_experiment(config_path, overrides=None):
    """Run one configured experiment and write its artifacts.

    Returns the process exit code: 0 converged, 2 budget exhausted,
    1 configuration error (in which case nothing is written).
    """
    try:
        cfg = ExperimentConfig.load(config_path, overrides)
        problem, x_true, _ = cfg.build_problem()
        x_final, trace = _run_solver(cfg, problem, x_true)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = _output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(trace, out / "trace.csv")
    write_pgm(out / "recon.pgm", x_final.reshape(x_true.shape))
    final_snr = snr(x_final, x_true.ravel())
    final_rel = rel_err(x_final, x_true.ravel())
    _write_summary(out / "summary.txt", cfg, trace, final_snr, final_rel)
    return 0 if trace.converged else 2


SNR_THRESHOLDS = (15.0, 20.0, 23.0)


def _first_crossing(snrs, threshold):
    hits = np.nonzero(snrs >= threshold)[0]
    return int(hits[0]) + 1 if hits.size else None


def compare(config_path_a, config_path_b, out_path, overrides=None):
    """Run two configs over the same problem and write paired quality columns.

    The merged CSV holds iteration-aligned SNR/RelErr for both runs; rows
    past a run's end hold NaN. Prints the first iteration at which each run
    crosses the 15/20/23 dB marks. Both configs must describe the same
    problem and seed.
    """
    try:
        cfg_a = ExperimentConfig.load(config_path_a, overrides)
        cfg_b = ExperimentConfig.load(config_path_b, overrides)
        for key in PROBLEM_IDENTITY_KEYS:
            if cfg_a[key] != cfg_b[key]:
                raise ConfigError(
                    f"configs disagree on {key}: {cfg_a[key]!r} vs {cfg_b[key]!r}"
                )
        problem_a, x_true_a, _ = cfg_a.build_problem()
        xa, tr_a = _run_solver(cfg_a, problem_a, x_true_a)
        problem_b, x_true_b, _ = cfg_b.build_problem()
        xb, tr_b = _run_solver(cfg_b, problem_b, x_true_b)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    rows = max(len(tr_a.iters), len(tr_b.iters))

    def col(arr):
        out = np.full(rows, math.nan)
        out[: len(arr)] = arr
        return out

    table = np.column_stack(
        [np.arange(1, rows + 1), col(tr_a.snrs), col(tr_a.relerrs), col(tr_b.snrs), col(tr_b.relerrs)]
    )
    lines = ["iter,snr_a,relerr_a,snr_b,relerr_b"]
    for row in table:
        lines.append(",".join([str(int(row[0]))] + [repr(float(c)) for c in row[1:]]))
    Path(out_path).write_text("\n".join(lines) + "\n")
    for label, tr in (("a", tr_a), ("b", tr_b)):
        for thr in SNR_THRESHOLDS:
            hit = _first_crossing(tr.snrs, thr)
            where = f"iteration {hit}" if hit is not None else "never"
            print(f"run_{label} crosses {thr:g} dB at {where}")
    return 0


def certify(config_path, overrides=None):
    """Emit the geometric-rate certificate for a configured problem as CSV.

    Needs strong convexity of the data term and full row rank of the
    analysis operator (the ``lasso`` problem kind satisfies both). Returns
    exit code 1 when the certificate does not apply.
    """
    try:
        cfg = ExperimentConfig.load(config_path, overrides)
        problem, x_true, _ = cfg.build_problem()
        gamma, lam = cfg.resolve_steps(problem)
        sig = cfg["solver.sigma_strong"]
        if sig == _AUTO:
            if problem.f2.A.tag != "identity":
                raise ConfigError(
                    "solver.sigma_strong=auto needs an identity data operator; set it explicitly"
                )
            sig = 1.0
        cert = rate_certificate(
            problem, gamma, lam,
            cfg["schedule.alpha_lo"], cfg["schedule.alpha_hi"], sig,
            alpha0=cfg["schedule.alpha"] or None,
        )
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if cert is None:
        print("certificate not applicable: contraction factors reach 1", file=sys.stderr)
        return 1
    out = _output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "certificate.csv"
    path.write_text(
        "mu,nu,eta,theta,d\n"
        + ",".join(repr(float(v)) for v in (cert.mu, cert.nu, cert.eta, cert.theta, cert.d))
        + "\n"
    )
    print(f"mu={cert.mu!r} nu={cert.nu!r} theta={cert.theta!r} d={cert.d!r}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="pdfp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "compare", "certify"):
        sp = sub.add_parser(name)
        sp.add_argument("config")
        if name == "compare":
            sp.add_argument("config_b")
            sp.add_argument("--out", required=True)
        sp.add_argument("--max-iter", type=int, default=None)
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)
    overrides = {
        "run.max_iter": args.max_iter,
        "run.tol": args.tol,
        "run.seed": args.seed,
    }
    if args.command == "solve":
        return run_experiment(args.config, overrides)
    if args.command == "compare":
        return compare(args.config, args.config_b, args.out, overrides)
    return certify(args.config, overrides)


if __name__ == "__main__":
    sys.exit(main())
