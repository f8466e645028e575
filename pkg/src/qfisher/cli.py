"""Command-line front end: closed forms, inequality checks, diffusion runs,
constrained minimization, duality checks and parameter sweeps.

Exit codes: 0 success, 1 a checked claim failed, 2 invalid configuration.
"""

import argparse
import csv
import datetime
import itertools
import json
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import diffusion as dif
from . import grid_measures as gm
from . import inequalities as ineq
from . import variational as var
from .errors import (ConfigError, DomainError, DomainSizeError, PreconditionError, QFisherError,
                     RefusedError, ValidityError)
from .qgaussian import QGaussianParams, closed_form_measures, natural_grid, on_grid

COMMANDS = ("eval", "check", "diffuse", "minimize", "legendre", "sweep")
SUITES = ("stam", "cramer-rao", "additivity", "convexity", "all")
SATURATION_GAMMAS = (0.25, 1.0, 4.0)
SATURATION_RTOL = 1e-3
DIFFUSE_MAX_RESIDUAL = 0.03
MINIMIZE_MAX_L2 = 1e-2
RECIPROCITY_TOL = 1e-2
DUALITY_SLACK = 1e-6
SWEEP_CR_RTOL = 1e-3
CONFIG_ERRORS = (ConfigError, ValidityError, DomainError, RefusedError, PreconditionError, DomainSizeError)


@dataclass
class RunConfig:
    command: str
    n: int = 1
    alpha: float = None
    q: float = 2.0
    gamma: float = 1.0
    beta: float = None
    nodes: int = None
    seed: int = 0
    suite: str = "all"
    trials: int = None
    m: float = 2.0
    t0: float = 1.0
    t1: float = 2.0
    cfl: float = 0.9
    constraint: str = var.MOMENT
    target: float = None
    variant: str = None
    q_list: list = None
    alpha_list: list = None
    n_list: list = None
    out: str = None

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.suite not in SUITES:
            raise ConfigError(f"unknown suite {self.suite!r}; choose from {', '.join(SUITES)}")
        if self.constraint not in (var.MOMENT, var.ENTROPY_POWER):
            raise ConfigError(f"unknown constraint {self.constraint!r}")
        if self.variant not in (None, "phi", "I"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.trials is not None and self.trials < 1:
            raise ConfigError("trials must be positive")
        if self.nodes is not None and self.nodes < 16:
            raise ConfigError("nodes must be at least 16")
        if self.beta is not None and not self.beta > 1:
            raise ConfigError("beta must be > 1")
        if self.alpha is not None and not self.alpha > 1:
            raise ConfigError("alpha must be > 1")
        if self.command in ("eval", "check", "minimize", "legendre"):
            self.params()
        if self.command == "diffuse":
            self.diffusion_config()
        if self.command == "sweep" and not self.combinations():
            raise ConfigError("the sweep is empty")

    @property
    def alpha_effective(self):
        """alpha, or the conjugate exponent of beta when only beta is given."""
        if self.beta is None:
            return 2.0 if self.alpha is None else self.alpha
        conj = self.beta / (self.beta - 1)
        if self.alpha is not None and abs(self.alpha - conj) > 1e-12 * conj:
            raise ConfigError(f"alpha={self.alpha} and beta={self.beta} are not conjugate exponents")
        return conj

    @property
    def beta_effective(self):
        a = self.alpha_effective
        return a / (a - 1)

    def params(self):
        return QGaussianParams(self.n, self.alpha_effective, self.q, self.gamma)

    def diffusion_config(self):
        return dif.barenblatt_config(self.beta_effective, self.m, self.n, self.t0, self.t1,
                                     self.nodes or 4096, cfl=self.cfl)

    def combinations(self):
        ns = self.n_list or [self.n]
        alphas = self.alpha_list or [self.alpha_effective]
        qs = self.q_list or [self.q]
        return sorted(itertools.product(ns, alphas, qs))

    def to_dict(self):
        d = asdict(self)
        d.pop("out")
        return d


# ------------------------------------------------------------------ output

def _meta(cfg):
    return {"config": cfg.to_dict(), "version": __version__}


def _finite(x):
    """Non-finite floats become null so every report is strict JSON."""
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    if isinstance(x, (float, np.floating)) and not np.isfinite(x):
        return None
    return x


def _write_json(path, payload):
    text = json.dumps(_finite(payload), sort_keys=True, indent=2, default=_jsonable, allow_nan=False) + "\n"
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x).__name__}")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _write_csv(path, header, rows, meta):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in header])


def _out_dir(cfg):
    if cfg.out:
        path = Path(cfg.out)
    else:
        path = Path("runs") / datetime.datetime.now().strftime("%Y%m%d-%H%M%S")
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------- commands

def cmd_eval(cfg, out):
    params = cfg.params()
    cf = closed_form_measures(params).to_dict()
    payload = dict(cf)
    if cfg.nodes:
        grid = natural_grid(params, cfg.nodes)
        ms = gm.measure_set(on_grid(params, grid), params.q, params.beta, params.alpha)
        payload["grid"] = ms.to_dict()
        payload["grid_spec"] = grid.to_dict()
        pairs = {"Mq": "Mq", "m_alpha": "m_p", "phi": "phi", "i_fisher": "i_fisher", "Nq": "Nq"}
        payload["relative_error"] = {k: abs(getattr(ms, v) / cf[k] - 1) for k, v in pairs.items()}
    print(json.dumps(_finite(payload), sort_keys=True, default=_jsonable))
    _write_json(out / "eval.json", {**_meta(cfg), "result": payload})
    return 0


def _stam_cr_reports(params, cfg):
    nodes = cfg.nodes or 4096
    trials = cfg.trials or 100
    grid = natural_grid(params, nodes)
    reports, failures = [], []
    family = ineq.perturbed_family(params, grid, trials, cfg.seed)
    checks = []
    if cfg.suite in ("stam", "all"):
        checks += [(ineq.stam_deficit, "phi"), (ineq.stam_deficit, "I")]
    if cfg.suite in ("cramer-rao", "all"):
        checks += [(ineq.cramer_rao_deficit, "I"), (ineq.cramer_rao_deficit, "phi")]
    for i, f in enumerate(family):
        for fn, variant in checks:
            rep = fn(f, params, variant).to_dict()
            rep["trial"] = i
            reports.append(rep)
            if rep["deficit"] < -rep["tolerances"]["deficit"]:
                failures.append(rep)
    for gamma in SATURATION_GAMMAS:
        g = params.with_gamma(gamma)
        G = on_grid(g, natural_grid(g, nodes))
        for fn, variant in checks:
            rep = fn(G, g, variant).to_dict()
            rep["trial"] = f"saturation gamma={gamma:g}"
            reports.append(rep)
            if abs(rep["deficit"]) > SATURATION_RTOL * abs(rep["rhs"]):
                failures.append(rep)
    return reports, failures


def _additivity_reports(params, beta, cfg):
    reports, failures = [], []
    pairs = ineq.additivity_pairs(params.q, beta, cfg.trials or 20, cfg.seed, cfg.nodes or 128)
    for i, (fx, fy) in enumerate(pairs):
        rep = ineq.additivity_bound(fx, fy, params.q, beta).to_dict()
        rep["trial"] = i
        reports.append(rep)
        if rep["deficit"] < -rep["tolerances"]["deficit"]:
            failures.append(rep)
    return reports, failures


def _convexity_reports(params, beta, cfg):
    reports, failures = [], []
    lo, hi = ineq.convexity_window(beta)
    if not lo - 1e-12 <= params.q <= hi + 1e-12:
        if cfg.suite == "convexity":
            raise RefusedError(f"q={params.q} outside certified window 1 <= q <= 2-1/beta = {hi:.6g}")
        return [{"name": "convexity", "skipped": f"q={params.q} outside certified window [1, {hi:.6g}]"}], []
    probes = ineq.convexity_probes(params.q, beta, cfg.trials or 200, cfg.seed, cfg.nodes or 1024)
    for i, (f, g, mix) in enumerate(probes):
        rep = ineq.convexity_probe(f, g, mix, params.q, beta).to_dict()
        rep["trial"] = i
        reports.append(rep)
        if rep["deficit"] < -rep["tolerances"]["deficit"]:
            failures.append(rep)
    return reports, failures


def cmd_check(cfg, out):
    params = cfg.params()
    beta = params.beta
    reports, failures = [], []
    if cfg.suite in ("convexity", "all"):
        r, f = _convexity_reports(params, beta, cfg)
        reports += r
        failures += f
    if cfg.suite in ("stam", "cramer-rao", "all"):
        r, f = _stam_cr_reports(params, cfg)
        reports += r
        failures += f
    if cfg.suite in ("additivity", "all"):
        if params.n == 1:
            r, f = _additivity_reports(params, beta, cfg)
        else:
            r, f = [{"name": "additivity", "skipped": "additivity pairs are one-dimensional"}], []
        reports += r
        failures += f
    summary = {"suite": cfg.suite, "reports": len(reports), "violations": len(failures)}
    _write_json(out / "check.json", {**_meta(cfg), "reports": reports, "summary": summary})
    print(json.dumps(summary, sort_keys=True))
    for rep in failures:
        print(f"violation: {rep['name']} trial {rep['trial']} deficit {rep['deficit']:.6g}", file=sys.stderr)
    return 1 if failures else 0


def cmd_diffuse(cfg, out):
    config = cfg.diffusion_config()
    initial = dif.barenblatt(config, config.t0)
    config = replace(config, record_every=dif.suggest_record_every(config, initial))
    if config.m < 1 and config.beta == 2:
        traj = dif.fast_diffusion_case(config, initial)
    else:
        traj = dif.solve(config, initial)
    report = dif.debruijn_residuals(traj, config)
    const = dif.barenblatt_constants(config.beta, config.m, config.n)
    worst = max(report.max_renyi, report.max_tsallis, report.max_power)
    summary = {
        "max_residual": worst,
        "max_renyi": report.max_renyi,
        "max_tsallis": report.max_tsallis,
        "max_power": report.max_power,
        "bound_holds": report.bound_holds,
        "factorization_gap": report.factorization_gap,
        "tsallis_ratio_gap": report.tsallis_ratio_gap,
        "l1_to_profile": dif.self_similarity_error(traj.densities[-1], config, traj.times[-1]),
        "barenblatt": asdict(const),
        "delta": config.delta,
        "q": config.q,
        "steps": traj.steps,
        "snapshots": len(traj.times),
        "grid": config.grid.to_dict(),
    }
    meta = _meta(cfg)
    dif.write_trajectory_csv(traj, out / "trajectory.csv", report, meta=meta)
    _write_json(out / "report.json", {**meta, "summary": summary, "rows": report.rows})
    print(f"max de Bruijn residual: {worst:.6g}")
    return 0 if worst <= DIFFUSE_MAX_RESIDUAL else 1


def cmd_minimize(cfg, out):
    params = cfg.params()
    variant = cfg.variant or "phi"
    cf = closed_form_measures(params)
    if cfg.constraint == var.MOMENT:
        spec = var.ConstraintSpec(var.MOMENT, params.alpha, cfg.target or cf.m_alpha)
    else:
        spec = var.ConstraintSpec(var.ENTROPY_POWER, params.q, cfg.target or cf.Nq)
    grid = var.default_grid(spec, params, cfg.nodes or 4096)
    res = var.minimize_fisher(spec, params, grid, variant)
    match = var.matched_params(spec, params)
    G = on_grid(match, grid)
    ref = closed_form_measures(match)
    exact = ref.phi if variant == "phi" else ref.i_fisher
    l2 = var.relative_l2(res.density, G)
    summary = {
        **res.to_dict(),
        "relative_l2_to_qgaussian": l2,
        "closed_form_objective": exact,
        "objective_relative_error": res.objective / exact - 1,
        "qgaussian_el_residual": var.euler_lagrange_residual(G, match),
        "matched_gamma": match.gamma,
    }
    meta = _meta(cfg)
    gm.write_density_csv(res.density, out / "minimizer.csv", meta)
    _write_json(out / "result.json", {**meta, "result": summary})
    print(f"relative L2 distance to matched q-Gaussian: {l2:.6g}")
    ok = res.converged and l2 <= MINIMIZE_MAX_L2 and res.constraint_residual <= 1e-6
    return 0 if ok else 1


def cmd_legendre(cfg, out):
    params = cfg.params().with_gamma(1.0)
    variant = cfg.variant or "I"
    cf = closed_form_measures(params)
    spec = var.ConstraintSpec(var.MOMENT, params.alpha, cf.m_alpha)
    grid = var.default_grid(spec, params, cfg.nodes or 4096)
    lam = var.consistent_lambdas(params, variant)
    rep = var.reciprocity_check(lam, params, grid, variant)
    primal = var.primal_value([1.0, cf.m_alpha], params, grid, variant)
    rng = np.random.default_rng(cfg.seed)
    duals = []
    for _ in range(cfg.trials or 10):
        trial = np.array([rng.normal(), lam[1] * rng.uniform(0.3, 3.0)])
        state = var.dual_function(trial, params, grid, [cf.m_alpha], variant)
        duals.append({"lambdas": trial.tolist(), "dual_value": state.dual_value,
                      "holds": bool(state.dual_value <= primal + DUALITY_SLACK)})
    summary = {
        "error_conjugate": rep.error_conjugate,
        "error_primal": rep.error_primal,
        "reciprocity": rep.to_dict(),
        "primal_value": primal,
        "weak_duality": duals,
        "variant": variant,
    }
    _write_json(out / "legendre.json", {**_meta(cfg), "result": summary})
    print(f"reciprocity errors: conjugate {rep.error_conjugate:.3g}, primal {rep.error_primal:.3g}; "
          f"weak duality {sum(d['holds'] for d in duals)}/{len(duals)}")
    ok = (rep.error_conjugate <= RECIPROCITY_TOL and rep.error_primal <= RECIPROCITY_TOL
          and all(d["holds"] for d in duals) and rep.complete)
    return 0 if ok else 1


SWEEP_COLUMNS = ["n", "alpha", "q", "gamma", "valid", "Mq", "m_alpha", "phi", "i_fisher",
                 "grid_Mq", "grid_m_alpha", "grid_phi", "grid_i_fisher",
                 "cramer_rao_closed", "cramer_rao_lhs", "cramer_rao_ok"]


def _sweep_row(n, alpha, q, cfg):
    row = {"n": n, "alpha": alpha, "q": q, "gamma": cfg.gamma, "valid": True}
    try:
        params = QGaussianParams(n, alpha, q, cfg.gamma)
    except ValidityError:
        row["valid"] = False
        return row
    cf = closed_form_measures(params)
    grid = natural_grid(params, cfg.nodes or 4096)
    ms = gm.measure_set(on_grid(params, grid), q, params.beta, alpha)
    beta = params.beta
    row.update(Mq=cf.Mq, m_alpha=cf.m_alpha, phi=cf.phi, i_fisher=cf.i_fisher,
               grid_Mq=ms.Mq, grid_m_alpha=ms.m_p, grid_phi=ms.phi, grid_i_fisher=ms.i_fisher,
               cramer_rao_closed=cf.i_fisher ** (1 / beta) * cf.m_alpha ** (1 / alpha),
               cramer_rao_lhs=ms.i_fisher ** (1 / beta) * ms.m_p ** (1 / alpha))
    row["cramer_rao_ok"] = abs(row["cramer_rao_lhs"] / n - 1) <= SWEEP_CR_RTOL
    return row


def cmd_sweep(cfg, out):
    rows = [_sweep_row(n, a, q, cfg) for n, a, q in cfg.combinations()]
    meta = _meta(cfg)
    _write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows, meta)
    bad = [r for r in rows if r["valid"] and not r["cramer_rao_ok"]]
    summary = {"rows": len(rows), "valid": sum(r["valid"] for r in rows), "cramer_rao_failures": len(bad)}
    _write_json(out / "sweep.json", {**meta, "summary": summary})
    print(json.dumps(summary, sort_keys=True))
    for r in bad:
        print(f"cramer-rao off by {r['cramer_rao_lhs'] / r['n'] - 1:.3g} at n={r['n']} alpha={r['alpha']} q={r['q']}",
              file=sys.stderr)
    return 1 if bad else 0


HANDLERS = {"eval": cmd_eval, "check": cmd_check, "diffuse": cmd_diffuse,
            "minimize": cmd_minimize, "legendre": cmd_legendre, "sweep": cmd_sweep}


# ------------------------------------------------------------------ parsing

def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _int_list(text):
    return [int(v) for v in _float_list(text)]


def build_parser():
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, default=S, help="dimension")
    common.add_argument("--alpha", type=float, default=S, help="moment order alpha > 1")
    common.add_argument("--beta", type=float, default=S, help="Fisher exponent beta = alpha/(alpha-1)")
    common.add_argument("--q", type=float, default=S, help="entropic index")
    common.add_argument("--gamma", type=float, default=S, help="q-Gaussian scale")
    common.add_argument("--nodes", type=int, default=S, help="grid nodes")
    common.add_argument("--seed", type=int, default=S, help="random seed (default 0)")
    common.add_argument("--out", default=S, help="output directory (default runs/<timestamp>)")
    common.add_argument("--config", default=S, help="JSON file with option values; flags override it")

    parser = argparse.ArgumentParser(prog="qfisher", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("eval", parents=[common], help="closed-form measures, optionally against a grid")
    p = sub.add_parser("check", parents=[common], help="inequality deficits on seeded perturbations")
    p.add_argument("suite", nargs="?", default=S, choices=SUITES)
    p.add_argument("--trials", type=int, default=S)
    p = sub.add_parser("diffuse", parents=[common], help="Barenblatt run with de Bruijn residuals")
    p.add_argument("--m", type=float, default=S)
    p.add_argument("--t0", type=float, default=S)
    p.add_argument("--t1", type=float, default=S)
    p.add_argument("--cfl", type=float, default=S)
    p = sub.add_parser("minimize", parents=[common], help="constrained Fisher minimization")
    p.add_argument("--constraint", choices=(var.MOMENT, var.ENTROPY_POWER), default=S)
    p.add_argument("--target", type=float, default=S)
    p.add_argument("--variant", choices=("phi", "I"), default=S)
    p = sub.add_parser("legendre", parents=[common], help="reciprocity and weak duality")
    p.add_argument("--variant", choices=("phi", "I"), default=S)
    p.add_argument("--trials", type=int, default=S)
    p = sub.add_parser("sweep", parents=[common], help="closed form vs grid over (n, alpha, q)")
    p.add_argument("--q-list", type=_float_list, default=S)
    p.add_argument("--alpha-list", type=_float_list, default=S)
    p.add_argument("--n-list", type=_int_list, default=S)
    return parser


def resolve_config(ns):
    """RunConfig from defaults, then the --config file, then explicit flags."""
    flags = vars(ns).copy()
    command = flags.pop("command")
    values = {}
    path = flags.pop("config", None)
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        values.update({k.replace("-", "_"): v for k, v in loaded.items() if k != "command"})
    values.update(flags)
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = RunConfig(command=command, **values)
    cfg.validate()
    return cfg


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = resolve_config(ns)
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TypeError as exc:
        print(f"error: bad config value: {exc}", file=sys.stderr)
        return 2
    out = _out_dir(cfg)
    try:
        return HANDLERS[cfg.command](cfg, out)
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except QFisherError as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
