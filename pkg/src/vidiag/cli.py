"""Command-line interface.

Subcommands
-----------
``psis``   tail diagnostic for a draws file or for a fresh ADVI fit of a built-in model
``vsbc``   calibration replications for a built-in model
``fit``    ADVI fit, writing ``q.csv`` and the ELBO ``trace.csv``
``demo``   desk-scale reproductions writing reports, CSV tables and a README

Settings come from a JSON run file (``--config``) overridden by flags. A seed
is mandatory. Every command writes ``report.json`` into ``--out``.

Exit status
-----------
0 success (k-hat category Good or Ok), 1 invalid input or settings,
2 command-line usage error, 3 k-hat category Bad, 4 optimiser diverged,
5 calibration run aborted after too many failed fits.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from vidiag.errors import OptimizerDivergedError, VidiagError, VsbcAbortedError
from vidiag.ingest import read_draws_csv
from vidiag.models import MODELS, build_model
from vidiag.models.regression import LogisticRegression
from vidiag.psis import Category, DrawBatch, psis_diagnose, psis_moments
from vidiag.report import (atomic_write, base_report, csv_text, diagnostic_section,
                           write_report, write_vsbc_outputs)
from vidiag.vi import ViConfig, advi_fit, sample_q
from vidiag.vsbc import vsbc_run

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_USAGE = 2
EXIT_BAD = 3
EXIT_DIVERGED = 4
EXIT_VSBC_ABORTED = 5

DEMOS = ("linear-vsbc", "linear-stopping", "logistic-sweep", "schools", "horseshoe")
_VI_KEYS = ("tol_rel_obj", "eta", "n_mc_grad", "n_mc_elbo", "max_iters", "eval_every")


class SettingsError(ValueError):
    pass


@dataclass
class RunConfig:
    """Merged settings for one command invocation."""

    command: str
    out: str
    seed: int
    model: str | None = None
    model_args: dict = field(default_factory=dict)
    input: str | None = None
    s_draws: int = 10_000
    regularize: bool = True
    weights: bool = False
    m_reps: int = 100
    alpha: float = 0.05
    margins: list | None = None
    oracle: bool = False
    workers: int | None = None
    quick: bool = False
    demo: str | None = None
    vi: dict = field(default_factory=dict)

    def vi_config(self) -> ViConfig:
        return ViConfig(**{**self.vi, "seed": self.seed})

    def echo(self) -> dict:
        d = asdict(self)
        d["vi"] = {k: v for k, v in self.vi_config().to_dict().items() if k != "seed"}
        return d


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _model_args(pairs) -> dict:
    out = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise SettingsError(f"--model-arg expects KEY=VALUE, got {pair!r}")
        out[key] = _parse_value(value)
    return out


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the optional run file and command-line flags."""
    settings: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SettingsError(f"cannot read run file {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise SettingsError("run file must hold a JSON object")
        known = {f.name for f in fields(RunConfig)} - {"command"}
        unknown = sorted(set(loaded) - known)
        if unknown:
            raise SettingsError(f"unknown run-file keys: {', '.join(unknown)}")
        settings.update(loaded)
        settings["vi"] = dict(loaded.get("vi", {}))

    flag_map = {"out": "out", "seed": "seed", "model": "model", "input": "input",
                "s_draws": "s_draws", "m_reps": "m_reps", "alpha": "alpha", "workers": "workers"}
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            settings[key] = value
    if getattr(args, "no_khat_reg", False):
        settings["regularize"] = False
    if getattr(args, "weights", False):
        settings["weights"] = True
    if getattr(args, "oracle", False):
        settings["oracle"] = True
    if getattr(args, "quick", False):
        settings["quick"] = True
    if getattr(args, "margins", None):
        settings["margins"] = [m.strip() for m in args.margins.split(",") if m.strip()]
    if getattr(args, "model_arg", None):
        settings["model_args"] = {**settings.get("model_args", {}), **_model_args(args.model_arg)}
    if getattr(args, "figure_id", None):
        settings["demo"] = args.figure_id
    vi = dict(settings.get("vi", {}))
    if getattr(args, "tol_rel_obj", None) is not None:
        vi["tol_rel_obj"] = args.tol_rel_obj
    if getattr(args, "eta", None) is not None:
        vi["eta"] = args.eta
    bad_vi = sorted(set(vi) - set(_VI_KEYS))
    if bad_vi:
        raise SettingsError(f"unknown optimiser settings: {', '.join(bad_vi)}")
    settings["vi"] = vi

    if settings.get("seed") is None:
        raise SettingsError("a seed is required (--seed or 'seed' in the run file)")
    if not isinstance(settings["seed"], int) or settings["seed"] < 0:
        raise SettingsError("seed must be a nonnegative integer")
    if not settings.get("out"):
        raise SettingsError("an output directory is required (--out or 'out' in the run file)")
    cfg = RunConfig(command=args.command, **settings)
    _check_paths(cfg)
    try:
        cfg.vi_config()
    except (TypeError, ValueError) as exc:
        raise SettingsError(f"invalid optimiser settings: {exc}") from exc
    return cfg


def _check_paths(cfg: RunConfig) -> None:
    if cfg.input is not None and not os.path.isfile(cfg.input):
        raise SettingsError(f"input file not found: {cfg.input}")
    if os.path.exists(cfg.out) and not os.path.isdir(cfg.out):
        raise SettingsError(f"output path exists and is not a directory: {cfg.out}")
    parent = os.path.dirname(os.path.abspath(cfg.out))
    if not os.path.isdir(parent):
        raise SettingsError(f"parent of output directory does not exist: {parent}")
    if cfg.model is not None and cfg.model not in MODELS:
        raise SettingsError(f"unknown model {cfg.model!r}; choose from {', '.join(sorted(MODELS))}")


def _build_model(cfg: RunConfig, for_vsbc: bool = False):
    if cfg.model is None:
        raise SettingsError("a model is required (--model)")
    kwargs = dict(cfg.model_args)
    if for_vsbc and cfg.model == "logistic_regression" and "prior_sd" not in kwargs:
        # replications draw beta from a proper prior; fit under the same prior
        kwargs["prior_sd"] = LogisticRegression.SIM_PRIOR_SD
    try:
        return build_model(cfg.model, **kwargs)
    except TypeError as exc:
        raise SettingsError(f"bad model arguments for {cfg.model}: {exc}") from exc


def _fit_section(model, fit) -> dict:
    return {"param_names": list(model.param_names), "mu": fit.q.mu, "omega": fit.q.omega,
            "n_iters": fit.n_iters, "n_evals": fit.n_evals, "converged": fit.converged,
            "final_elbo": float(fit.trace[-1, 1]) if fit.n_evals else None}


def _trace_csv(trace) -> str:
    rows = [(int(r[0]), float(r[1]), float(r[2])) for r in np.asarray(trace).reshape(-1, 3)]
    return csv_text(["iteration", "elbo", "rel_change"], rows)


def _psis_report(cfg: RunConfig, batch: DrawBatch, names, model=None, fit=None) -> tuple[dict, object]:
    w = psis_diagnose(batch, regularize=cfg.regularize)
    report = base_report("psis", cfg.seed, cfg.echo())
    if model is not None:
        report["model"] = model.describe()
    if cfg.input is not None:
        report["input"] = cfg.input
    report["diagnostic"] = diagnostic_section(w)
    if batch.draws is not None:
        pm, ps = psis_moments(batch, w)
        report["moments"] = {"names": list(names), "plain_mean": batch.draws.mean(axis=0),
                             "plain_second": (batch.draws ** 2).mean(axis=0),
                             "psis_mean": pm, "psis_second": ps}
    if fit is not None:
        report["fit"] = _fit_section(model, fit)
    return report, w


def cmd_psis(cfg: RunConfig) -> int:
    if (cfg.input is None) == (cfg.model is None):
        raise SettingsError("psis needs exactly one of --input and --model")
    model = fit = None
    if cfg.input is not None:
        batch = read_draws_csv(cfg.input)
        names = [f"theta_{i + 1}" for i in range(batch.K)]
    else:
        model = _build_model(cfg)
        fit = advi_fit(model, cfg.vi_config(), rng=np.random.default_rng([cfg.seed, 0]))
        draws, log_q = sample_q(fit.q, cfg.s_draws, np.random.default_rng([cfg.seed, 1]))
        batch = DrawBatch(draws, model.log_joint(draws), log_q)
        names = model.param_names
    report, w = _psis_report(cfg, batch, names, model, fit)
    os.makedirs(cfg.out, exist_ok=True)
    if cfg.weights:
        rows = [(s, float(lw), float(np.exp(lw))) for s, lw in enumerate(w.log_weights)]
        atomic_write(os.path.join(cfg.out, "weights.csv"), csv_text(["draw", "log_weight", "weight"], rows))
    write_report(os.path.join(cfg.out, "report.json"), report)
    khat = report["diagnostic"]["khat"]
    print(f"khat={'unavailable' if khat is None else format(khat, '.3f')} category={w.category.value}")
    return EXIT_BAD if w.category is Category.BAD else EXIT_OK


def cmd_fit(cfg: RunConfig) -> int:
    model = _build_model(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    try:
        fit = advi_fit(model, cfg.vi_config(), rng=np.random.default_rng([cfg.seed, 0]))
    except OptimizerDivergedError as exc:
        trace = exc.trace if exc.trace is not None else np.empty((0, 3))
        atomic_write(os.path.join(cfg.out, "trace.csv"), _trace_csv(trace))
        print(f"optimiser diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    q_rows = [(n, float(m), float(o), float(s))
              for n, m, o, s in zip(model.param_names, fit.q.mu, fit.q.omega, fit.q.sd)]
    atomic_write(os.path.join(cfg.out, "q.csv"), csv_text(["param", "mu", "omega", "sd"], q_rows))
    atomic_write(os.path.join(cfg.out, "trace.csv"), _trace_csv(fit.trace))
    report = base_report("fit", cfg.seed, cfg.echo())
    report["model"] = model.describe()
    report["fit"] = _fit_section(model, fit)
    write_report(os.path.join(cfg.out, "report.json"), report)
    print(f"iterations={fit.n_iters} converged={fit.converged} evaluations={fit.n_evals}")
    return EXIT_OK


def cmd_vsbc(cfg: RunConfig) -> int:
    model = _build_model(cfg, for_vsbc=True)
    try:
        rep = vsbc_run(model, cfg.m_reps, cfg.vi_config(), alpha=cfg.alpha, seed=cfg.seed,
                       margins=cfg.margins, oracle=cfg.oracle, workers=cfg.workers)
    except VsbcAbortedError as exc:
        print(f"calibration aborted: {exc.failures} of {exc.attempted} fits failed", file=sys.stderr)
        return EXIT_VSBC_ABORTED
    except KeyError as exc:
        raise SettingsError(str(exc.args[0])) from exc
    os.makedirs(cfg.out, exist_ok=True)
    outputs = write_vsbc_outputs(cfg.out, rep)
    report = base_report("vsbc", cfg.seed, cfg.echo())
    report["model"] = model.describe()
    report["vsbc"] = rep.to_dict()
    report["outputs"] = outputs
    write_report(os.path.join(cfg.out, "report.json"), report)
    for m, t in zip(rep.margins, rep.tests):
        print(f"{m}: {t.skew.value} (two-sided p={t.two_sided.pvalue:.3g})")
    print(f"failures={rep.failures} expected false flags={rep.expected_false_flags:.2f}")
    return EXIT_OK


def cmd_demo(cfg: RunConfig) -> int:
    from vidiag import demos

    if cfg.demo not in DEMOS:
        raise SettingsError(f"unknown demo {cfg.demo!r}; choose from {', '.join(DEMOS)}")
    os.makedirs(cfg.out, exist_ok=True)
    demos.run(cfg.demo, cfg)
    print(f"demo {cfg.demo} written to {cfg.out}")
    return EXIT_OK


COMMANDS = {"psis": cmd_psis, "vsbc": cmd_vsbc, "fit": cmd_fit, "demo": cmd_demo}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="RUN_JSON", help="JSON run file; flags override it")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="root RNG seed (required)")
    common.add_argument("--workers", type=int, help="worker processes (capped by VIDIAG_THREADS)")

    model_opts = argparse.ArgumentParser(add_help=False)
    model_opts.add_argument("--model", help=f"built-in model: {', '.join(sorted(MODELS))}")
    model_opts.add_argument("--model-arg", action="append", metavar="KEY=VALUE",
                            help="constructor argument for the model (JSON value), repeatable")
    model_opts.add_argument("--tol-rel-obj", type=float, help="relative ELBO change threshold")
    model_opts.add_argument("--eta", type=float, help="base step size")

    parser = argparse.ArgumentParser(prog="vidiag", description="Diagnostics for variational inference.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("psis", parents=[common, model_opts], help="Pareto k-hat diagnostic")
    p.add_argument("--input", help="draws CSV with columns log_p, log_q[, theta_1..theta_K]")
    p.add_argument("--s-draws", type=int, help="draws from q when fitting a model (default 10000)")
    p.add_argument("--no-khat-reg", action="store_true", help="use the raw k-hat for the category")
    p.add_argument("--weights", action="store_true", help="also write smoothed weights to weights.csv")

    v = sub.add_parser("vsbc", parents=[common, model_opts], help="simulation-based calibration of VI")
    v.add_argument("--m-reps", type=int, help="number of replications (default 100)")
    v.add_argument("--alpha", type=float, help="significance level (default 0.05)")
    v.add_argument("--margins", help="comma-separated margins to test, e.g. beta[1],log_sigma")
    v.add_argument("--oracle", action="store_true", help="use the exact posterior instead of VI")

    sub.add_parser("fit", parents=[common, model_opts], help="fit a model by ADVI")

    d = sub.add_parser("demo", parents=[common], help="desk-scale experiment bundles")
    d.add_argument("figure_id", choices=DEMOS)
    d.add_argument("--quick", action="store_true", help="few replications, for smoke testing")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_run_config(args)
        return COMMANDS[cfg.command](cfg)
    except SettingsError as exc:
        print(f"vidiag: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OptimizerDivergedError as exc:
        print(f"vidiag: optimiser diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except VidiagError as exc:
        print(f"vidiag: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
