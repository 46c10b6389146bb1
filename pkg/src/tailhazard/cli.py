"""``tailhazard`` command line: extract, fit, hazard, backtest, simulate.

Structured results go out as JSON with a fixed key order and floats at 17
significant digits; per-day and ROC series as CSV. Every file is written
through a temporary file and a rename. Exit codes: 0 success, 1 runtime
failure (a JSON error object on stderr), 2 usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .backtest import BacktestConfig, audit_days, run_backtest
from .copula import AMH, FRANK, COPULA_FAMILIES, CopulaError, CopulaFit, PseudoSample, fit_copula, select_copula
from .events import ExtremeSpec, describe, extract_events, pearson_test, read_events, write_events
from .hazard import HazardModel, HazardQuery, hazard_joint, hazard_ri
from .ingest import ReturnSeries, atomic_write_text, load_series, quantile, to_returns
from .marginals import QE, RI_FAMILIES, SHAPE_SYMBOL, GPDFit, RIFit, fit_gpd, fit_ri
from .synth import PRNG_NAME, GeneratorSpec, sample_event_process, sample_return_series

log = logging.getLogger("tailhazard")

THREADS_ENV = "TAILHAZARD_THREADS"


class UsageError(Exception):
    pass


# --- serialization --------------------------------------------------------


def _num(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    if x == int(x) and abs(x) < 1e16:
        return f"{x:.1f}"
    return f"{x:.17g}"


def _encode(obj, indent: int) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [f"{pad}{_encode(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON text with insertion-ordered keys, 17-digit floats and NaN as null."""
    return _encode(obj, 0) + "\n"


def _emit(obj, out: str | None) -> None:
    text = dumps(obj)
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def _csv_num(x) -> str:
    x = float(x)
    return f"{x:.17g}" if math.isfinite(x) else ""


# --- config ---------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    input: str | None = None
    format: str = "price"
    out: str | None = None
    verbosity: int = 0
    threads: int | None = None
    audit: int = 0
    backtest: BacktestConfig = field(default_factory=BacktestConfig)

    def to_dict(self) -> dict:
        return {
            "input": self.input,
            "format": self.format,
            "out": self.out,
            "verbosity": self.verbosity,
            "threads": self.threads,
            "audit": self.audit,
            "backtest": self.backtest.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "backtest" in d:
            d["backtest"] = BacktestConfig.from_dict(d["backtest"] or {})
        if d.get("format", "price") not in ("price", "return"):
            raise ValueError(f"format must be 'price' or 'return', got {d['format']!r}")
        return cls(**d)


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a JSON object")
    return data


def _specs(args) -> tuple[ExtremeSpec, ...] | None:
    qs = args.quantile or []
    sides = args.side or []
    if not qs:
        if sides:
            raise UsageError("--side needs --quantile")
        return None
    if len(sides) not in (0, 1, len(qs)):
        raise UsageError("give one --side, or one per --quantile")
    if not sides:
        sides = ["positive" if q > 0.5 else "negative" for q in qs]
    elif len(sides) == 1:
        sides = sides * len(qs)
    return tuple(ExtremeSpec(q, s) for q, s in zip(qs, sides))


def _threads(flag: int | None, cfg_value: int | None) -> int:
    if flag is not None:
        n = flag
    elif cfg_value is not None:
        n = cfg_value
    elif os.environ.get(THREADS_ENV):
        try:
            n = int(os.environ[THREADS_ENV])
        except ValueError as exc:
            raise UsageError(f"{THREADS_ENV} must be an integer") from exc
    else:
        n = os.cpu_count() or 1
    if n < 1:
        raise UsageError("thread count must be >= 1")
    return n


def resolve_config(args) -> RunConfig:
    """Defaults, then the config file, then command-line flags."""
    base = RunConfig.from_dict(_read_json(args.config)) if getattr(args, "config", None) else RunConfig()
    bt = base.backtest.to_dict()
    specs = _specs(args)
    if specs is not None:
        bt["quantiles"] = [{"quantile": s.quantile, "side": s.side} for s in specs]
    for flag, key in (("pairing", "pairing"), ("split", "split"), ("dt", "dt"),
                      ("refit_every", "refit_every"), ("copula", "copula_choice"),
                      ("ri_family", "ri_family")):
        val = getattr(args, flag, None)
        if val is not None:
            bt[key] = val
    for flag in ("exact_grid", "fixed_threshold"):
        if getattr(args, flag, False):
            bt[flag] = True
    d = base.to_dict()
    d["backtest"] = bt
    for key in ("input", "format", "out", "threads", "audit"):
        val = getattr(args, key, None)
        if val is not None:
            d[key] = val
    if getattr(args, "verbose", 0):
        d["verbosity"] = args.verbose
    return RunConfig.from_dict(d)


def _load_returns(path: str | None, fmt: str) -> ReturnSeries:
    if not path:
        raise UsageError("an --input file is required")
    s = load_series(path, fmt)
    return to_returns(s) if fmt == "price" else s


# --- model (de)serialization ---------------------------------------------


def model_to_dict(m: HazardModel) -> dict:
    return {"ri": m.ri.to_dict(), "gpd": m.gpd.to_dict(), "copula": m.cop.to_dict()}


def model_from_dict(d: dict) -> HazardModel:
    """Rebuild a hazard model from the ``model`` block of a ``fit`` report."""
    d = d.get("model", d)
    try:
        ri = d["ri"]
        fam = ri["family"]
        if fam not in RI_FAMILIES:
            raise ValueError(f"unknown recurrence-interval family {fam!r}")
        ri_fit = RIFit(fam, float(ri[SHAPE_SYMBOL[fam]]), float(ri["tau_mean"]))
        gpd = GPDFit(float(d["gpd"]["xi"]), float(d["gpd"]["phi"]))
        cop = d["copula"]
        if cop["family"] not in COPULA_FAMILIES:
            raise ValueError(f"unknown copula family {cop['family']!r}")
        cop_fit = CopulaFit(cop["family"], float(cop["theta"]), math.nan)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"model file lacks field {exc}") from exc
    return HazardModel(ri_fit, gpd, cop_fit)


# --- subcommands ----------------------------------------------------------


def _one_spec(args) -> ExtremeSpec:
    specs = _specs(args)
    if specs is None:
        return ExtremeSpec(0.9, "positive")
    if len(specs) != 1:
        raise UsageError("this command takes a single --quantile")
    return specs[0]


def cmd_extract(args) -> dict:
    cfg = resolve_config(args)
    r = _load_returns(cfg.input, cfg.format)
    spec = _one_spec(args)
    thr = quantile(r, spec.quantile)
    ev = extract_events(r, spec, thr)
    if args.events:
        write_events(ev, args.events)
    tau_s = describe(ev.tau)
    y_s = describe(ev.y)
    tau_p, y_p = ev.pairs(args.pairing or "end")
    rho, p = pearson_test(tau_p, y_p)
    return {
        "spec": {"quantile": spec.quantile, "side": spec.side},
        "threshold": thr,
        "events": len(ev),
        "tau": tau_s.to_dict(),
        "y": y_s.to_dict(),
        "pearson": {"rho": rho, "p_value": p, "pairing": args.pairing or "end"},
        "warnings": [f"tau: {w}" for w in tau_s.warnings] + [f"y: {w}" for w in y_s.warnings],
    }


def fit_report(r, spec: ExtremeSpec, *, pairing: str = "end", ri_family: str = QE,
               exact_grid: bool = False) -> dict:
    """Whole-sample calibration: all three interval laws, the GPD and both copulas."""
    thr = quantile(r, spec.quantile)
    ev = extract_events(r, spec, thr)
    ri_fits = {fam: fit_ri(ev.tau, fam, exact_grid=exact_grid) for fam in RI_FAMILIES}
    gpd = fit_gpd(ev.y)
    ri = ri_fits[ri_family]
    tau_p, y_p = ev.pairs(pairing)
    ps = PseudoSample.from_marginals(tau_p, y_p, ri, gpd)
    cops = {}
    warn = []
    for fam in COPULA_FAMILIES:
        try:
            cops[fam] = fit_copula(ps, fam)
            warn.extend(f"{fam}: {m}" for m in cops[fam].warnings)
        except CopulaError as exc:
            warn.append(f"{fam} fit failed: {exc}")
    chosen = select_copula(ps, cops)
    for fam, f in ri_fits.items():
        if f.boundary:
            warn.append(f"{fam} shape {f.shape} at range boundary")
    f_ = cops.get(FRANK)
    a_ = cops.get(AMH)
    table = {
        "mu": ri_fits[RI_FAMILIES[0]].shape,
        "q": ri_fits[RI_FAMILIES[1]].shape,
        "alpha": ri_fits[RI_FAMILIES[2]].shape,
        "lnL_mu": ri_fits[RI_FAMILIES[0]].loglik,
        "lnL_q": ri_fits[RI_FAMILIES[1]].loglik,
        "lnL_alpha": ri_fits[RI_FAMILIES[2]].loglik,
        "phi": gpd.phi,
        "xi": gpd.xi,
        "theta_f": f_.theta if f_ else math.nan,
        "theta_a": a_.theta if a_ else math.nan,
        "RMSE_f": f_.rmse if f_ else math.nan,
        "RMSE_a": a_.rmse if a_ else math.nan,
        "AIC_f": f_.aic if f_ else math.nan,
        "AIC_a": a_.aic if a_ else math.nan,
        "copula": chosen.family,
    }
    return {
        "spec": {"quantile": spec.quantile, "side": spec.side},
        "threshold": thr,
        "pairing": pairing,
        "table": table,
        "ri": {fam: f.to_dict() for fam, f in ri_fits.items()},
        "gpd": {**gpd.to_dict(), "diagnostics": gpd.diagnostics},
        "copulas": {fam: f.to_dict() for fam, f in cops.items()},
        "model": model_to_dict(HazardModel(ri, gpd, chosen)),
        "warnings": warn,
    }


def cmd_fit(args) -> dict:
    cfg = resolve_config(args)
    r = _load_returns(cfg.input, cfg.format)
    reports = [
        fit_report(r, spec, pairing=cfg.backtest.pairing, ri_family=args.ri_family or QE,
                   exact_grid=cfg.backtest.exact_grid)
        for spec in (_specs(args) or (ExtremeSpec(0.9, "positive"),))
    ]
    return reports[0] if len(reports) == 1 else {
        "fits": reports, "warnings": [w for rep in reports for w in rep["warnings"]],
    }


def _pick_fit(doc: dict, specs) -> dict:
    """The single fit of a ``fit`` report, or the one matching ``--quantile``."""
    if "fits" not in doc:
        return doc
    fits = doc["fits"]
    if specs is None:
        if len(fits) != 1:
            raise UsageError("model file holds several fits; choose one with --quantile")
        return fits[0]
    if len(specs) != 1:
        raise UsageError("this command takes a single --quantile")
    want = {"quantile": specs[0].quantile, "side": specs[0].side}
    for f in fits:
        if f.get("spec") == want:
            return f
    raise ValueError(f"model file has no fit for quantile {want['quantile']} ({want['side']})")


def cmd_hazard(args) -> dict:
    if args.model:
        model = model_from_dict(_pick_fit(_read_json(args.model), _specs(args)))
        warn = []
    else:
        cfg = resolve_config(args)
        r = _load_returns(cfg.input, cfg.format)
        rep = fit_report(r, _one_spec(args), pairing=cfg.backtest.pairing,
                         ri_family=args.ri_family or QE)
        model = model_from_dict(rep)
        warn = rep["warnings"]
    q = HazardQuery(args.t, args.dt, args.y_last)
    import warnings as _w
    with _w.catch_warnings(record=True) as caught:
        _w.simplefilter("always")
        w = hazard_ri(model.ri, q)
        wy = hazard_joint(model, q)
    warn.extend(str(c.message) for c in caught)
    return {"t": q.t, "dt": q.dt, "y_last": q.y_last, "W": w, "Wy": wy,
            "model": model_to_dict(model), "warnings": warn}


def _write_backtest_csvs(report, outdir: Path) -> None:
    hz = ["date,t,y_last,W,Wy,extreme,spec,period"]
    rc = ["variant,qp,A,D,spec,period"]
    for label, res in report.results.items():
        rec = res.records
        for i in range(rec["day"].shape[0]):
            hz.append(",".join([
                rec["date"][i].isoformat(), str(int(rec["t"][i])), _csv_num(rec["y_last"][i]),
                _csv_num(rec["W"][i]), _csv_num(rec["Wy"][i]), str(int(rec["extreme"][i])),
                label, str(rec["period"][i]),
            ]))
        for (period, variant), curve in res.rocs.items():
            for qp, a, d in zip(curve.qp, curve.A, curve.D):
                rc.append(f"{variant},{_csv_num(qp)},{_csv_num(a)},{_csv_num(d)},{label},{period}")
    atomic_write_text(outdir / "hazard.csv", "\n".join(hz) + "\n")
    atomic_write_text(outdir / "roc.csv", "\n".join(rc) + "\n")


def cmd_backtest(args) -> dict:
    cfg = resolve_config(args)
    r = _load_returns(cfg.input, cfg.format)
    workers = _threads(args.threads, cfg.threads)
    log.info("backtest on %d days with %d worker(s)", len(r), workers)
    report = run_backtest(r, cfg.backtest, workers=workers)
    warn = list(report.warnings)
    results = {}
    for label, res in report.results.items():
        first, last = res.fits[0], res.fits[-1]
        results[label] = {
            "auc_m": res.auc_table(),
            "days": {p: int(np.count_nonzero(res.records["period"] == p)) for p in ("in", "out")},
            "extremes": {p: int(np.count_nonzero(res.records["extreme"] & (res.records["period"] == p)))
                         for p in ("in", "out")},
            "refits": len(res.fits),
            "carried_forward": sum(1 for f in res.fits if f.carried),
            "initial_fit": first.to_dict(),
            "final_fit": last.to_dict(),
        }
    out = {
        "version": __version__,
        "input": cfg.input,
        "format": cfg.format,
        "config": cfg.backtest.to_dict(),
        "results": results,
    }
    if cfg.audit:
        rows = audit_days(r, cfg.backtest, report, n_days=cfg.audit)
        out["audit"] = {"checked": len(rows), "identical": sum(r_["identical"] for r_ in rows), "rows": rows}
        bad = [r_ for r_ in rows if not r_["identical"]]
        if bad:
            warn.append(f"anti-lookahead audit: {len(bad)} of {len(rows)} days differ")
    out["warnings"] = warn
    outdir = Path(cfg.out or ".")
    _write_backtest_csvs(report, outdir)
    atomic_write_text(outdir / "report.json", dumps(out))
    return out


def cmd_simulate(args) -> dict:
    spec_d = _read_json(args.spec) if args.spec else {}
    for key in ("seed", "n", "pairing"):
        val = getattr(args, key, None)
        if val is not None:
            spec_d[key] = val
    unknown = set(spec_d) - set(GeneratorSpec.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown generator spec keys: {sorted(unknown)}")
    spec = GeneratorSpec.from_dict(spec_d)
    ev = sample_event_process(spec)
    if not args.out and not args.returns:
        raise UsageError("simulate needs --out and/or --returns")
    if args.out:
        write_events(ev, args.out)
    out = {"prng": PRNG_NAME, "spec": spec.to_dict(), "events": len(ev),
           "tau_min": int(ev.tau.min()), "tau_mean": float(ev.tau.mean())}
    if args.returns:
        from .ingest import write_series
        rs = sample_return_series(spec, args.days)
        write_series(rs, args.returns)
        out["days"] = args.days
    out["warnings"] = []
    return out


# --- parser ---------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(2)


def _common(p: argparse.ArgumentParser, *, series: bool = True) -> None:
    if series:
        p.add_argument("--input", help="date,value CSV")
        p.add_argument("--format", choices=("price", "return"), default=None)
        p.add_argument("--quantile", type=float, action="append",
                       help="extreme quantile level; repeat for several")
        p.add_argument("--side", choices=("positive", "negative"), action="append")
        p.add_argument("--pairing", choices=("end", "start"), default=None,
                       help="size paired with the interval it closes (end) or opens (start)")
        p.add_argument("--config", help="JSON run config; flags override it")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="tailhazard", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("extract", help="extremes, intervals and sizes")
    _common(p)
    p.add_argument("--events", help="write index,tau,y CSV here")
    p.add_argument("--out", help="descriptive statistics JSON (default stdout)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fit", help="whole-sample calibration table")
    _common(p)
    p.add_argument("--ri-family", choices=RI_FAMILIES, default=None,
                   help="interval law used for the copula pseudo-sample (default q_exponential)")
    p.add_argument("--exact-grid", action="store_true", help="exhaustive 1e-6 shape grid")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("hazard", help="W and W_y for one query")
    _common(p)
    p.add_argument("--model", help="fit report JSON to take the model from")
    p.add_argument("--ri-family", choices=RI_FAMILIES, default=None)
    p.add_argument("--t", type=float, required=True, help="days since the last extreme")
    p.add_argument("--dt", type=float, default=1.0)
    p.add_argument("--y-last", type=float, default=0.0, help="exceeding size of the last extreme")
    p.add_argument("--out")
    p.set_defaults(func=cmd_hazard)

    p = sub.add_parser("backtest", help="expanding-window forecast and ROC")
    _common(p)
    p.add_argument("--out", help="output directory (default .)")
    p.add_argument("--split", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--refit-every", type=int, default=None)
    p.add_argument("--copula", choices=COPULA_FAMILIES + ("auto",), default=None)
    p.add_argument("--ri-family", choices=RI_FAMILIES + ("auto",), default=None)
    p.add_argument("--exact-grid", action="store_true")
    p.add_argument("--fixed-threshold", action="store_true",
                   help="freeze the extreme threshold at the initial split")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker count (default ${THREADS_ENV}, else all cores)")
    p.add_argument("--audit", type=int, default=None,
                   help="recompute this many random out-of-sample days from truncated inputs")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("simulate", help="synthetic event process")
    _common(p, series=False)
    p.add_argument("--spec", help="generator spec JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n", type=int, default=None, help="number of intervals")
    p.add_argument("--pairing", choices=("end", "start"), default=None)
    p.add_argument("--out", help="events CSV")
    p.add_argument("--returns", help="also embed the events in a return series CSV")
    p.add_argument("--days", type=int, default=5000)
    p.set_defaults(func=cmd_simulate)
    return ap


def _error(exc: BaseException) -> dict:
    mod = type(exc).__module__
    return {"error": {
        "type": type(exc).__name__,
        "module": mod.split(".")[-1] if mod.startswith("tailhazard") else "cli",
        "message": str(exc),
    }}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    ap = build_parser()
    if not argv:
        ap.print_usage(sys.stderr)
        return 2
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        ap.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        result = args.func(args)
        if args.command == "backtest":
            sys.stdout.write(dumps({"auc_m": {k: v["auc_m"] for k, v in result["results"].items()},
                                    "warnings": result["warnings"]}))
        else:
            _emit(result, getattr(args, "out", None) if args.command != "simulate" else None)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        sys.stderr.write(dumps(_error(exc)))
        return 2
    except (ValueError, OSError, ArithmeticError) as exc:
        sys.stderr.write(dumps(_error(exc)))
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
