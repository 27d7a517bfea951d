"""Command-line front end.

Subcommands
-----------
sdci       selective sign-determining intervals for a CSV of estimates
bh-dir     directional BH decisions for the same input
gwas       rectangle regions and trend statistics for 2x3 genotype tables
simulate   run a Monte Carlo experiment from a key=value config file
constants  print the interval constants for a level and family
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bivariate import Table2x3, cochran_armitage, effects_from_table, principal_components, rect_region, z_pc2
from .dist import STANDARD_NORMAL, fisher_z, fisher_z_inv
from .errors import ConfigError, DegenerateTableError, InputError, ParseError, SdciError
from .intervals import Interval, Kind, MarginalFamily, SignDecision, mqc_psi_breakpoints, qc_constants, sign_threshold
from .selection import Dependency, ProcedureConfig, Unit, UnitRecord, bh_directional, sdci
from .selection import bh_directional_z, sdci_z
from .simulation import (
    ExpNormalMix, FixedVector, Independent, NormalPrior, SimConfig, SmoothedField, SparseField, run,
)

__all__ = ["main", "build_parser", "read_units_csv", "write_results_csv", "read_results_csv",
           "read_tables_csv", "load_sim_config"]

RESULT_COLUMNS = ["id", "selected", "decision", "lower", "upper", "lower_closed",
                  "upper_closed", "adjusted_alpha"]


# ---------------------------------------------------------------- csv i/o

def _float(text, line, name):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"column {name!r}: cannot parse {text!r} as a number", line) from None
    return v


def _rows(path, required, optional=()):
    """Yield ``(line_number, dict)`` for a headed CSV with the given columns."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file, a header row is required", 1) from None
        header = [h.strip() for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise ParseError(f"header lacks column(s) {', '.join(missing)}", 1)
        unknown = [c for c in header if c not in required and c not in optional]
        if unknown:
            raise ParseError(f"unexpected column(s) {', '.join(unknown)}", 1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", line)
            yield line, {h: c.strip() for h, c in zip(header, row)}


def read_units_csv(path, fisher_n=None) -> list[Unit]:
    """Read ``id,estimate[,sd]`` rows; with ``fisher_n`` estimates are correlations."""
    units = []
    for line, rec in _rows(path, ("id", "estimate"), ("sd",)):
        est = _float(rec["estimate"], line, "estimate")
        sd = _float(rec["sd"], line, "sd") if rec.get("sd", "") != "" else 1.0
        if not math.isfinite(est):
            raise ParseError("estimate must be finite", line)
        if not (sd > 0 and math.isfinite(sd)):
            raise ParseError("sd must be positive and finite", line)
        if fisher_n is not None:
            if "sd" in rec and rec["sd"] != "" and sd != 1.0:
                raise ParseError("sd is not allowed with correlation input", line)
            if not -1.0 < est < 1.0:
                raise ParseError("correlation must lie strictly between -1 and 1", line)
            est = float(fisher_z(est, fisher_n))
        units.append(Unit(rec["id"], est, sd))
    if not units:
        raise ParseError("no data rows", 2)
    return units


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    return repr(float(x))


def write_results_csv(records: list[UnitRecord], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in records:
        iv = r.interval
        w.writerow([
            r.id, _fmt(r.selected), r.decision.value,
            _fmt(iv.lower if iv else None), _fmt(iv.upper if iv else None),
            _fmt(bool(iv.lower_closed) if iv else False), _fmt(bool(iv.upper_closed) if iv else False),
            _fmt(r.adjusted_alpha),
        ])


def _bool(text, line, name):
    if text in ("true", "false"):
        return text == "true"
    raise ParseError(f"column {name!r}: expected true/false, got {text!r}", line)


def read_results_csv(path) -> list[UnitRecord]:
    """Parse a file written by :func:`write_results_csv` back into records."""
    out = []
    for line, rec in _rows(path, RESULT_COLUMNS):
        try:
            decision = SignDecision(rec["decision"])
        except ValueError:
            raise ParseError(f"unknown decision {rec['decision']!r}", line) from None
        iv = None
        if rec["lower"] != "":
            iv = Interval(_float(rec["lower"], line, "lower"), _float(rec["upper"], line, "upper"),
                          _bool(rec["lower_closed"], line, "lower_closed"),
                          _bool(rec["upper_closed"], line, "upper_closed"))
        adj = _float(rec["adjusted_alpha"], line, "adjusted_alpha") if rec["adjusted_alpha"] else None
        out.append(UnitRecord(rec["id"], _bool(rec["selected"], line, "selected"), decision, iv, adj))
    return out


TABLE_COLUMNS = ("id", "n10", "n11", "n12", "n20", "n21", "n22")


def read_tables_csv(path) -> list[tuple[str, Table2x3]]:
    """Read ``id,n10,n11,n12,n20,n21,n22`` rows (row 1 controls, row 2 cases)."""
    out = []
    for line, rec in _rows(path, TABLE_COLUMNS):
        vals = [_float(rec[c], line, c) for c in TABLE_COLUMNS[1:]]
        if any(v < 0 or not math.isfinite(v) or v != int(v) for v in vals):
            raise ParseError("counts must be non-negative integers", line)
        out.append((rec["id"], Table2x3.from_rows(vals[:3], vals[3:])))
    if not out:
        raise ParseError("no data rows", 2)
    return out


# ---------------------------------------------------------------- helpers

def _family(args, base=STANDARD_NORMAL, name=None) -> MarginalFamily:
    name = args.family if name is None else name
    psi, delta = getattr(args, "psi", None), getattr(args, "delta", None)
    if psi is not None and name not in ("qc", "mqc"):
        raise ConfigError("--psi applies only to the qc and mqc families")
    if delta is not None and name != "mqc-delta":
        raise ConfigError("--delta applies only to the mqc-delta family")
    if name in ("qc", "mqc") and psi is None:
        raise ConfigError(f"--family {name} requires --psi")
    if name == "mqc-delta" and delta is None:
        raise ConfigError("--family mqc-delta requires --delta")
    return MarginalFamily.from_name(name, psi=psi, delta=delta, base=base)


def _manifest(subcommand, config, seed=None) -> dict:
    out = {"subcommand": subcommand, "config": config, "version": __version__}
    if seed is not None:
        out["seed"] = seed
    return out


def _json_dump(obj, fh):
    json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False, default=_json_default)
    fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


class _Outputs:
    """Where to send the CSV and the JSON summary."""

    def __init__(self, args):
        self.output = getattr(args, "output", None)
        self.summary = getattr(args, "summary", None)

    def write_csv(self, writer_fn):
        if self.output in (None, "-"):
            writer_fn(sys.stdout)
        else:
            with open(self.output, "w", newline="", encoding="utf-8") as fh:
                writer_fn(fh)

    def write_summary(self, obj):
        if self.summary is None:
            _json_dump(obj, sys.stderr)
        elif self.summary == "-":
            _json_dump(obj, sys.stdout)
        else:
            with open(self.summary, "w", encoding="utf-8") as fh:
                _json_dump(obj, fh)


def _back_transform(records, n):
    out = []
    for r in records:
        iv = r.interval
        if iv is not None:
            iv = Interval(float(fisher_z_inv(iv.lower, n)), float(fisher_z_inv(iv.upper, n)),
                          iv.lower_closed, iv.upper_closed)
        out.append(UnitRecord(r.id, r.selected, r.decision, iv, r.adjusted_alpha))
    return out


# ---------------------------------------------------------------- subcommands

def cmd_sdci(args) -> int:
    n = args.fisher_n
    if n is not None and n < 4:
        raise ConfigError("--fisher-n must be at least 4")
    units = read_units_csv(args.input, fisher_n=n)
    fam = _family(args)
    if n is not None and fam.kind is Kind.MQC_DELTA:
        # delta is given as a correlation; move it to the z scale
        if not 0.0 < args.delta < 1.0:
            raise ConfigError("with --fisher-n, --delta is a correlation in (0, 1)")
        fam = MarginalFamily.mqc_delta(float(fisher_z(args.delta, n)))
    cfg = ProcedureConfig(args.q, fam, Dependency(args.dependency))
    res = sdci(units, cfg)
    records = res.records
    if n is not None:
        records = _back_transform(records, n)
    out = _Outputs(args)
    out.write_csv(lambda fh: write_results_csv(records, fh))
    summary = {
        "m": res.m, "R": res.R, "q": args.q, "q_eff": res.q_eff,
        "adjusted_alpha": res.adjusted_alpha, **cfg.family.describe(),
        "dependency": args.dependency,
    }
    if fam.kind is Kind.MQC_DELTA:
        summary["delta"] = args.delta
    if n is not None:
        summary["fisher_n"] = n
    summary["manifest"] = _manifest("sdci", _echo(args))
    out.write_summary(summary)
    return 0


def cmd_bh(args) -> int:
    units = read_units_csv(args.input, fisher_n=args.fisher_n)
    res = bh_directional(units, args.q)
    out = _Outputs(args)
    out.write_csv(lambda fh: write_results_csv(res.records, fh))
    out.write_summary({"m": res.m, "R": res.R, "q": args.q,
                       "manifest": _manifest("bh-dir", _echo(args))})
    return 0


GWAS_COLUMNS = ["id", "beta_dom", "beta_rec", "var_dom", "var_rec", "cov", "pc2_dom", "pc2_rec",
                "z_pc2", "ca_z", "selected", "alpha1", "alpha2", "pc1_lower", "pc1_upper",
                "pc2_lower", "pc2_upper"] + [f"corner{k}_{ax}" for k in range(1, 5) for ax in ("dom", "rec")]


def _parse_weights(text):
    try:
        w = [float(x) for x in text.split(",")]
    except ValueError:
        raise ConfigError(f"--ca-weights must be three comma-separated numbers, got {text!r}") from None
    if len(w) != 3:
        raise ConfigError("--ca-weights needs exactly three numbers")
    return w


def cmd_gwas(args) -> int:
    if not 0.0 < args.q1 <= 1.0:
        raise ConfigError("--q1 must lie in (0, 1]")
    if not 0.0 < args.q2 < 1.0:
        raise ConfigError("--q2 must lie in (0, 1)")
    fam = _family(args, name=args.family2)
    weights = _parse_weights(args.ca_weights)
    rows, skipped = [], []
    for uid, table in read_tables_csv(args.input):
        try:
            eff = effects_from_table(table, args.continuity_correction)
            pcs = principal_components(eff)
        except SdciError as exc:
            print(f"sdci gwas: skipping {uid}: {exc}", file=sys.stderr)
            skipped.append(uid)
            continue
        try:
            ca = cochran_armitage(table, weights)
        except DegenerateTableError as exc:
            # the trend test needs every margin; the rectangle does not
            print(f"sdci gwas: {uid}: no trend statistic: {exc}", file=sys.stderr)
            ca = None
        rows.append((uid, eff, pcs, z_pc2(eff, pcs), ca))
    if not rows:
        raise InputError("no usable tables")
    z = np.array([r[3] for r in rows])
    m = z.size
    if args.selector == "bh":
        R, selected = bh_directional_z(z, args.q2)
    else:
        R, selected, _ = sdci_z(z, fam, args.q2)
    adjusted = R * args.q2 / m

    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GWAS_COLUMNS)
        for (uid, eff, pcs, zz, ca), sel in zip(rows, selected):
            region = rect_region(eff, args.q1, args.q2, fam, adjusted if sel else None)
            corners = region.corners().ravel()
            w.writerow([uid] + [_fmt(v) for v in (
                eff.beta_dom, eff.beta_rec, eff.var_dom, eff.var_rec, eff.cov,
                pcs.pc2[0], pcs.pc2[1], zz, ca)] + [_fmt(bool(sel)), _fmt(region.alpha1), _fmt(region.alpha2)]
                + [_fmt(v) for v in (region.interval_pc1.lower, region.interval_pc1.upper,
                                     region.interval_pc2.lower, region.interval_pc2.upper)]
                + [_fmt(v) for v in corners])

    out = _Outputs(args)
    out.write_csv(write)
    out.write_summary({
        "m": m, "R": R, "q1": args.q1, "q2": args.q2, "adjusted_alpha2": adjusted,
        "joint_level_unadjusted": (1.0 - args.q1) * (1.0 - args.q2),
        "selector": args.selector, **fam.describe(), "skipped": skipped,
        "manifest": _manifest("gwas", _echo(args)),
    })
    return 0


def cmd_simulate(args) -> int:
    cfg, echo = load_sim_config(args.config, reps=args.reps, seed=args.seed)
    summary = run(cfg, workers=args.workers)
    out = summary.to_dict()
    out["manifest"] = _manifest("simulate", echo, seed=cfg.seed)
    if args.output in (None, "-"):
        _json_dump(out, sys.stdout)
    else:
        with open(args.output, "w", encoding="utf-8") as fh:
            _json_dump(out, fh)
    return 0


def cmd_constants(args) -> int:
    alpha = args.alpha
    if not 0.0 < alpha < 1.0:
        raise ConfigError("--alpha must lie in (0, 1)")
    base = STANDARD_NORMAL
    out = {"alpha": alpha, "c_alpha": float(base.quantile(alpha)),
           "c_half_alpha": float(base.quantile(alpha / 2.0))}
    name = args.family
    if name is None:
        name = "mqc" if args.psi is not None else ("mqc-delta" if args.delta is not None else None)
    if name is not None:
        fam = _family(args, name=name)
        out.update(fam.describe())
        out["threshold"] = float(sign_threshold(fam, alpha))
        if fam.kind in (Kind.QC, Kind.MQC):
            k = qc_constants(alpha, fam.psi)
            out.update({"cbar": k.cbar, "ctilde": k.ctilde, "g_top": k.g_top, "mqc_case": k.case})
        if fam.kind is Kind.MQC_DELTA:
            out["cbar_delta"] = out["threshold"] - fam.delta
    try:
        psi1, psi2 = mqc_psi_breakpoints(alpha)
        out["psi1"], out["psi2"] = psi1, psi2
    except SdciError as exc:
        out["psi1"] = out["psi2"] = None
        out["psi_breakpoints_error"] = str(exc)
    out["manifest"] = _manifest("constants", _echo(args))
    _json_dump(out, sys.stdout)
    return 0


# ---------------------------------------------------------------- simulation config

_SIM_KEYS = {
    "m", "theta_model", "theta_values", "n_exp", "exp_mean", "n_norm", "norm_mean", "norm_sd",
    "random_signs", "prior_sd", "prior_mean", "pi1", "rho1", "n_subjects", "noise", "dims", "fwhm",
    "q", "family", "psi", "delta", "dependency", "method", "n_reps", "seed", "theta_fixed",
}


class _Fields:
    def __init__(self, section):
        self.s = section

    def get(self, key, conv, default=None):
        if key not in self.s:
            if default is None:
                raise ConfigError(f"config field {key!r} is required")
            return default
        raw = self.s[key].strip()
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"config field {key!r}: cannot parse {raw!r} ({exc})") from None


def _to_bool(text):
    t = text.lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected a boolean")


def _to_floats(text):
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _to_ints(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def load_sim_config(path, reps=None, seed=None):
    """Read a flat ``key = value`` simulation config.

    Returns the :class:`SimConfig` and the echo of resolved fields.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string("[sim]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    sec = parser["sim"]
    unknown = sorted(set(sec) - _SIM_KEYS)
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
    f = _Fields(sec)
    m = f.get("m", int)
    kind = f.get("theta_model", str)
    if kind == "fixed":
        theta = FixedVector(f.get("theta_values", _to_floats))
    elif kind == "exp-normal":
        theta = ExpNormalMix(f.get("n_exp", int, 160), f.get("exp_mean", float, 0.5),
                             f.get("n_norm", int, 40), f.get("norm_mean", float, 3.0),
                             f.get("norm_sd", float, 1.0), f.get("random_signs", _to_bool, True))
    elif kind == "normal":
        theta = NormalPrior(f.get("prior_sd", float, 2.0), f.get("prior_mean", float, 0.0))
    elif kind == "sparse-field":
        theta = SparseField(f.get("pi1", float), f.get("rho1", float), f.get("n_subjects", int, 16))
    else:
        raise ConfigError(f"config field 'theta_model': unknown model {kind!r} "
                          "(fixed, exp-normal, normal, sparse-field)")
    noise_kind = f.get("noise", str, "independent")
    if noise_kind == "independent":
        noise = Independent()
    elif noise_kind == "smoothed-field":
        noise = SmoothedField(f.get("dims", _to_ints), f.get("fwhm", float))
    else:
        raise ConfigError(f"config field 'noise': unknown model {noise_kind!r}")
    fam_name = f.get("family", str)
    psi = f.get("psi", float) if "psi" in sec else None
    delta = f.get("delta", float) if "delta" in sec else None
    try:
        fam = MarginalFamily.from_name(fam_name, psi=psi, delta=delta)
    except ConfigError as exc:
        raise ConfigError(f"config field 'family': {exc}") from None
    try:
        dependency = Dependency(f.get("dependency", str, "independent"))
    except ValueError:
        raise ConfigError("config field 'dependency': expected independent or general") from None
    proc = ProcedureConfig(f.get("q", float), fam, dependency)
    n_reps = reps if reps is not None else f.get("n_reps", int, 1000)
    seed_v = seed if seed is not None else f.get("seed", int, 0)
    cfg = SimConfig(m=m, theta_model=theta, procedure=proc, noise=noise, n_reps=n_reps,
                    seed=seed_v, theta_fixed_across_reps=f.get("theta_fixed", _to_bool, True),
                    method=f.get("method", str, "sdci"))
    echo = {k: sec[k].strip() for k in sorted(sec)}
    echo["n_reps"] = str(n_reps)
    echo["seed"] = str(seed_v)
    return cfg, echo


# ---------------------------------------------------------------- parser

def _echo(args) -> dict:
    skip = {"func", "output", "summary"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _probability(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    return v


FAMILIES = [k.value for k in Kind]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdci", description="Selective sign-determining confidence intervals.")
    p.add_argument("--version", action="version", version=f"sdci {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add_io(sp):
        sp.add_argument("input", help="input CSV")
        sp.add_argument("-o", "--output", help="output CSV (default: stdout)")
        sp.add_argument("--summary", help="JSON summary path; '-' for stdout (default: stderr)")

    s = sub.add_parser("sdci", help="FCR-adjusted selective sign-determining intervals")
    add_io(s)
    s.add_argument("--q", type=_probability, required=True)
    s.add_argument("--family", choices=FAMILIES, default="symmetric")
    s.add_argument("--psi", type=float)
    s.add_argument("--delta", type=float)
    s.add_argument("--dependency", choices=[d.value for d in Dependency], default="independent")
    s.add_argument("--fisher-n", type=int, help="estimates are correlations from n observations")
    s.set_defaults(func=cmd_sdci)

    b = sub.add_parser("bh-dir", help="directional Benjamini-Hochberg decisions")
    add_io(b)
    b.add_argument("--q", type=_probability, required=True)
    b.add_argument("--fisher-n", type=int)
    b.set_defaults(func=cmd_bh)

    g = sub.add_parser("gwas", help="dominance/recessiveness rectangles for genotype tables")
    add_io(g)
    g.add_argument("--q1", type=_probability, required=True)
    g.add_argument("--q2", type=_probability, required=True)
    g.add_argument("--family2", choices=FAMILIES, default="symmetric")
    g.add_argument("--psi", type=float)
    g.add_argument("--delta", type=float)
    g.add_argument("--selector", choices=["sdci", "bh"], default="sdci")
    g.add_argument("--ca-weights", default="0,1,2")
    g.add_argument("--continuity-correction", action="store_true")
    g.set_defaults(func=cmd_gwas)

    m = sub.add_parser("simulate", help="run a simulation config")
    m.add_argument("config")
    m.add_argument("--reps", type=int)
    m.add_argument("--seed", type=int)
    m.add_argument("--workers", type=int)
    m.add_argument("-o", "--output")
    m.set_defaults(func=cmd_simulate)

    c = sub.add_parser("constants", help="print interval constants")
    c.add_argument("--alpha", type=_probability, required=True)
    c.add_argument("--family", choices=FAMILIES)
    c.add_argument("--psi", type=float)
    c.add_argument("--delta", type=float)
    c.set_defaults(func=cmd_constants)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SdciError as exc:
        print(f"sdci {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
