"""Command-line interface.

``lmhomog test DATA.csv --method m --seed 1`` runs one homogeneity test on
long-format site data and writes a JSON report. ``lmhomog experiment
SPEC --output DIR`` runs a simulation study described by a YAML file.

Exit codes for ``test``: 0 homogeneous, 1 heterogeneous, 2 error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import HomogeneityError, InsufficientSites, NonConvergence, ParseError, SpecError
from .lmoments import has_ties
from .parametric import DEFAULT_NSIM, hw_test
from .resampling import METHODS, np_test
from .rng import seed_sequence
from .simharness import (
    MR_KINDS,
    TESTS,
    UR_KINDS,
    MRSpec,
    URSpec,
    run_experiment,
    write_json,
    write_rate_table,
    write_timing_table,
)
from .statistic import Region, v_statistic

__all__ = ["main", "read_site_data", "parse_site_data", "write_site_data", "load_experiment_spec"]

EXIT_HOMOGENEOUS, EXIT_HETEROGENEOUS, EXIT_ERROR = 0, 1, 2


def _float(v) -> float | None:
    v = float(v)
    return v if math.isfinite(v) else None


def read_site_data(path, columns=None, exclude_sites=()) -> Region:
    """Parse a ``site,var1,var2,...`` file into a :class:`Region`."""
    return parse_site_data(path, columns, exclude_sites)[0]


def parse_site_data(path, columns=None, exclude_sites=()) -> tuple[Region, list[str]]:
    """Parse site data; returns the region and the names of the selected variables.

    Sites keep the order of their first appearance. Line numbers in
    :class:`ParseError` count the header as line 1.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not rows:
        raise ParseError("empty file", line=1)
    head_line, header = rows[0]
    header = [h.strip() for h in header]
    if len(header) < 2 or header[0].lower() != "site":
        raise ParseError("header must be 'site,<var1>[,<var2>...]'", line=head_line)
    names = header[1:]
    if len(set(names)) != len(names):
        raise ParseError("duplicate variable names in header", line=head_line)
    if columns:
        missing = [c for c in columns if c not in names]
        if missing:
            raise ParseError(f"unknown columns {missing}; available: {names}", line=head_line)
        keep = [names.index(c) for c in columns]
    else:
        keep = list(range(len(names)))
    selected = [names[k] for k in keep]

    data: dict[str, list] = {}
    for line, r in rows[1:]:
        if len(r) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(r)}", line=line)
        site = r[0].strip()
        if not site:
            raise ParseError("empty site id", line=line)
        try:
            values = [float(c) for c in r[1:]]
        except ValueError:
            raise ParseError("non-numeric value", line=line) from None
        if not all(math.isfinite(v) for v in values):
            raise ParseError("non-finite value", line=line)
        data.setdefault(site, []).append([values[k] for k in keep])

    excluded = {str(s) for s in exclude_sites}
    unknown = excluded - set(data)
    if unknown:
        raise InsufficientSites(f"cannot exclude unknown sites {sorted(unknown)}")
    ids = [s for s in data if s not in excluded]
    if len(ids) < 2:
        raise InsufficientSites(f"need at least 2 sites after exclusion, got {len(ids)}")
    return Region([np.array(data[s]) for s in ids], site_ids=tuple(ids)), selected


def write_site_data(region: Region, path, names=None) -> None:
    """Inverse of :func:`read_site_data`; values are written with ``repr`` precision."""
    names = names or [f"var{k + 1}" for k in range(region.p)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site", *names])
        for sid, site in zip(region.site_ids, region.sites):
            for row in site:
                w.writerow([sid, *(repr(float(v)) for v in row)])


def _tie_warnings(region: Region, names) -> list[str]:
    out = []
    for sid, site in zip(region.site_ids, region.sites):
        tied = [names[k] for k in range(region.p) if has_ties(site[:, k])]
        if tied:
            out.append(f"site {sid}: tied values in {', '.join(tied)} averaged over tie orderings")
    return out


def _test_report(args, region: Region, names) -> tuple[dict, int]:
    stat = v_statistic(region)
    report = {
        "method": args.method,
        "columns": list(names),
        "excluded_sites": list(args.exclude_sites),
        "n_sim": args.nsim,
        "alpha": args.alpha,
        "seed": args.seed,
        "v_obs": stat.value,
        "sites": [
            {"id": sid, "n": int(site.shape[0]), "lcv": lcv.tolist()}
            for sid, site, lcv in zip(region.site_ids, region.sites, stat.per_site_lcv)
        ],
        "warnings": _tie_warnings(region, names),
    }
    try:
        if args.method == "hw":
            rep = hw_test(region, n_sim=args.nsim, alpha=args.alpha, seed=args.seed, threads=args.threads)
        else:
            rep = np_test(region, method=args.method, n_sim=args.nsim, alpha=args.alpha, seed=args.seed, threads=args.threads)
    except NonConvergence as exc:
        report["decision"] = None
        report["error"] = {
            "type": "NonConvergence",
            "message": str(exc),
            "margin": None if exc.margin is None else names[exc.margin],
            "iterations": exc.iterations,
            "residual": _float(exc.residual),
        }
        report["warnings"].append("Kappa fit did not converge; no HW result")
        return report, EXIT_ERROR
    report.update(
        mu_sim=rep.mu_sim,
        sigma_sim=rep.sigma_sim,
        threshold=rep.threshold,
        p_value=rep.p_value,
        decision=rep.decision,
    )
    if args.method == "hw":
        report.update(
            h=rep.h,
            h_label=rep.label,
            reject_5pct=rep.reject_5pct,
            kappa=[
                {"variable": n, "xi": m.xi, "alpha": m.alpha, "k": m.k, "h": m.h}
                for n, m in zip(names, rep.margins)
            ],
            copula_m=rep.copula_m,
        )
    return report, EXIT_HETEROGENEOUS if rep.heterogeneous else EXIT_HOMOGENEOUS


def _dump(report: dict, output) -> None:
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()] if value else []


def cmd_test(args) -> int:
    try:
        region, names = parse_site_data(args.input, args.columns or None, args.exclude_sites)
        report, code = _test_report(args, region, names)
    except (HomogeneityError, OSError) as exc:
        report = {"method": args.method, "seed": args.seed, "error": {"type": type(exc).__name__, "message": str(exc)}}
        if isinstance(exc, ParseError):
            report["error"]["line"] = exc.line
        print(f"error: {exc}", file=sys.stderr)
        if args.output:
            _dump(report, args.output)
        return EXIT_ERROR
    _dump(report, args.output)
    if "error" in report:
        print(f"error: {report['error']['message']}", file=sys.stderr)
    return code


# Experiment specification files
# -------------------------------
#
# YAML mapping with keys
#   P, n_sim, alpha, seed   run settings (seed required)
#   tests                   list drawn from hw, m, b, bc, ys, yr
#   experiments             list of blocks; each block has
#       family: ur | mr
#       kind:   a UR or MR heterogeneity kind
#       N:      int or list of ints
#       gamma:  number or list (MR), gamma_tau / gamma_tau3 (UR)
#       length, and any other URSpec / MRSpec field (optional)
# Every block expands into the cross product of its list-valued fields.

_RUN_KEYS = {"P", "n_sim", "alpha", "seed", "tests", "experiments"}


def _need(d: dict, key: str, path: str):
    if key not in d:
        raise SpecError(f"missing required field '{key}'", path=f"{path}.{key}" if path else key)
    return d[key]


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _build_specs(block: dict, path: str) -> list:
    if not isinstance(block, dict):
        raise SpecError("experiment block must be a mapping", path=path)
    family = _need(block, "family", path)
    kind = _need(block, "kind", path)
    if family not in ("ur", "mr"):
        raise SpecError(f"family must be 'ur' or 'mr', got {family!r}", path=f"{path}.family")
    kinds = UR_KINDS if family == "ur" else MR_KINDS
    if kind not in kinds:
        raise SpecError(f"kind must be one of {kinds}, got {kind!r}", path=f"{path}.kind")
    cls = URSpec if family == "ur" else MRSpec
    allowed = set(cls.__dataclass_fields__) - {"n_sites", "kind"}
    fields = {}
    for key, val in block.items():
        if key in ("family", "kind"):
            continue
        name = "n_sites" if key == "N" else key
        if name != "n_sites" and name not in allowed:
            raise SpecError(f"unknown field '{key}' for family {family}", path=f"{path}.{key}")
        fields[name] = _as_list(val)
    if "n_sites" not in fields:
        _need(block, "N", path)
    specs = []
    keys = sorted(fields, key=lambda k: (k != "gamma", k != "n_sites", k))
    for combo in itertools.product(*(fields[k] for k in keys)):
        kw = dict(zip(keys, combo))
        try:
            specs.append(cls(kind=kind, **kw))
        except (TypeError, ValueError) as exc:
            raise SpecError(str(exc), path=path) from None
    return specs


def load_experiment_spec(path) -> dict:
    """Read and validate an experiment file; returns run settings and the expanded specs."""
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise SpecError(f"invalid YAML: {exc}", path="") from None
    if not isinstance(doc, dict):
        raise SpecError("top level must be a mapping", path="")
    extra = set(doc) - _RUN_KEYS
    if extra:
        key = sorted(extra)[0]
        raise SpecError(f"unknown field '{key}'", path=key)
    tests = _need(doc, "tests", "")
    if not isinstance(tests, list) or not tests:
        raise SpecError("at least one test is required", path="tests")
    for i, t in enumerate(tests):
        if t not in TESTS:
            raise SpecError(f"unknown test {t!r}; expected one of {TESTS}", path=f"tests[{i}]")
    seed = _need(doc, "seed", "")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise SpecError("seed must be a non-negative integer", path="seed")
    P = doc.get("P", 100)
    if not isinstance(P, int) or P < 1:
        raise SpecError("P must be a positive integer", path="P")
    n_sim = doc.get("n_sim", 500)
    if not isinstance(n_sim, int) or n_sim < 100:
        raise SpecError("n_sim must be an integer >= 100", path="n_sim")
    alpha = doc.get("alpha", 0.05)
    if not isinstance(alpha, (int, float)) or not 0 < alpha < 1:
        raise SpecError("alpha must lie in (0, 1)", path="alpha")
    blocks = _need(doc, "experiments", "")
    if not isinstance(blocks, list) or not blocks:
        raise SpecError("at least one experiment block is required", path="experiments")
    specs = []
    for i, block in enumerate(blocks):
        specs.extend(_build_specs(block, f"experiments[{i}]"))
    return dict(tests=tuple(tests), seed=seed, P=P, n_sim=n_sim, alpha=float(alpha), specs=specs)


def _resolve_spec_path(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    bundled = resources.files("lmhomog") / "specs" / name
    if bundled.is_file():
        return Path(str(bundled))
    raise SpecError(f"spec file not found: {name}", path="")


def cmd_experiment(args) -> int:
    try:
        cfg = load_experiment_spec(_resolve_spec_path(args.spec))
    except (SpecError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    P = args.P or cfg["P"]
    n_sim = args.nsim or cfg["n_sim"]
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for idx, spec in enumerate(cfg["specs"]):
        res = run_experiment(
            spec,
            cfg["tests"],
            P=P,
            n_sim=n_sim,
            alpha=cfg["alpha"],
            seed=seed_sequence(cfg["seed"], idx),
            threads=args.threads,
        )
        results.append(res)
        if not args.quiet:
            rates = " ".join(f"{t}={100 * res.rate(t):.1f}" for t in res.tests)
            print(f"[{idx + 1}/{len(cfg['specs'])}] {spec.kind} N={spec.n_sites}: {rates}", file=sys.stderr)
    write_rate_table(results, out / "rates.csv")
    write_timing_table(results, out / "timing.csv")
    write_json(results, out / "results.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmhomog", description="L-moment homogeneity tests for regional frequency analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="test one region read from a CSV file")
    t.add_argument("input", help="long-format CSV: site,var1[,var2,...]")
    t.add_argument("--method", choices=("hw",) + METHODS, default="m")
    t.add_argument("--nsim", type=int, default=DEFAULT_NSIM, help="number of simulated regions (default: %(default)s)")
    t.add_argument("--alpha", type=float, default=0.05, help="significance level (default: %(default)s)")
    t.add_argument("--seed", type=int, required=True, help="master random seed")
    t.add_argument("--columns", type=_split, default=[], help="comma-separated variables to use")
    t.add_argument("--exclude-sites", type=_split, default=[], help="comma-separated site ids to drop")
    t.add_argument("--output", help="report path (default: stdout)")
    t.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    t.set_defaults(func=cmd_test)

    e = sub.add_parser("experiment", help="run a simulation study from a YAML spec")
    e.add_argument("spec", help="spec file path or the name of a bundled spec")
    e.add_argument("--output", required=True, help="directory for rates.csv, timing.csv and results.json")
    e.add_argument("--P", type=int, default=None, help="override the number of regions per configuration")
    e.add_argument("--nsim", type=int, default=None, help="override the number of simulated regions per test")
    e.add_argument("--threads", type=int, default=1)
    e.add_argument("--quiet", action="store_true")
    e.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", 0) is not None and getattr(args, "seed", 0) < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return EXIT_ERROR
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
