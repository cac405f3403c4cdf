"""Command line entry point: ``rayfem run|validate|table3|scaling``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import replace

import numpy as np
import yaml

from .config import ConfigError, load_config, parse_config
from .linsolve.direct import SingularMatrixError
from .mesh import MeshError, write_mesh
from .nmla import NMLAError
from .pipeline import iter_ray_fem
from .results import ResultTable, failed_row, provenance, row_from_result, write_results
from .scenarios import InteriorSource, make_scenario

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
NUMERICAL_ERRORS = (SingularMatrixError, NMLAError, MeshError, FloatingPointError, np.linalg.LinAlgError, ArithmeticError)

log = logging.getLogger("rayfem")

__all__ = ["main", "run_experiment", "build_scenario"]


def build_scenario(config):
    scen = make_scenario(config.kind, config.source)
    if isinstance(scen, InteriorSource):
        scen = replace(scen, pml_wavelengths=config.pml_wavelengths, reflection=config.pml_reflection)
    return scen


def _dump(outdir, kind, freq, field, rays):
    d = os.path.join(outdir, "fields")
    os.makedirs(d, exist_ok=True)
    stem = os.path.join(d, f"{kind}_f{freq:g}")
    write_mesh(field.mesh, stem + "_mesh.txt")
    rays.write(stem + "_rays.txt")
    np.savez_compressed(stem + "_field.npz", nodes=field.mesh.nodes, values=field.nodal_values())


def run_experiment(config, dump_fields=False, outdir=None):
    """Run every frequency of ``config``; failures are recorded in their row and the sweep goes on."""
    outdir = config.output_dir if outdir is None else outdir
    table = ResultTable(include_timings=config.include_timings, provenance=provenance(config))
    np.random.seed(config.seed)
    scenario = build_scenario(config)
    for freq in config.frequencies:
        omega = 2 * math.pi * freq
        log.info("%s: omega/2pi = %g", config.kind, freq)
        try:
            field, rays, result = iter_ray_fem(scenario, omega, config.pipeline)
        except NUMERICAL_ERRORS as exc:
            log.error("frequency %g failed: %s", freq, exc)
            table.rows.append(failed_row(config.kind, freq, f"failed: {type(exc).__name__}: {exc}"))
            continue
        table.rows.append(row_from_result(config.kind, result))
        if dump_fields:
            _dump(outdir, config.kind, freq, field, rays)
    return table


def _summary(table):
    cols = ("frequency", "ndof", "angle_error_low", "error_rel_low", "error_rel", "error_rel_exact_rays", "niter", "iterations_high")
    print(" ".join(f"{c:>20s}" for c in cols))
    for r in table.rows:
        print(" ".join(f"{r[c]:>20.6g}" if isinstance(r[c], float) else f"{r[c]!s:>20}" for c in cols))


def _execute(config, args):
    table = run_experiment(config, args.dump_fields, args.out)
    outdir = args.out or config.output_dir
    paths = write_results(table, outdir)
    _summary(table)
    print(f"wrote {paths[0]} and {paths[1]}")
    failed = [r for r in table.rows if str(r["status"]).startswith("failed")]
    return EXIT_NUMERICAL if failed else EXIT_OK


def _preset(data, args):
    if args.freqs is not None:
        data["frequencies"] = args.freqs
    return parse_config(data)


def _parser():
    p = argparse.ArgumentParser(prog="rayfem", description="Ray-enriched FEM for high-frequency Helmholtz problems.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logging")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--out", default=None, help="output directory (overrides the config)")
        sp.add_argument("--dump-fields", action="store_true", help="write meshes, ray fields and wave fields")

    r = sub.add_parser("run", help="run an experiment from a YAML config")
    r.add_argument("config")
    common(r)
    v = sub.add_parser("validate", help="check a config and print the resolved values")
    v.add_argument("config")
    t = sub.add_parser("table3", help="one-source error table with exact and learned rays")
    t.add_argument("--freqs", type=float, nargs="+", default=None)
    common(t)
    s = sub.add_parser("scaling", help="solve-time and iteration sweep with the polarized-traces solver")
    s.add_argument("--medium", choices=("homogeneous", "gaussian"), default="homogeneous")
    s.add_argument("--freqs", type=float, nargs="+", default=None)
    common(s)
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "validate":
            cfg = load_config(args.config)
            print(yaml.safe_dump(cfg.resolved, sort_keys=True), end="")
            print(f"config_hash: {cfg.config_hash()}")
            return EXIT_OK
        if args.verb == "run":
            cfg = load_config(args.config)
        elif args.verb == "table3":
            data = {"kind": "one-source", "frequencies": [20, 40], "pipeline": {"exact_rays": True}}
            cfg = _preset(data, args)
        else:
            kind = "scaling-sweep" if args.medium == "homogeneous" else "interior-source-gaussian"
            data = {"kind": kind, "frequencies": [10, 20, 40, 80], "solver": "polarized-traces", "pipeline": {"max_iter": 0}}
            cfg = _preset(data, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _execute(cfg, args)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
