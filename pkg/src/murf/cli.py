"""Command-line interface: levels, transitions, simulate, diff, fit.

Exit codes: 0 success, 2 usage errors (argparse), 3 configuration/data
errors, 4 numerical failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .asymmetry import FitParams, SolverOptions, difference_spectrum, model_asymmetry
from .config import (
    default_cluster,
    default_fit_params,
    load_bounds,
    load_cluster,
    load_fit_params,
    save_fit_params,
)
from .constants import GAMMA_F19_MHZ_T, GAMMA_MUON_MHZ_T, dipole_coupling_rad_us
from .diffevo import DESettings
from .errors import ConfigError, DataError, MurfError, NumericsError
from .fitkit import FIT_SOLVER, fit_report, run_fit
from .fmuf import (
    FMUF_LAYOUT,
    fmuf_eigensystem,
    levels_vs_field,
    on_resonance_transition,
    transition_table,
)
from .manifest import RunManifest
from .spectra_io import load_spectrum, write_spectrum

EXIT_DATA = 3
EXIT_NUMERIC = 4


def _outdir(args) -> Path:
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest_args(args) -> dict:
    return {k: v for k, v in _manifest_args(args).items() if k != "func"}


def _clusters(args):
    if args.config:
        clusters = load_cluster(args.config)
    else:
        clusters = default_cluster()
    if getattr(args, "subset", None) and args.subset != "full":
        if args.subset == "fmuf":
            clusters = tuple(c.subset(["F1", "F2"]) for c in clusters)
        else:
            clusters = tuple(c.subset(args.subset.split(",")) for c in clusters)
    return clusters


def _write_table(path: Path, header_lines: list[str], rows: list[list[float]], digest: str) -> None:
    lines = [f"# manifest: {digest}"] + header_lines
    for row in rows:
        lines.append(",".join("%.10g" % v for v in row))
    path.write_text("\n".join(lines) + "\n")


def cmd_levels(args) -> int:
    out = _outdir(args)
    clusters = _clusters(args)
    cluster = clusters[0]
    axis = np.array([float(x) for x in args.axis.split(",")])
    axis = axis / np.linalg.norm(axis)
    b_values = np.linspace(args.bmin, args.bmax, args.steps)
    sweep = levels_vs_field(cluster, axis, b_values)
    manifest = RunManifest.create(
        "levels", _manifest_args(args), inputs={"config": args.config} if args.config else {}
    )
    digest = manifest.write(out / "levels.manifest.json")
    # reference dipole frequency for the unit column: nearest-neighbour bond
    r_nn = min(cluster.muon_distances().values())
    omega_d = dipole_coupling_rad_us(GAMMA_MUON_MHZ_T, GAMMA_F19_MHZ_T, r_nn)
    rows = []
    for k, b in enumerate(sweep.b_values):
        for lvl in range(sweep.energies.shape[0]):
            e = sweep.energies[lvl, k]
            rows.append([b, lvl, e, e / omega_d, e / (2 * np.pi) * 1e3])
    _write_table(
        out / "levels.csv",
        [f"# murf levels v1 (omega_D from r={r_nn:.4f} A)",
         "# columns: field_mT,level,energy_rad_us,energy_omega_D,frequency_kHz"],
        rows, digest,
    )
    print(f"wrote {out / 'levels.csv'} ({sweep.energies.shape[0]} levels x {len(b_values)} fields)")
    return 0


def cmd_transitions(args) -> int:
    out = _outdir(args)
    levels = fmuf_eigensystem()
    omega_d = dipole_coupling_rad_us(GAMMA_MUON_MHZ_T, GAMMA_F19_MHZ_T, args.bond)
    table = transition_table(levels, omega_d_rad_us=omega_d)
    manifest = RunManifest.create("transitions", _manifest_args(args))
    digest = manifest.write(out / "transitions.manifest.json")
    rows = [
        [t.from_level + 1, t.to_level + 1, t.frequency, t.frequency_khz, t.element, int(t.allowed)]
        for t in table
    ]
    _write_table(
        out / "transitions.csv",
        [f"# murf transitions v1 (linear equidistant three-spin complex, bond {args.bond} A)",
         "# columns: from_level,to_level,frequency_omega_D,frequency_kHz,drive_element,allowed"],
        rows, digest,
    )
    res = on_resonance_transition(table)
    print(f"wrote {out / 'transitions.csv'}; on-resonance pair at "
          f"{res.frequency:.4f} omega_D = {res.frequency_khz:.1f} kHz")
    return 0


def _solver_from(args) -> SolverOptions:
    return SolverOptions(
        method=args.method,
        substeps_per_period=args.substeps,
        tol=args.tol,
    )


def cmd_simulate(args) -> int:
    out = _outdir(args)
    clusters = _clusters(args)
    if args.params:
        params, f0_default = load_fit_params(args.params)
    else:
        params, f0_default = default_fit_params()
    f0 = args.f0 if args.f0 is not None else f0_default
    times = np.arange(0.0, args.tmax + 0.5 * args.dt, args.dt)
    if len(times) < 1 or times[-1] > args.tmax + 1e-12:
        times = times[times <= args.tmax + 1e-12]
    rf_on = args.rf == "on"
    spectrum = model_asymmetry(params, f0, rf_on, clusters, times, _solver_from(args))
    manifest = RunManifest.create(
        "simulate", _manifest_args(args), seed=args.seed,
        inputs={k: v for k, v in (("config", args.config), ("params", args.params)) if v},
    )
    digest = manifest.write(out / f"{args.tag}.manifest.json")
    write_spectrum(spectrum, out / f"{args.tag}.csv", manifest_digest=digest)
    print(f"wrote {out / (args.tag + '.csv')} ({len(times)} points, RF {args.rf}, f0={f0} kHz)")
    return 0


def cmd_diff(args) -> int:
    out = _outdir(args)
    a_on = load_spectrum(args.spectrum_on, sigma_default=args.sigma_default)
    a_off = load_spectrum(args.spectrum_off, sigma_default=args.sigma_default)
    diff = difference_spectrum(a_on, a_off)
    manifest = RunManifest.create(
        "diff", _manifest_args(args),
        inputs={"on": args.spectrum_on, "off": args.spectrum_off},
    )
    digest = manifest.write(out / "difference.manifest.json")
    write_spectrum(diff, out / "difference.csv", manifest_digest=digest)
    print(f"wrote {out / 'difference.csv'}")
    return 0


def cmd_fit(args) -> int:
    out = _outdir(args)
    clusters = _clusters(args)
    data_on = load_spectrum(args.data_on, alpha=args.alpha, sigma_default=args.sigma_default)
    data_off = load_spectrum(args.data_off, alpha=args.alpha, sigma_default=args.sigma_default)
    bounds = load_bounds(args.bounds)
    settings = DESettings(
        population=args.population,
        max_generations=args.generations,
        f=args.de_f,
        cr=args.de_cr,
        seed=args.seed,
        workers=args.workers,
        stall_generations=args.stall,
    )
    solver = FIT_SOLVER if args.fast else SolverOptions(method=args.method, substeps_per_period=args.substeps)
    outcome = run_fit(clusters, data_on, data_off, args.f0, bounds, settings,
                      cutoff_us=args.cutoff, solver=solver)
    manifest = RunManifest.create(
        "fit", _manifest_args(args), seed=args.seed,
        inputs={k: v for k, v in (("config", args.config), ("on", args.data_on),
                                  ("off", args.data_off), ("bounds", args.bounds)) if v},
    )
    digest = manifest.write(out / "fit.manifest.json")
    report = fit_report(outcome.params, args.f0, outcome.chi2_red, clusters)
    (out / "fit_report.csv").write_text(f"# manifest: {digest}\n" + report)
    save_fit_params(outcome.params, args.f0, out / "fit_params.yaml")
    np.savetxt(out / "fit_history.csv", outcome.de.history, fmt="%.8g",
               header=f"manifest: {digest}\nbest chi2_red per generation", comments="# ")
    print(report)
    print(f"wrote {out / 'fit_report.csv'} (chi2_red={outcome.chi2_red:.4f}, "
          f"{outcome.de.n_evaluations} evaluations)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="murf", description=__doc__)
    p.add_argument("--version", action="version", version=f"murf {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, subset=True):
        sp.add_argument("--config", help="cluster YAML (default: packaged LiYF4 cluster)")
        sp.add_argument("--outdir", default="murf_out", help="output directory")
        sp.add_argument("--seed", type=int, default=1, help="RNG seed")
        if subset:
            sp.add_argument("--subset", default="full",
                            help="'full', 'fmuf' or comma-separated site labels")

    sp = sub.add_parser("levels", help="energy levels vs applied field")
    common(sp)
    sp.add_argument("--axis", default="0,0,1", help="field axis (lab frame, comma separated)")
    sp.add_argument("--bmin", type=float, default=-1.0, help="first field value (mT)")
    sp.add_argument("--bmax", type=float, default=1.0, help="last field value (mT)")
    sp.add_argument("--steps", type=int, default=81)
    sp.set_defaults(func=cmd_levels)

    sp = sub.add_parser("transitions", help="drive-coupled transition table of the three-spin complex")
    common(sp, subset=False)
    sp.add_argument("--bond", type=float, default=1.2, help="reference bond length (angstrom)")
    sp.set_defaults(func=cmd_transitions)

    sp = sub.add_parser("simulate", help="model asymmetry spectrum")
    common(sp)
    sp.add_argument("--params", help="fit-parameter YAML (default: packaged reference set)")
    sp.add_argument("--f0", type=float, default=None, help="nominal RF frequency (kHz)")
    sp.add_argument("--rf", choices=("on", "off"), default="on")
    sp.add_argument("--tmax", type=float, default=15.0, help="end time (us)")
    sp.add_argument("--dt", type=float, default=0.016, help="output spacing (us)")
    sp.add_argument("--method", default="expm", choices=("expm", "split", "rk"))
    sp.add_argument("--substeps", type=int, default=40, help="drive substeps per period")
    sp.add_argument("--tol", type=float, default=None, help="target observable accuracy")
    sp.add_argument("--tag", default="spectrum", help="output file stem")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("diff", help="difference of two spectra (on - off)")
    sp.add_argument("spectrum_on")
    sp.add_argument("spectrum_off")
    sp.add_argument("--sigma-default", type=float, default=None)
    sp.add_argument("--outdir", default="murf_out")
    sp.set_defaults(func=cmd_diff)

    sp = sub.add_parser("fit", help="differential-evolution fit of RF-on/off spectra")
    common(sp)
    sp.add_argument("--data-on", required=True)
    sp.add_argument("--data-off", required=True)
    sp.add_argument("--f0", type=float, required=True, help="nominal RF frequency (kHz)")
    sp.add_argument("--alpha", type=float, default=None, help="detector balance (counts format)")
    sp.add_argument("--sigma-default", type=float, default=None)
    sp.add_argument("--bounds", help="YAML overriding default parameter bounds")
    sp.add_argument("--cutoff", type=float, default=12.5, help="chi^2 time cutoff (us)")
    sp.add_argument("--population", type=int, default=24)
    sp.add_argument("--generations", type=int, default=60)
    sp.add_argument("--de-f", type=float, default=0.8)
    sp.add_argument("--de-cr", type=float, default=0.9)
    sp.add_argument("--stall", type=int, default=None, help="stop after N stalled generations")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--fast", action="store_true", default=True,
                    help="single-precision split propagator (default)")
    sp.add_argument("--no-fast", dest="fast", action="store_false")
    sp.add_argument("--method", default="expm", choices=("expm", "split", "rk"))
    sp.add_argument("--substeps", type=int, default=40)
    sp.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MurfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
