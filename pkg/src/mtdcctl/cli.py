"""Command line interface: ``certify``, ``simulate`` and ``equilibrium``.

Exit codes: 0 success / certified, 1 usage or parse error, 2 negative
analysis outcome (not certified, singular, infeasible, simulation failure).
"""

import argparse
import csv
import dataclasses
import io
import sys

import numpy as np

from . import __version__
from .analysis import (
    certify,
    equilibrium,
    generation_cost_weights,
    generation_optimum,
    objective_gap,
    voltage_optimum,
)
from .config import ConfigError, load_config
from .exceptions import MtdcError, ValidationError
from .model import assemble_reduced
from .sim import MODELS, Scenario, simulate, steady_state_metrics

EXIT_OK, EXIT_USAGE, EXIT_NEGATIVE = 0, 1, 2


def _fmt(x):
    return f"{x + 0.0:.6g}"  # + 0.0 turns -0.0 into 0.0


def _vec(xs):
    return "[" + ", ".join(_fmt(x) for x in xs) + "]"


def csv_header(n):
    cols = ["t"]
    for prefix in ("omega", "V", "eta", "phi", "pgen", "pinj"):
        cols += [f"{prefix}_{i + 1}" for i in range(n)]
    return cols + ["W"]


def write_trajectory_csv(traj, fh):
    """Write ``traj`` as CSV with 17 significant digits.

    ``omega_i`` and ``V_i`` are deviations from their references.
    """
    n = traj.p_gen.shape[1]
    w = traj.w_lyap if traj.w_lyap is not None else np.full(traj.t.size, np.nan)
    data = np.column_stack([traj.t, traj.omega_dev, traj.v_dev, traj.eta, traj.phi, traj.p_gen, traj.p_inj, w])
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(csv_header(n))
    for row in data:
        writer.writerow([f"{x:.17g}" for x in row])


def read_trajectory_csv(fh):
    """Inverse of :func:`write_trajectory_csv`: ``(header, data array)``."""
    reader = csv.reader(fh)
    header = next(reader)
    rows = [[float(x) for x in row] for row in reader]
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


def format_certificate(rep, name=""):
    a1, a2 = rep.proportionality, rep.damping
    lines = [f"config: {name}"] if name else []
    if a1.holds:
        lines.append(f"laplacian proportionality (L_phi = k_phi L_R): holds, k_phi = {_fmt(a1.k_phi)}")
    else:
        lines.append("laplacian proportionality (L_phi = k_phi L_R): fails, Laplacians not proportional")
    if a2.evaluated:
        rel = ">" if a2.holds else "not >"
        verdict = "holds" if a2.holds else "fails"
        lines.append(
            f"damping bound (gamma > k_phi/(4 V_nom)): {verdict}, gamma = {_fmt(rep.gamma)} {rel} {_fmt(a2.bound)}"
        )
        if a2.note:
            lines.append(f"  note: {a2.note}")
    else:
        lines.append("damping bound (gamma > k_phi/(4 V_nom)): not evaluated")
    yn = {True: "yes", False: "no", None: "not evaluated"}
    lines.append(f"Q1 positive definite: {yn[rep.q1_pd]}")
    lines.append(f"Q2 positive definite: {yn[rep.q2_pd]}")
    if not rep.pd_consistent:
        lines.append("  warning: Schur-complement and eigenvalue PD tests disagree")
    lines.append(f"spectral abscissa (reduced): {rep.hurwitz.spectral_abscissa:.6e}")
    lines.append(f"lyapunov path: {'passes' if rep.lyapunov_holds else 'fails'}")
    lines.append(f"direct-hurwitz path: {'passes' if rep.hurwitz.holds else 'fails'}")
    lines.append(f"certified: {'yes (' + rep.method + ')' if rep.certified else 'no'}")
    return "\n".join(lines)


def format_equilibrium(sd, eq):
    fq, gg, vg = objective_gap(eq, sd)
    p_opt = generation_optimum(generation_cost_weights(sd), eq.p_m)
    lines = [
        f"p_m: {_vec(eq.p_m)}",
        f"omega_dev: {_vec(eq.omega_dev)}",
        f"v_dev: {_vec(eq.v_dev)}",
        f"p_gen: {_vec(eq.p_gen_star)}",
        f"p_gen optimum: {_vec(p_opt)}",
        f"p_inj: {_vec(eq.p_inj_star)}",
        f"k2 measured (mean eta): {_fmt(eq.k2)} (eta spread {eq.eta_spread:.3e}, "
        f"{'consensual' if eq.k2_consensual else 'not consensual'})",
    ]
    for key, val in eq.k2_candidates.items():
        lines.append(f"k2 candidate ({key}): {_fmt(val)}")
    try:
        v_opt = voltage_optimum(sd.k_v, eq.p_inj_star / sd.v_nom, sd.v_ref, sd.laplacian_r, tol=1e-8)
        lines.append(f"voltage optimum: {_vec(v_opt)}")
    except MtdcError as exc:
        lines.append(f"voltage optimum: unavailable ({exc})")
    lines += [
        f"1^T K^V v_dev: {eq.kkt_volt_gap:.6e}",
        f"kkt generation gap: {eq.kkt_gen_gap:.6e}",
        f"objective gap: freq {fq:.6e}, gen {gg:.6e}, volt {vg:.6e}",
    ]
    return "\n".join(lines)


def format_metrics(m):
    def st(x):
        return "not reached" if x is None else _fmt(x)

    return "\n".join([
        f"tail start: {_fmt(m.tail_start)} s",
        f"tail omega_dev: {_vec(m.omega_dev)}",
        f"tail V: {_vec(m.v)}",
        f"tail p_gen: {_vec(m.p_gen)}",
        f"tail p_gen total: {_fmt(m.p_gen_total)}, spread: {m.p_gen_spread:.3e}",
        f"settling omega [s]: {', '.join(st(x) for x in m.settling_omega)}",
        f"settling V [s]: {', '.join(st(x) for x in m.settling_v)}",
        f"settling p_gen [s]: {', '.join(st(x) for x in m.settling_p_gen)}",
    ])


def _scenario_with_flags(sc, args):
    sc = sc or Scenario()
    changes = {}
    if args.model is not None:
        changes["model"] = args.model
    if args.t_end is not None:
        changes["t_end"] = args.t_end
    if args.dt_output is not None:
        changes["dt_output"] = args.dt_output
    return dataclasses.replace(sc, **changes) if changes else sc


def cmd_certify(args, out):
    sd, _ = load_config(args.config)
    rep = certify(sd)
    print(format_certificate(rep, args.config), file=out)
    return EXIT_OK if rep.certified else EXIT_NEGATIVE


def cmd_equilibrium(args, out):
    sd, sc = load_config(args.config)
    p_m = sc.final_p_m(sd.p_load) if sc is not None else sd.p_load
    eq = equilibrium(assemble_reduced(sd), p_m)
    print(format_equilibrium(sd, eq), file=out)
    return EXIT_OK


def cmd_simulate(args, out):
    sd, sc = load_config(args.config)
    if sc is None and not any((args.model, args.t_end, args.dt_output)):
        raise ConfigError("no scenario section; simulate needs one or explicit flags", "scenario")
    sc = _scenario_with_flags(sc, args)
    traj = simulate(sd, sc)
    summary = io.StringIO()
    print(f"model: {sc.model}, samples: {traj.t.size}, steps: {traj.n_steps}", file=summary)
    print(format_metrics(steady_state_metrics(traj, sd)), file=summary)
    try:
        eq = equilibrium(assemble_reduced(sd), sc.final_p_m(sd.p_load))
        fq, gg, vg = objective_gap(eq, sd)
        print(f"objective gap: freq {fq:.6e}, gen {gg:.6e}, volt {vg:.6e}", file=summary)
    except MtdcError as exc:
        print(f"objective gap: unavailable ({exc})", file=summary)
    if args.output and args.output != "-":
        with open(args.output, "w", newline="") as fh:
            write_trajectory_csv(traj, fh)
        print(f"wrote {traj.t.size} rows to {args.output}", file=summary)
        print(summary.getvalue(), end="", file=out)
    else:
        write_trajectory_csv(traj, out)
        print(summary.getvalue(), end="", file=sys.stderr)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="mtdcctl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("certify", help="stability certificate of a configuration")
    p.add_argument("config", help="config path, or a builtin name such as testgrid6")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("equilibrium", help="equilibrium and optimality report")
    p.add_argument("config")
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("simulate", help="simulate the configured scenario and write CSV")
    p.add_argument("config")
    p.add_argument("--model", choices=MODELS)
    p.add_argument("--t-end", type=float)
    p.add_argument("--dt-output", type=float)
    p.add_argument("--output", "-o", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MtdcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NEGATIVE


if __name__ == "__main__":
    sys.exit(main())
