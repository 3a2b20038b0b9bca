"""Command-line orchestration: subcommands, artifacts, manifest, determinism.

Subcommands: ground-state, verify, profile, ode, appendix-b, simulate,
analyze.  Every run writes its artifacts plus a manifest.json listing each
emitted file with a content hash; identical config and seed reproduce the
outputs byte for byte.  Failures exit nonzero and leave error.json behind.
"""

import argparse
import hashlib
import json
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import modeqs, modfit, profile as prof, sim
from .config import ConfigError, load_config
from .lab import get_lab


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def write_json(path: Path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj)}")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _finish(out: Path, command: str, cfg, files):
    manifest = {
        "command": command,
        "seed": cfg["seed"],
        "config": cfg.data,
        "files": {name: _sha256(out / name) for name in sorted(files)},
    }
    write_json(out / "manifest.json", manifest)


def _lab_from(cfg):
    rg = cfg.section("radial_grid")
    return get_lab(r_max=float(rg["r_max"]), n=int(rg["n"]))


def _conformal_C0(cfg, model, lab) -> float:
    en = cfg.section("energy")
    if en["E0"] is not None:
        return prof.compute_C0(float(en["E0"]), model, lab)
    return float(en["C0"])


def _expansion_from(cfg, lab):
    model = cfg.model()
    issues = model.validate()
    if issues:
        raise ConfigError([f"kmodel: {msg}" for msg in issues])
    C0 = _conformal_C0(cfg, model, lab)
    return prof.build_expansion(model, C0, lab,
                                eta_star=float(cfg.section("profile")["eta_star"]))


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_ground_state(cfg, out: Path) -> int:
    lab = _lab_from(cfg)
    m = lab.moments
    report = {
        "q0": lab.Q.values[0],
        "massQ": m.massQ,
        "quarticQ": m.quarticQ,
        "ymomQ": m.ymomQ,
        "gradQ": m.gradQ,
        "tail_rate": lab.Q.tail_rate,
        "grid": {"r_max": lab.grid.r_max, "n": lab.grid.n},
    }
    write_json(out / "ground_state.json", report)
    write_csv(out / "ground_state.csv", ["r", "Q"],
              zip(lab.grid.nodes, lab.Q.values))
    _finish(out, "ground-state", cfg, ["ground_state.json", "ground_state.csv"])
    return 0


IDENTITY_THRESHOLD = 1e-7


def cmd_verify(cfg, out: Path) -> int:
    lab = _lab_from(cfg)
    res = lab.ops.identity_residuals()
    m = lab.moments
    res["pohozaev_grad"] = abs(m.gradQ - m.massQ) / m.massQ
    res["pohozaev_quartic"] = abs(m.quarticQ - 2 * m.massQ) / m.quarticQ
    res["nondegeneracy_rho"] = abs(lab.rho_Q - 0.5 * m.ymomQ) / m.ymomQ
    scale = m.quarticQ * np.sqrt(m.ymomQ)
    for j in range(2):
        for l in range(2):
            res[f"cancellation_{j}{l}"] = abs(lab.ops.cancellation_moment(j, l)) / scale
    ok = all(val < IDENTITY_THRESHOLD for val in res.values())
    print(f"{'identity':24s} {'residual':>12s}")
    for name, val in res.items():
        print(f"{name:24s} {val:12.3e}")
    print(f"all under {IDENTITY_THRESHOLD:g}: {ok}")
    write_json(out / "verify.json", {"residuals": res,
                                     "threshold": IDENTITY_THRESHOLD, "pass": ok})
    _finish(out, "verify", cfg, ["verify.json"])
    return 0 if ok else 1


def cmd_profile(cfg, out: Path) -> int:
    lab = _lab_from(cfg)
    exp = _expansion_from(cfg, lab)
    c = exp.constants
    write_json(out / "constants.json", {
        "c0_map": c.c0_map, "beta3": c.beta3, "beta4": c.beta4,
        "d0_form": c.d0_form, "d1_form": c.d1_form, "a1": c.a1,
        "a1_projection": prof.a1_projection(exp.model, lab),
        "C0": exp.C0, "eta_star": exp.eta_star,
    })
    lam_min, lam_max, count = cfg.section("profile")["lam_scan"]
    weight = float(cfg.section("profile")["weight"])
    lams = np.geomspace(float(lam_min), float(lam_max), int(count))
    norms = [exp.residual(prof.conformal_ray(l, exp.C0), weight=weight)["L2w"]
             for l in lams]
    rows = []
    for i, (l, nv) in enumerate(zip(lams, norms)):
        if i == 0:
            slope = np.nan
        else:
            slope = (np.log(norms[i]) - np.log(norms[i - 1])) / (np.log(lams[i]) - np.log(lams[i - 1]))
        rows.append([l, nv, slope])
    write_csv(out / "residual_scan.csv", ["lambda", "normPsi_L2w", "slope_local"], rows)
    _finish(out, "profile", cfg, ["constants.json", "residual_scan.csv"])
    return 0


def cmd_ode(cfg, out: Path) -> int:
    lab = _lab_from(cfg)
    model = cfg.model()
    consts = prof.derive_constants(model, lab)
    C0 = _conformal_C0(cfg, model, lab)
    oc = cfg.section("ode")
    st = modeqs.existence_initial_state(float(oc["t1"]), C0)
    it = cfg.section("integrator")
    tr = modeqs.integrate(st, consts, s_span=(st.s, float(oc["s_end"])),
                          rtol=float(it["rtol"]), atol=float(it["atol"]),
                          lam_min=float(it["lam_min"]), n_points=int(oc["n_points"]),
                          include_beta4=bool(cfg.section("profile")["include_beta4"]),
                          gamma_d1_sign=float(cfg.section("fit")["gamma_d1_sign"]))
    header, rows = tr.csv_rows()
    write_csv(out / "trajectory.csv", header, rows)
    write_json(out / "ode.json", {"C0": C0, "status": tr.status,
                                  "lambda_s_final": tr.lam[-1] * tr.s[-1]})
    _finish(out, "ode", cfg, ["trajectory.csv", "ode.json"])
    return 0


def cmd_appendix_b(cfg, out: Path) -> int:
    ab = cfg.section("appendix_b")
    s_vals = np.asarray(ab["s_values"], dtype=float)
    rows = []
    report = {}
    for varsig in ab["varsig"]:
        system = modeqs.basis(float(varsig))

        def F(s):
            return (s ** -3.0, 0.0)

        Z = modeqs.decaying_solution(system, F, s_vals)
        flow = modeqs.integrate_linear_system(system, F, s_vals[-1], s_vals[0], Z[:, -1])
        Z_ode = flow(s_vals)
        agree = float(np.max(np.abs(Z - Z_ode)))
        bound = modeqs.bound_report(system, F, s_vals)
        report[str(varsig)] = {
            "regime": system.regime,
            "wronskian": system.wronskian,
            "basis_residual": system.homogeneous_residual(np.linspace(2.0, 50.0, 100)),
            "voc_vs_ode": agree,
            "max_bound_ratio": bound["max_ratio"],
        }
        for i, s in enumerate(s_vals):
            rows.append([varsig, s, Z[0, i], Z[1, i], bound["ratios"][i]])
    write_csv(out / "appendix_b.csv", ["varsig", "s", "Z1", "Z2", "bound_ratio"], rows)
    write_json(out / "appendix_b.json", report)
    _finish(out, "appendix-b", cfg, ["appendix_b.csv", "appendix_b.json"])
    return 0


def cmd_simulate(cfg, out: Path) -> int:
    lab = _lab_from(cfg)
    exp = _expansion_from(cfg, lab)
    g2 = cfg.section("grid2d")
    si = cfg.section("sim")
    L, n = float(g2["L"]), int(g2["n"])
    field0 = sim.init_from_profile(exp, exp.C0, 0.0, float(si["t_start"]), L, n)
    x = -L + (2 * L / n) * np.arange(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    k_vals = exp.model.k(np.stack([X, Y], axis=-1))
    cfg_run = sim.SimConfig(
        L=L, n=n, c_dt=float(si["c_dt"]), t_start=float(si["t_start"]),
        t_stop=si["t_stop"], lam_stop=si["lam_stop"], dealias=bool(si["dealias"]),
        splitting_order=int(si["splitting_order"]),
        dt_refresh_every=int(si["dt_refresh_every"]),
        series_stride=int(si["series_stride"]),
        snapshot_stride=int(si["snapshot_stride"]))
    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    counter = {"i": 0}
    snap_files = []

    def sink(field):
        name = f"snap_{counter['i']:06d}.bin"
        sim.write_snapshot(snap_dir / name, field)
        snap_files.append("snapshots/" + name)
        counter["i"] += 1

    result = sim.run(cfg_run, field0, k_vals, lab.moments.gradQ, lab.moments.massQ,
                     snapshot_sink=sink)
    header = list(result.series.keys())
    rows = zip(*[result.series[k] for k in header])
    write_csv(out / "series.csv", header, rows)
    write_json(out / "simulate.json", {"reason": result.reason, "C0": exp.C0,
                                       "steps_recorded": int(result.series["t"].size),
                                       "snapshots": len(snap_files)})
    _finish(out, "simulate", cfg, ["series.csv", "simulate.json"] + snap_files)
    return 0


def cmd_analyze(cfg, out: Path, snapshots_dir=None) -> int:
    lab = _lab_from(cfg)
    exp = _expansion_from(cfg, lab)
    ft = cfg.section("fit")
    grid = modfit.FitGrid(r_max=float(ft["r_max"]), n_r=int(ft["n_r"]),
                          n_theta=int(ft["n_theta"]))
    A = float(ft["A"])
    snap_dir = Path(snapshots_dir) if snapshots_dir else out / "snapshots"
    paths = sorted(snap_dir.glob("snap_*.bin"))
    if not paths:
        raise FileNotFoundError(f"no snapshots under {snap_dir}")
    first = sim.read_snapshot(paths[0])
    st0 = modeqs.existence_initial_state(first.t, exp.C0)
    guess = st0
    rows = []
    k_cache = {}
    for path in paths:
        field = sim.read_snapshot(path)
        try:
            dec = modfit.decompose(field, guess, exp, grid=grid)
        except modfit.NewtonDiverged:
            continue
        guess = dec.params
        p = dec.params
        key = field.n
        if key not in k_cache:
            x = -field.L + field.h * np.arange(field.n)
            X, Y = np.meshgrid(x, x, indexing="ij")
            k_cache[key] = (exp.model.k(np.stack([X, Y], axis=-1)), X, Y)
        k_vals, X, Y = k_cache[key]
        P = prof.ParamPoint(b=p.b, lam=p.lam, beta=p.beta.copy(), alpha=p.alpha.copy())
        wv = prof.physical_field(exp, P, p.gamma)(np.stack([X, Y], axis=-1))
        w_field = sim.ComplexField2D(field.L, wv, field.t)
        I_val = modfit.lyapunov_I(p, field, w_field, A, k_vals)
        vb = modfit.virial_boundary(dec, A, lab.moments.ymomQ)
        rows.append([field.t, p.b, p.lam, p.alpha[0], p.alpha[1], p.beta[0],
                     p.beta[1], p.gamma, dec.eps_l2, dec.eps_h1, p.b / p.lam,
                     I_val, vb])
    write_csv(out / "params.csv",
              ["t", "b", "lambda", "alpha1", "alpha2", "beta1", "beta2", "gamma",
               "eps_L2", "eps_H1", "b_over_lambda", "I_value", "virial_boundary"],
              rows)
    report = {"snapshots_fit": len(rows), "snapshots_total": len(paths)}
    if len(rows) >= 10:
        arr = np.array(rows)
        try:
            fit = modfit.fit_rate(arr[:, 0], arr[:, 2])
            report["fit"] = {"T_est": fit.T_est, "C0_est": fit.C0_est,
                             "window": fit.window, "residual": fit.residual}
        except (ValueError, modfit.NonMonotoneSeries) as err:
            report["fit_error"] = str(err)
    write_json(out / "analyze.json", report)
    _finish(out, "analyze", cfg, ["params.csv", "analyze.json"])
    return 0


# ----------------------------------------------------------------------

COMMANDS = {
    "ground-state": cmd_ground_state,
    "verify": cmd_verify,
    "profile": cmd_profile,
    "ode": cmd_ode,
    "appendix-b": cmd_appendix_b,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlsblow",
        description="numerical laboratory for minimal-mass NLS blow-up with "
                    "an inhomogeneous nonlinearity")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="YAML config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None,
                       help="output directory (default: $NLSBLOW_OUT/<command> or ./out)")
        if name == "profile":
            p.add_argument("--hxx", type=float, default=None)
            p.add_argument("--hxy", type=float, default=None)
            p.add_argument("--hyy", type=float, default=None)
            p.add_argument("--third", type=float, nargs=4, default=None,
                           metavar=("T111", "T112", "T122", "T222"))
            p.add_argument("--k1", type=float, default=None)
            p.add_argument("--lam-scan", type=float, nargs=3, default=None,
                           metavar=("MIN", "MAX", "COUNT"))
        if name == "analyze":
            p.add_argument("--snapshots", default=None,
                           help="snapshot directory (default: <out>/snapshots)")
    return parser


def _apply_overrides(cfg, args):
    if args.seed is not None:
        cfg.data["seed"] = int(args.seed)
    if getattr(args, "hxx", None) is not None or getattr(args, "hyy", None) is not None \
            or getattr(args, "hxy", None) is not None:
        H = cfg.hessian()
        if args.hxx is not None:
            H[0, 0] = args.hxx
        if args.hyy is not None:
            H[1, 1] = args.hyy
        if args.hxy is not None:
            H[0, 1] = H[1, 0] = args.hxy
        cfg.data["kmodel"]["hessian"] = H.tolist()
    if getattr(args, "third", None) is not None:
        cfg.data["kmodel"]["third"] = list(args.third)
    if getattr(args, "k1", None) is not None:
        cfg.data["kmodel"]["k1"] = args.k1
    if getattr(args, "lam_scan", None) is not None:
        cfg.data["profile"]["lam_scan"] = list(args.lam_scan)
    from .config import _validate, ConfigError as CE

    issues = _validate(cfg.data)
    if issues:
        raise CE(issues)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_root = os.environ.get("NLSBLOW_OUT", ".")
    out = Path(args.out) if args.out else Path(out_root) / "out" / args.command
    out.mkdir(parents=True, exist_ok=True)
    try:
        cfg = load_config(args.config)
        _apply_overrides(cfg, args)
        np.random.seed(cfg["seed"])          # determinism for any legacy draws
        if args.command == "analyze":
            return COMMANDS[args.command](cfg, out, snapshots_dir=args.snapshots)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as err:
        record = {"error": "ConfigError", "violations": err.violations}
        write_json(out / "error.json", record)
        print(str(err), file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - the CLI boundary reports everything
        record = {"error": type(err).__name__, "message": str(err),
                  "traceback": traceback.format_exc()}
        write_json(out / "error.json", record)
        print(f"{type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
