"""Command-line entry point.

    bilincontrol <command> --config run.cfg --out results/ [--seed 0] [--threads 1]

The config file is flat `key = value` text (`#` starts a comment).  Results
are written as JSON (records) and CSV (series).  Exit codes: 0 success,
1 numerical failure, 2 configuration error.
"""

import argparse
import hashlib
import json
import os
import shutil
import sys
import tempfile
import time

COMMANDS = ("simulate", "expand", "forms", "moments", "synthesize", "mintime", "sweep")

# key -> (type, default); None default means required
COMMON = {
    "dipole": (str, "x_minus_half"),
    "dipole_poly": (str, ""),
    "dipole_cos": (str, ""),
    "N": (int, 16),
}

SCHEMA = {
    "simulate": {"T": (float, 1.0), "n": (int, 1000), "dt": (float, 1e-4),
                 "control": (str, "zero"), "control_csv": (str, ""), "initial_mode": (int, 1),
                 "record_every": (int, 10)},
    "expand": {"T": (float, 0.4), "n": (int, 400), "v": (str, "sin 9 1"), "w": (str, ""),
               "nu": (str, ""), "eps_grid": (str, ""), "dt": (float, 5e-5)},
    "forms": {"K": (int, 1), "T": (float, 0.6366197723675814), "n": (int, 2000),
              "kind": (str, "q2_tilde"), "control": (str, "v_plus"), "J": (int, 256),
              "series_J": (int, 500)},
    "moments": {"T": (float, 1.0), "n": (int, 2000), "modes": (str, "1,2,3,4,5,6,7,8,9,10,11,12"),
                "targets": (str, "random"), "scale": (float, 1e-2)},
    "synthesize": {"T": (float, 0.6), "z": (str, "0"), "m": (int, 200), "Tmin2": (float, 0.0),
                   "mode": (str, "lambda"), "T1": (float, 0.6), "delta": (float, 1e-3),
                   "max_iter": (int, 10), "tol": (float, 1e-5)},
    "mintime": {"lo": (float, 0.05), "hi": (float, 0.7), "tol": (float, 1e-3), "n": (int, 512),
                "J": (int, 256), "check_grid": (bool, True)},
    "sweep": {"lo": (float, 0.05), "hi": (float, 0.7), "count": (int, 14), "n": (int, 256),
              "J": (int, 256)},
}

TOLERANCE_KEYS = ("tol", "dt")


class ConfigError(ValueError):
    pass


def _convert(typ, key, raw):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw.strip())
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config(text, command):
    schema = dict(COMMON, **SCHEMA[command])
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in schema:
            raise ConfigError(f"unknown key: {key}")
        raw[key] = val
    cfg = {}
    for key, (typ, default) in schema.items():
        cfg[key] = _convert(typ, key, raw[key]) if key in raw else default
    for key in TOLERANCE_KEYS:
        if key in cfg and cfg[key] <= 0:
            raise ConfigError(f"{key} must be positive")
    return cfg


def _dipole(cfg):
    from . import spectral_core as sc
    if cfg["dipole_poly"]:
        poly = [float(x) for x in cfg["dipole_poly"].split(",")]
        cos = []
        if cfg["dipole_cos"]:
            for item in cfg["dipole_cos"].split(","):
                m, c = item.split(":")
                cos.append((int(m), float(c)))
        return sc.custom(poly, cos)
    if cfg["dipole"] not in sc.PRESETS:
        raise ConfigError(f"unknown dipole: {cfg['dipole']}")
    return sc.preset(cfg["dipole"])


def _signal(spec, T, n):
    """'sin 9 1.0; cos 20 0.3; poly 1 2' -> Control (amplitude * basis)."""
    import numpy as np
    from .simulator import Control
    t = np.linspace(0.0, T, n + 1)
    out = np.zeros_like(t)
    for term in filter(None, (s.strip() for s in spec.split(";"))):
        parts = term.split()
        try:
            kind, a, b = parts[0], float(parts[1]), float(parts[2])
        except (IndexError, ValueError):
            raise ConfigError(f"bad signal term: {term!r}") from None
        if kind == "sin":
            out += b * np.sin(a * t)
        elif kind == "cos":
            out += b * np.cos(a * t)
        elif kind == "poly":
            out += b * t ** a
        else:
            raise ConfigError(f"unknown signal kind: {kind}")
    return Control(out, T)


def _complex_list(text):
    try:
        return [complex(s.strip().replace(" ", "")) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad complex list: {text!r}") from None


def _cplx(z):
    return [float(z.real), float(z.imag)]


def _write_csv(path, header, rows):
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) for x in r])


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- commands -------------------------------------------------------------------

def cmd_simulate(cfg, mu, rng, out):
    from . import spectral_core as sc
    from .simulator import Control, SpectralState, propagate
    T, n = cfg["T"], cfg["n"]
    if cfg["control_csv"]:
        u = Control.from_csv(cfg["control_csv"])
    elif cfg["control"] == "zero":
        u = Control.zeros(T, n)
    elif cfg["control"] == "random":
        u = Control(rng.normal(size=n + 1), T)
        u = u.scaled(1.0 / max(u.l2_norm(), 1e-300))
    else:
        u = _signal(cfg["control"], T, n)
    psi0 = SpectralState.eigen(cfg["initial_mode"], cfg["N"])
    traj = propagate(psi0, u, mu, dt=cfg["dt"], record_every=cfg["record_every"])
    traj.to_csv(os.path.join(out, "trajectory.csv"))
    final = traj.final.coeffs
    _write_csv(os.path.join(out, "final_state.csv"), ["k", "re", "im", "abs"],
               [(k + 1, c.real, c.imag, abs(c)) for k, c in enumerate(final)])
    return {"norm_drift": traj.conserved_norm_drift, "final_norm": float(abs(final) @ abs(final)) ** 0.5,
            "h3_norm": sc.sobolev_norm(final, 3), "T": u.T, "grid": u.n, **traj.meta}


def cmd_expand(cfg, mu, rng, out):
    from . import expansion as ex
    T, n, N = cfg["T"], cfg["n"], cfg["N"]
    v = _signal(cfg["v"], T, n)
    w = _signal(cfg["w"], T, n)
    nu = _signal(cfg["nu"], T, n)
    terms = ex.expand(v, w, nu, mu, N)
    rows = [(k, *_cplx(ex.component(terms.Psi_T, k)), *_cplx(ex.component(terms.xi_T, k)),
             *_cplx(ex.component(terms.zeta_T, k))) for k in range(1, N + 1)]
    _write_csv(os.path.join(out, "expansion.csv"),
               ["k", "re_Psi", "im_Psi", "re_xi", "im_xi", "re_zeta", "im_zeta"], rows)
    rec = {"tangency": list(terms.tangency())}
    if cfg["eps_grid"]:
        eps = [float(e) for e in cfg["eps_grid"].split(",")]
        rec["orders"] = ex.order_slopes(mu, v, w, nu, eps, N, cfg["dt"])
    return rec


def cmd_forms(cfg, mu, rng, out):
    from . import control_synthesis as cs
    from . import quadratic_forms as qf
    K, T, n, J = cfg["K"], cfg["T"], cfg["n"], cfg["J"]
    v = cs.v_plus(T, n) if cfg["control"] == "v_plus" else _signal(cfg["control"], T, n)
    kind = cfg["kind"]
    if kind not in ("q2", "q2_tilde", "q_S", "q3"):
        raise ConfigError(f"unknown form kind: {kind}")
    ctrl = v.integral() if kind == "q_S" else v
    rec = qf.form_report(kind, K, T, ctrl, mu, J).to_dict()
    if cfg["control"] == "v_plus" and kind == "q2_tilde" and K == 1:
        rec["series"] = qf.series_q1_positive(mu, cfg["series_J"])
        rec["relative_gap"] = abs(rec["value"] - rec["series"]) / abs(rec["series"])
    return rec


def cmd_moments(cfg, mu, rng, out):
    import numpy as np
    from . import moment_solver as msol
    from . import spectral_core as sc
    modes = sorted(int(k) for k in cfg["modes"].split(","))
    freqs = sc.omega(np.array(modes))
    if cfg["targets"] == "random":
        d = cfg["scale"] * (rng.normal(size=len(modes)) + 1j * rng.normal(size=len(modes)))
        d = np.where(freqs == 0.0, d.real, d)
    else:
        d = np.array(_complex_list(cfg["targets"]))
        if d.size != len(modes):
            raise ConfigError("targets and modes differ in length")
    prob = msol.MomentProblem(tuple(freqs), tuple(d), cfg["T"], cfg["n"])
    v = msol.solve_moments(prob)
    v.to_csv(os.path.join(out, "control.csv"))
    op = msol.MomentOperator(freqs, cfg["T"], cfg["n"])
    return {"residual": msol.moment_residual(v, freqs, d), "l2_norm": v.l2_norm(),
            "gram_condition": op.condition, "modes": modes,
            "targets": [_cplx(x) for x in d]}


def cmd_synthesize(cfg, mu, rng, out):
    import numpy as np
    from . import control_synthesis as cs
    N = cfg["N"]
    Tmin2 = cfg["Tmin2"] or None
    if cfg["mode"] == "fixed_point":
        steer = cs.FixedPointSteer(cfg["T"], cfg["T1"], mu, N, cfg["m"], Tmin2=Tmin2)
        psi_f = cs.target_near_ground(steer.T, cfg["delta"], N, seed=int(rng.integers(2 ** 31)))
        u, rep = steer.run(psi_f, cfg["max_iter"], cfg["tol"])
        u.to_csv(os.path.join(out, "control.csv"))
        return {"T": steer.T, "T1": steer.T1, **rep.to_dict()}
    if cfg["mode"] != "lambda":
        raise ConfigError(f"unknown synthesis mode: {cfg['mode']}")
    z = np.array(_complex_list(cfg["z"]))
    if np.all(z == 0):
        plan = cs.lambda_map(np.zeros(1), cfg["T"], mu, N, cfg["m"])
    else:
        plan = cs.LostDirectionSynthesizer(cfg["T"], mu, N, cfg["m"], Tmin2).plan(z)
    plan.v.to_csv(os.path.join(out, "v.csv"))
    plan.w.to_csv(os.path.join(out, "w.csv"))
    return plan.to_dict()


def cmd_mintime(cfg, mu, rng, out):
    from . import min_time as mt
    n, J = cfg["n"], cfg["J"]
    br = (cfg["lo"], cfg["hi"])
    if cfg["check_grid"]:
        return mt.bracket_report(mu, br, cfg["tol"], n, J=J)
    return {"Tmin1": list(mt.estimate_Tmin1(mu, br, cfg["tol"], n, J=J)),
            "Tmin2": list(mt.estimate_Tmin2(mu, br, cfg["tol"], n, J=J))}


def cmd_sweep(cfg, mu, rng, out):
    import numpy as np
    from . import min_time as mt
    Ts = np.linspace(cfg["lo"], cfg["hi"], cfg["count"])
    rows = mt.sweep(mu, Ts, cfg["n"], J=cfg["J"])
    _write_csv(os.path.join(out, "sweep.csv"), ["T", "lambda_T", "h10_top"], rows)
    return {"rows": len(rows)}


HANDLERS = {"simulate": cmd_simulate, "expand": cmd_expand, "forms": cmd_forms,
            "moments": cmd_moments, "synthesize": cmd_synthesize, "mintime": cmd_mintime,
            "sweep": cmd_sweep}


def _numerical_errors():
    from . import control_synthesis as cs
    from . import min_time as mt
    from . import moment_solver as msol
    from . import simulator as sim
    return (cs.SynthesisError, mt.BracketError, mt.GridError, msol.MomentError,
            sim.StepSizeError, ArithmeticError, RuntimeError)


def run(command, config_text, out_dir, seed=0, threads=1):
    """Run one command; returns the exit code."""
    try:
        cfg = parse_config(config_text, command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(threads))
    import numpy as np
    from .spectral_core import QuadratureError
    try:
        mu = _dipole(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    os.makedirs(out_dir, exist_ok=True)
    work = tempfile.mkdtemp(prefix=".partial-", dir=out_dir)
    rng = np.random.default_rng(seed)
    canon = json.dumps({"command": command, "config": cfg, "seed": seed}, sort_keys=True)
    start = time.perf_counter()
    try:
        payload = HANDLERS[command](cfg, mu, rng, work)
    except ConfigError as exc:
        shutil.rmtree(work, ignore_errors=True)
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (QuadratureError, *_numerical_errors()) as exc:
        shutil.rmtree(work, ignore_errors=True)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        shutil.rmtree(work, ignore_errors=True)
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    record = {"command": command, "config": cfg, "seed": seed,
              "config_hash": hashlib.sha256(canon.encode()).hexdigest(),
              "truncation": {"N": cfg["N"], "dipole": mu.name or "custom"},
              "result": json.loads(json.dumps(payload, default=_jsonable))}
    _write_json(os.path.join(work, "result.json"), record)
    for name in sorted(os.listdir(work)):
        os.replace(os.path.join(work, name), os.path.join(out_dir, name))
    os.rmdir(work)
    # wall time is kept out of result.json so that reruns are byte-identical
    print(f"{command}: done in {time.perf_counter() - start:.2f} s -> {out_dir}", file=sys.stderr)
    return 0


def _jsonable(x):
    import numpy as np
    if isinstance(x, complex):
        return _cplx(x)
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not serializable: {type(x)}")


def main(argv=None):
    ap = argparse.ArgumentParser(prog="bilincontrol", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="flat key = value file")
    ap.add_argument("--out", default="results")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)
    text = ""
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
    return run(args.command, text, args.out, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())
