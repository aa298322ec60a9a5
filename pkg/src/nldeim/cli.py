"""``nldeim`` command-line interface.

Coordinates in every JSON/CSV output are 1-based (``x1 .. xn``); the
library itself is 0-based.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import datasets, evaluation, tangent
from .branching import branch_bases, branch_separators, find_branches, select_branch_coords
from .errors import ConfigError, NldeimError
from .io import load_matrix, load_patchset, save_matrix, save_patchset
from .simpqr import PatchSet, SimPqrConfig, check_guarantees, gamma_path, simpqr

logger = logging.getLogger("nldeim")

SCHEMA_VERSION = 1

_num = {"type": "number"}
_int = {"type": "integer"}
_str = {"type": "string"}
_coords = {"type": "array", "items": {"type": "integer", "minimum": 1}}
_gamma = {"anyOf": [{"type": "number"}, {"enum": ["auto", "path"]}]}

# keys accepted in --config files, per subcommand; flags use the same names
CONFIG_SCHEMAS = {
    "generate": {
        "dataset": {"enum": ["spiral", "cylinder", "surface10", "burgers"]},
        "m": _int, "seed": _int, "out": _str, "nx": _int, "chis": _int,
        "nu": _num, "t_final": _num, "n_snap": _int,
    },
    "tangents": {
        "input": _str, "out": _str,
        "method": {"enum": ["analytic", "eigenmaps", "grid", "local-pca"]},
        "k": _int, "alpha": _num, "r": _int, "r_prime": _int,
        "quality_min": _num, "patches": _int, "seed": _int,
    },
    "select": {
        "patches": _str, "points": _str, "method": {"enum": ["nldeim", "deim"]},
        "gamma": _gamma, "eps": _num, "r": _int,
        "centering": {"enum": ["mean", "none"]}, "out": _str, "allow_partial": {"type": "boolean"},
    },
    "gamma-path": {"patches": _str, "eps": _num, "out": _str, "csv": _str},
    "branch": {
        "points": _str, "p_i": _coords, "rho": _num, "gap_factor": _num,
        "mode": {"enum": ["bases", "vectors"]}, "gamma": _gamma, "eps": _num, "out": _str,
    },
    "eval": {
        "what": {"enum": ["amplification", "knn", "pod"]},
        "patches": _str, "points": _str, "test": _str, "coords": _coords,
        "k": _int, "centering": {"enum": ["mean", "none"]}, "out": _str, "csv": _str,
    },
    "verify": {
        "patches": _str, "random": _int, "seed": _int, "gamma": _gamma,
        "eps": _num, "eta": _num, "nu": _num, "out": _str,
    },
}


def config_schema(command):
    props = dict(CONFIG_SCHEMAS[command])
    props["schema_version"] = {"const": SCHEMA_VERSION}
    props["threads"] = {"type": "integer", "minimum": 1}
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "type": "object",
        "properties": props,
        "additionalProperties": False,
    }


def load_config(path, command):
    import jsonschema

    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("config", str(exc)) from exc
    try:
        jsonschema.validate(data, config_schema(command))
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path)
        if not where and exc.validator == "additionalProperties":
            extra = sorted(set(data) - set(config_schema(command)["properties"]))
            where = extra[0] if extra else ""
        raise ConfigError(f"config.{where}" if where else "config", exc.message) from exc
    return data


def _jsonable(obj):
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return "nan"
        return obj
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return _jsonable(float(obj))
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(payload, out=None):
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def one_based(idx):
    return [int(i) + 1 for i in idx]


def zero_based(idx, n=None, field="coords"):
    out = []
    for i in idx:
        if i < 1 or (n is not None and i > n):
            raise ConfigError(f"config.{field}", f"coordinate {i} out of range 1..{n}")
        out.append(int(i) - 1)
    return out


def _parse_coords(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _parse_gamma(text):
    if text in ("auto", "path"):
        return text
    try:
        return float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"gamma must be a number, 'auto' or 'path'") from exc


# -- subcommands ---------------------------------------------------------------


def cmd_generate(o):
    out = Path(o.out)
    out.mkdir(parents=True, exist_ok=True)
    if o.dataset == "burgers":
        chis = np.linspace(0.1, 0.5, o.chis)
        runs = datasets.burgers_grid(o.nu, chis, o.nx, o.t_final, o.n_snap)
        snaps = np.stack([r.snapshots for r in runs], axis=1)  # n_t x n_chi x n_x
        save_matrix(out / "snapshots.nldm", snaps.reshape(-1, o.nx))
        tt, cc = np.meshgrid(runs[0].times, chis, indexing="ij")
        save_matrix(out / "params.nldm", np.column_stack([tt.ravel(), cc.ravel()]))
        manifest = {
            "schema_version": SCHEMA_VERSION, "dataset": "burgers", "nu": o.nu,
            "n_x": o.nx, "n_t": int(snaps.shape[0]), "n_chi": int(snaps.shape[1]),
            "t_final": o.t_final, "layout": "rows ordered (t, chi), chi fastest",
            "snapshots": "snapshots.nldm", "params": "params.nldm",
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return {"written": sorted(p.name for p in out.iterdir())}
    sample = datasets.GENERATORS[o.dataset](o.m, o.seed)
    m, n, r = sample.tangents.shape
    save_matrix(out / "points.nldm", sample.points)
    save_matrix(out / "tangents.nldm", sample.tangents.reshape(m, n * r))
    save_matrix(out / "params.nldm", sample.params)
    return {"written": ["params.nldm", "points.nldm", "tangents.nldm"], "m": m, "n": n, "r": r}


def _load_burgers(directory):
    d = Path(directory)
    man = json.loads((d / "manifest.json").read_text())
    snaps = load_matrix(d / man["snapshots"])
    return snaps.reshape(man["n_t"], man["n_chi"], man["n_x"]), man


def cmd_tangents(o):
    src = Path(o.input)
    rng = np.random.default_rng(o.seed)
    dropped = []
    if o.method == "grid":
        grid, _ = _load_burgers(src)
        pats, dropped = tangent.tangent_from_grid(grid)
    else:
        pts = load_matrix(src / "points.nldm")
        if o.method == "analytic":
            tan = load_matrix(src / "tangents.nldm")
            m, n = pts.shape
            tan = tan.reshape(m, n, -1)
            pats = [tangent.TangentPatch(pts[i], tan[i], 1.0, i) for i in range(m)]
        elif o.method == "eigenmaps":
            g = tangent.build_graph(pts, o.k, o.alpha)
            model = tangent.laplacian_eigs(g, o.r_prime or o.r + 3)
            pats, dropped = tangent.tangent_from_eigenmaps(model, pts, o.r, o.quality_min)
        else:
            pats = [tangent.tangent_from_local_pca(pts, i, o.r, k=o.k) for i in range(pts.shape[0])]
    if o.patches and o.patches < len(pats):
        keep = np.sort(rng.choice(len(pats), o.patches, replace=False))
        pats = [pats[i] for i in keep]
    ps = tangent.to_patchset(pats)
    save_patchset(o.out, ps, {"source_indices": [p.index for p in pats], "method": o.method})
    return {"K": ps.K, "n": ps.n, "r": ps.r, "dropped": len(dropped)}


def _resolve_gamma(gamma, K):
    if gamma == "auto":
        return 1.0 / K
    if isinstance(gamma, str):
        raise ConfigError("config.gamma", f"unsupported value {gamma!r} here")
    if not (gamma > 0 and math.isfinite(gamma)):
        raise ConfigError("config.gamma", f"must be > 0, got {gamma}")
    return float(gamma)


def _check_eps(eps):
    if not (eps >= 0 and math.isfinite(eps)):
        raise ConfigError("config.eps", f"must be >= 0, got {eps}")
    return eps


def result_payload(res, patches):
    amp = evaluation.amplification(patches, res.pivots)
    return {
        "schema_version": SCHEMA_VERSION,
        "index_base": 1,
        "gamma": res.gamma,
        "eps": res.eps,
        "K": len(res.patch_pivots),
        "pivots": one_based(res.pivots),
        "pivots_sorted": sorted(one_based(res.pivots)),
        "complement": one_based(res.complement),
        "patch_pivots": [one_based(p) for p in res.patch_pivots],
        "gamma_minus": res.gamma_minus,
        "gamma_plus": res.gamma_plus,
        "patch_volumes": res.patch_volumes,
        "partial_patches": list(res.partial_patches),
        "stages": [
            {**s.to_dict(), "j_star": s.j_star + 1} for s in res.stages
        ],
        "amplification": amp.summary,
    }


def cmd_select(o):
    if o.method == "deim":
        if o.points is None:
            raise ConfigError("config.points", "required for --method deim")
        pts = load_matrix(o.points)
        if o.r is None or o.r < 1:
            raise ConfigError("config.r", "a positive mode count is required for --method deim")
        p, modes = evaluation.deim_baseline(pts, o.r, o.centering)
        return {
            "schema_version": SCHEMA_VERSION, "index_base": 1, "method": "deim",
            "r": o.r, "centering": o.centering, "pivots": one_based(p),
            "pivots_sorted": sorted(one_based(p)),
        }
    if o.patches is None:
        raise ConfigError("config.patches", "required for --method nldeim")
    eps = _check_eps(o.eps)
    if o.gamma == "path":
        raise ConfigError("config.gamma", "use the gamma-path subcommand for the full sweep")
    if not isinstance(o.gamma, str):
        _resolve_gamma(o.gamma, 1)
    ps = load_patchset(o.patches)
    gamma = _resolve_gamma(o.gamma, ps.K)
    res = simpqr(ps, SimPqrConfig(gamma, eps, o.allow_partial))
    return {"method": "nldeim", **result_payload(res, ps)}


def cmd_gamma_path(o):
    eps = _check_eps(o.eps)
    ps = load_patchset(o.patches)
    path = gamma_path(ps, eps)
    rows = []
    for seg in path:
        amp = evaluation.amplification(ps, seg.result.pivots).summary
        rows.append({
            "gamma_lo": seg.gamma_lo, "gamma_hi": seg.gamma_hi, "gamma": seg.gamma,
            "n_coords": len(seg.result.pivots), "coords": sorted(one_based(seg.result.pivots)),
            "n_stages": len(seg.result.stages),
            "max_amplification": amp["max"], "mean_amplification": amp["mean"],
        })
    if o.csv:
        with open(o.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["gamma_lo", "gamma_hi", "n_coords", "max_amplification",
                        "mean_amplification", "coords"])
            for r in rows:
                w.writerow([repr(r["gamma_lo"]), repr(r["gamma_hi"]), r["n_coords"],
                            repr(r["max_amplification"]), repr(r["mean_amplification"]),
                            " ".join(map(str, r["coords"]))])
    return {"schema_version": SCHEMA_VERSION, "index_base": 1, "eps": eps,
            "K": ps.K, "segments": rows}


def cmd_branch(o):
    pts = load_matrix(o.points)
    n = pts.shape[1]
    if not o.p_i:
        raise ConfigError("config.p_i", "immersion coordinates are required")
    p_i = zero_based(o.p_i, n, "p_i")
    if not o.rho > 0:
        raise ConfigError("config.rho", "must be > 0")
    eps = _check_eps(o.eps)
    nh = find_branches(pts, p_i, o.rho, o.gap_factor)
    bset = branch_bases(nh, pts, o.rho) if o.mode == "bases" else branch_separators(nh)
    multi = sum(h.n_clusters > 1 for h in nh)
    if len(bset) == 0:
        p_b = ()
    else:
        K = len(bset)
        cfg = SimPqrConfig(_resolve_gamma(o.gamma, K), eps)
        p_b = select_branch_coords(bset, p_i, cfg)
    return {
        "schema_version": SCHEMA_VERSION, "index_base": 1, "mode": o.mode, "rho": o.rho,
        "p_i": sorted(one_based(p_i)), "p_b": sorted(one_based(p_b)),
        "p_e": sorted(one_based(set(p_i) | set(p_b))),
        "neighborhoods": len(nh), "multi_branch_neighborhoods": int(multi),
        "branch_items": len(bset),
    }


def cmd_eval(o):
    if o.what == "amplification":
        ps = load_patchset(o.patches)
        coords = zero_based(o.coords, ps.n) if o.coords else list(range(ps.n))
        rep = evaluation.amplification(ps, coords)
        if o.csv:
            with open(o.csv, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["patch", "amplification"])
                for k, v in enumerate(rep.per_patch):
                    w.writerow([k, repr(float(v))])
        return {"schema_version": SCHEMA_VERSION, "index_base": 1, "coords": one_based(coords),
                "summary": rep.summary, "singular_patches": int(rep.singular.sum())}
    if o.what == "knn":
        train = load_matrix(o.points)
        test = load_matrix(o.test)
        coords = zero_based(o.coords, train.shape[1])
        dist = evaluation.knn_reconstruct(train, coords, test, o.k)
        if o.csv:
            with open(o.csv, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["sample", "relative_error"])
                for i, v in enumerate(dist.relative_errors):
                    w.writerow([i, repr(float(v))])
        return {"schema_version": SCHEMA_VERSION, "index_base": 1, "coords": one_based(coords),
                "k": o.k, "summary": dist.summary}
    pts = load_matrix(o.points)
    fr = evaluation.pod_spectrum(pts, o.centering)
    return {"schema_version": SCHEMA_VERSION, "cumulative_variance": fr,
            "modes_for_99": int(np.searchsorted(fr, 0.99) + 1)}


def random_patchset(rng, n, r, K):
    bases = [np.linalg.qr(rng.standard_normal((n, r)))[0] for _ in range(K)]
    return PatchSet(tuple(bases))


def cmd_verify(o):
    eps = _check_eps(o.eps)
    if o.patches:
        sets = [load_patchset(o.patches)]
    else:
        rng = np.random.default_rng(o.seed)
        sets = []
        for _ in range(o.random):
            n = int(rng.integers(2, 21))
            r = int(rng.integers(1, min(4, n) + 1))
            K = int(rng.integers(1, 31))
            sets.append(random_patchset(rng, n, r, K))
    reports = []
    for ps in sets:
        K = ps.K
        gammas = {
            "gamma_simultaneity": 1.0 / K,
            "gamma_robustness": 2.0 * (K - 1) / K if K > 1 else 1.0,
        }
        if o.gamma not in (None, "auto", "path"):
            gammas["user"] = _resolve_gamma(o.gamma, K)
        entry = {"K": K, "n": ps.n}
        for label, g in gammas.items():
            cfg = SimPqrConfig(g, eps)
            rep = check_guarantees(simpqr(ps, cfg), cfg, ps, o.eta, o.nu)
            entry[label] = {k: v for k, v in rep.items()}
        last = gamma_path(ps, eps)[-1]
        cfg = SimPqrConfig(last.midpoint(), eps)
        entry["pqr_equivalence"] = check_guarantees(last.result, cfg, ps, o.eta, o.nu)
        reports.append(entry)
    ok = all(all(v["ok"] for k, v in e.items() if isinstance(v, dict)) for e in reports)
    return {"schema_version": SCHEMA_VERSION, "ok": ok, "sets": reports}


COMMANDS = {
    "generate": cmd_generate,
    "tangents": cmd_tangents,
    "select": cmd_select,
    "gamma-path": cmd_gamma_path,
    "branch": cmd_branch,
    "eval": cmd_eval,
    "verify": cmd_verify,
}


def build_parser():
    p = argparse.ArgumentParser(prog="nldeim", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON file whose keys mirror this subcommand's flags")
    p.add_argument("--threads", type=int, default=None,
                   help="cap on BLAS worker threads (env NLDEIM_THREADS)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS  # so config values are not clobbered by defaults

    g = sub.add_parser("generate", help="sample a toy manifold or a Burgers grid")
    g.add_argument("dataset", nargs="?", default=S, choices=["spiral", "cylinder", "surface10", "burgers"])
    g.add_argument("--m", type=int, default=S)
    g.add_argument("--seed", type=int, default=S)
    g.add_argument("--out", default=S)
    g.add_argument("--nx", type=int, default=S)
    g.add_argument("--chis", type=int, default=S, help="number of evenly spaced widths")
    g.add_argument("--nu", type=float, default=S)
    g.add_argument("--t-final", dest="t_final", type=float, default=S)
    g.add_argument("--n-snap", dest="n_snap", type=int, default=S)

    t = sub.add_parser("tangents", help="estimate tangent patches")
    t.add_argument("--input", default=S)
    t.add_argument("--out", default=S)
    t.add_argument("--method", default=S, choices=["analytic", "eigenmaps", "grid", "local-pca"])
    t.add_argument("--k", type=int, default=S)
    t.add_argument("--alpha", type=float, default=S)
    t.add_argument("--r", type=int, default=S)
    t.add_argument("--r-prime", dest="r_prime", type=int, default=S)
    t.add_argument("--quality-min", dest="quality_min", type=float, default=S)
    t.add_argument("--patches", type=int, default=S, help="random subset size")
    t.add_argument("--seed", type=int, default=S)

    s = sub.add_parser("select", help="select coordinates with SimPQR or DEIM")
    s.add_argument("--patches", default=S)
    s.add_argument("--points", default=S)
    s.add_argument("--method", default=S, choices=["nldeim", "deim"])
    s.add_argument("--gamma", type=_parse_gamma, default=S)
    s.add_argument("--eps", type=float, default=S)
    s.add_argument("--r", type=int, default=S)
    s.add_argument("--centering", default=S, choices=["mean", "none"])
    s.add_argument("--allow-partial", dest="allow_partial", action="store_true", default=S)
    s.add_argument("--out", default=S)

    gp = sub.add_parser("gamma-path", help="sweep the whole gamma solution path")
    gp.add_argument("--patches", default=S)
    gp.add_argument("--eps", type=float, default=S)
    gp.add_argument("--out", default=S)
    gp.add_argument("--csv", default=S)

    b = sub.add_parser("branch", help="find branch coordinates")
    b.add_argument("--points", default=S)
    b.add_argument("--p-i", dest="p_i", type=_parse_coords, default=S)
    b.add_argument("--rho", type=float, default=S)
    b.add_argument("--gap-factor", dest="gap_factor", type=float, default=S)
    b.add_argument("--mode", default=S, choices=["bases", "vectors"])
    b.add_argument("--gamma", type=_parse_gamma, default=S)
    b.add_argument("--eps", type=float, default=S)
    b.add_argument("--out", default=S)

    e = sub.add_parser("eval", help="amplification, k-NN reconstruction or POD spectrum")
    e.add_argument("what", nargs="?", default=S, choices=["amplification", "knn", "pod"])
    e.add_argument("--patches", default=S)
    e.add_argument("--points", default=S)
    e.add_argument("--test", default=S)
    e.add_argument("--coords", type=_parse_coords, default=S)
    e.add_argument("--k", type=int, default=S)
    e.add_argument("--centering", default=S, choices=["mean", "none"])
    e.add_argument("--out", default=S)
    e.add_argument("--csv", default=S)

    v = sub.add_parser("verify", help="run the SimPQR guarantee checks")
    v.add_argument("--patches", default=S)
    v.add_argument("--random", type=int, default=S, help="number of random patch sets")
    v.add_argument("--seed", type=int, default=S)
    v.add_argument("--gamma", type=_parse_gamma, default=S)
    v.add_argument("--eps", type=float, default=S)
    v.add_argument("--eta", type=float, default=S)
    v.add_argument("--nu", type=float, default=S)
    v.add_argument("--out", default=S)
    return p


DEFAULTS = {
    "generate": {"m": 1000, "seed": 0, "out": ".", "nx": 256, "chis": 25, "nu": 1e-3,
                 "t_final": 1.0, "n_snap": 500},
    "tangents": {"method": "analytic", "k": 10, "alpha": 1.0, "r": 2, "r_prime": None,
                 "quality_min": 0.05, "patches": None, "seed": 0},
    "select": {"patches": None, "points": None, "method": "nldeim", "gamma": "auto",
               "eps": 1e-4, "r": None, "centering": "mean", "allow_partial": False, "out": None},
    "gamma-path": {"eps": 1e-4, "out": None, "csv": None},
    "branch": {"rho": 0.1, "gap_factor": 3.0, "mode": "bases", "gamma": "auto",
               "eps": 1e-4, "out": None, "p_i": None},
    "eval": {"what": "amplification", "patches": None, "points": None, "test": None,
             "coords": None, "k": 3, "centering": "mean", "out": None, "csv": None},
    "verify": {"patches": None, "random": 10, "seed": 0, "gamma": None, "eps": 1e-4,
               "eta": 0.5, "nu": 0.5, "out": None},
}

REQUIRED = {
    "generate": ["dataset"],
    "tangents": ["input", "out"],
    "gamma-path": ["patches"],
    "branch": ["points"],
}


def resolve_options(args):
    """Merge defaults < config file < command-line flags."""
    cmd = args.command
    opts = dict(DEFAULTS[cmd])
    if args.config:
        cfg = load_config(args.config, cmd)
        cfg.pop("schema_version", None)
        if "threads" in cfg and args.threads is None:
            args.threads = cfg.pop("threads")
        cfg.pop("threads", None)
        opts.update(cfg)
    skip = {"command", "config", "threads", "verbose"}
    opts.update({k: v for k, v in vars(args).items() if k not in skip})
    for key in REQUIRED.get(cmd, []):
        if opts.get(key) is None:
            raise ConfigError(f"config.{key}", "is required")
    return argparse.Namespace(**opts)


def _thread_limit(n):
    if n is None:
        env = os.environ.get("NLDEIM_THREADS")
        n = int(env) if env else None
    if n is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve_options(args)
        with _thread_limit(args.threads):
            payload = COMMANDS[args.command](opts)
    except ConfigError as exc:
        _emit({"error": {"field": exc.field, "message": str(exc), "type": "ConfigError"}})
        return 2
    except (NldeimError, OSError) as exc:
        _emit({"error": {"field": None, "message": str(exc), "type": type(exc).__name__}})
        return 1
    _emit(payload, getattr(opts, "out", None) if args.command != "generate" and
          args.command != "tangents" else None)
    return 0


if __name__ == "__main__":
    sys.exit(main())
