"""Experiment runner: JSON config in, traces and reconstructions out.

Two subcommands::

    vistapnp run CONFIG.json [--field.path value ...]
    vistapnp compare CFG1.json CFG2.json ... [--out DIR]

``run`` executes one reconstruction and writes, inside the configured
output directory only: ``trace.csv``, ``summary.json``, ``config.json``
(the fully resolved config), and PNGs of the initial, peak-PSNR, and final
iterates (plus ``fixed_point.png`` for viscosity runs).  A diverged run is
a *result* — it still exits 0.  Exit codes: 0 success, 2 config error,
3 I/O error.

``compare`` runs each config over its image set (``images`` may be a list)
and emits per-config peak/asymptotic PSNR as mean +/- std, both as CSV and
as an aligned text table.

Flags of the form ``--a.b.c value`` override the corresponding config
field; values are parsed as JSON when possible, else kept as strings.
The full schema is documented in the repository README.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from .bridge import BridgeError, bridge_denoiser
from .denoisers import (
    Denoiser,
    build_dsg_weights,
    dsg_nlm_denoiser,
    equivariant_wrap,
    gaussian_smoother,
    nlm_denoiser,
    scaled_identity,
    unsharp_expansive,
)
from .forward import (
    CircularConvolution,
    DownsampledConvolution,
    Identity,
    Problem,
    gaussian_kernel,
    load_kernel,
    motion_kernel,
)
from .image import add_gaussian_noise, as_image, bicubic_upsample, load_image, save_image
from .operators import DEFAULT_GUARD, PnPOperator, vanilla_iterate
from .phantoms import PHANTOM_NAMES, phantom
from .trace import summarize, write_trace_csv
from .vista import ViscosityConfig, nlm_viscosity_operator, vista_iterate

NLM_DEFAULT_H = 60.0 / 255.0


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field path."""


# ---------------------------------------------------------------------------
# Config loading, validation, resolution.


def load_config(path) -> dict:
    try:
        with open(path, "r") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON: {e}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return cfg


def _type_name(v) -> str:
    return type(v).__name__


def _want_dict(v, path: str) -> dict:
    if not isinstance(v, dict):
        raise ConfigError(f"{path}: expected an object, got {_type_name(v)}")
    return v

_MISSING = object()


def _pick(spec: dict, key: str, path: str, default=_MISSING):
    if key in spec:
        return spec[key]
    if default is _MISSING:
        raise ConfigError(f"{path}.{key}: required field is missing")
    return default


def _number(v, path: str, lo=None, hi=None, lo_open=False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{path}: expected a finite number, got {v!r}")
    v = float(v)
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ConfigError(f"{path}: must be {'>' if lo_open else '>='} {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(f"{path}: must be <= {hi}, got {v}")
    return v


def _integer(v, path: str, lo=None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{path}: must be >= {lo}, got {v}")
    return v


def _string(v, path: str, choices=None) -> str:
    if not isinstance(v, str):
        raise ConfigError(f"{path}: expected a string, got {_type_name(v)}")
    if choices is not None and v not in choices:
        raise ConfigError(f"{path}: must be one of {sorted(choices)}, got {v!r}")
    return v


def _no_extras(spec: dict, path: str, allowed) -> None:
    extras = set(spec) - set(allowed)
    if extras:
        raise ConfigError(f"{path}: unknown field(s) {sorted(extras)}")


def _resolve_image(spec, path: str) -> dict:
    spec = _want_dict(spec, path)
    if "path" in spec:
        _no_extras(spec, path, {"path"})
        return {"path": _string(spec["path"], f"{path}.path")}
    _no_extras(spec, path, {"phantom", "size", "channels"})
    name = _string(_pick(spec, "phantom", path, "shapes"), f"{path}.phantom", PHANTOM_NAMES)
    size = _integer(_pick(spec, "size", path, 128), f"{path}.size", lo=8)
    channels = _integer(_pick(spec, "channels", path, 1), f"{path}.channels")
    if channels not in (1, 3):
        raise ConfigError(f"{path}.channels: must be 1 or 3, got {channels}")
    return {"phantom": name, "size": size, "channels": channels}


def _resolve_blur_kernel(spec, path: str, default_size: int, default_sigma: float) -> dict:
    spec = _want_dict(spec, path)
    if "path" in spec:
        _no_extras(spec, path, {"path"})
        return {"path": _string(spec["path"], f"{path}.path")}
    _no_extras(spec, path, {"size", "sigma"})
    size = _integer(_pick(spec, "size", path, default_size), f"{path}.size", lo=1)
    if size % 2 == 0:
        raise ConfigError(f"{path}.size: must be odd, got {size}")
    sigma = _number(_pick(spec, "sigma", path, default_sigma), f"{path}.sigma", lo=0, lo_open=True)
    return {"size": size, "sigma": sigma}


def _resolve_motion_kernel(spec, path: str) -> dict:
    spec = _want_dict(spec, path)
    if "path" in spec:
        _no_extras(spec, path, {"path"})
        return {"path": _string(spec["path"], f"{path}.path")}
    _no_extras(spec, path, {"length", "angle"})
    length = _integer(_pick(spec, "length", path, 15), f"{path}.length", lo=1)
    angle = _number(_pick(spec, "angle", path, 45.0), f"{path}.angle")
    return {"length": length, "angle": angle}


def _resolve_task(spec, path: str) -> dict:
    spec = _want_dict(spec, path)
    name = _string(
        _pick(spec, "name", path),
        f"{path}.name",
        {"identity", "gaussian_deblur", "motion_deblur", "superres"},
    )
    if name == "identity":
        _no_extras(spec, path, {"name"})
        return {"name": name}
    if name == "gaussian_deblur":
        _no_extras(spec, path, {"name", "kernel"})
        return {"name": name, "kernel": _resolve_blur_kernel(spec.get("kernel", {}), f"{path}.kernel", 25, 1.6)}
    if name == "motion_deblur":
        _no_extras(spec, path, {"name", "kernel"})
        return {"name": name, "kernel": _resolve_motion_kernel(spec.get("kernel", {}), f"{path}.kernel")}
    # superres: blur with an antialias kernel, keep every factor-th pixel.
    _no_extras(spec, path, {"name", "factor", "antialias"})
    factor = _integer(_pick(spec, "factor", path), f"{path}.factor", lo=1)
    antialias = _resolve_blur_kernel(spec.get("antialias", {}), f"{path}.antialias", 9, float(factor))
    return {"name": name, "factor": factor, "antialias": antialias}


def _resolve_algorithm(spec, path: str) -> dict:
    spec = _want_dict(spec, path)
    name = _string(_pick(spec, "name", path), f"{path}.name", {"pgd", "hqs", "admm"})
    param_key = {"pgd": "gamma", "hqs": "mu", "admm": "alpha"}[name]
    _no_extras(spec, path, {"name", param_key, "cg_tol", "cg_max_iter"})
    out = {"name": name}
    if name == "pgd":
        out["gamma"] = _number(_pick(spec, "gamma", path), f"{path}.gamma", lo=0)
    else:
        out[param_key] = _number(_pick(spec, param_key, path), f"{path}.{param_key}", lo=0, lo_open=True)
        out["cg_tol"] = _number(_pick(spec, "cg_tol", path, 1e-6), f"{path}.cg_tol", lo=0, lo_open=True)
        out["cg_max_iter"] = _integer(_pick(spec, "cg_max_iter", path, 200), f"{path}.cg_max_iter", lo=1)
    return out


def _resolve_nlm_params(spec: dict, path: str) -> dict:
    return {
        "window_radius": _integer(_pick(spec, "window_radius", path, 1), f"{path}.window_radius", lo=0),
        "patch_radius": _integer(_pick(spec, "patch_radius", path, 1), f"{path}.patch_radius", lo=0),
        "h": _number(_pick(spec, "h", path, NLM_DEFAULT_H), f"{path}.h", lo=0, lo_open=True),
    }


def _resolve_denoiser(spec, path: str) -> dict:
    spec = _want_dict(spec, path)
    name = _string(
        _pick(spec, "name", path),
        f"{path}.name",
        {"gaussian", "scaled_identity", "unsharp_expansive", "nlm", "dsg_nlm", "bridge"},
    )
    if name == "gaussian":
        _no_extras(spec, path, {"name", "sigma"})
        return {"name": name, "sigma": _number(_pick(spec, "sigma", path), f"{path}.sigma", lo=0, lo_open=True)}
    if name == "scaled_identity":
        _no_extras(spec, path, {"name", "beta"})
        return {"name": name, "beta": _number(_pick(spec, "beta", path), f"{path}.beta", lo=0, hi=1)}
    if name == "unsharp_expansive":
        _no_extras(spec, path, {"name", "lam", "base_sigma"})
        return {
            "name": name,
            "lam": _number(_pick(spec, "lam", path), f"{path}.lam"),
            "base_sigma": _number(_pick(spec, "base_sigma", path), f"{path}.base_sigma", lo=0, lo_open=True),
        }
    if name in ("nlm", "dsg_nlm"):
        _no_extras(spec, path, {"name", "window_radius", "patch_radius", "h"})
        return {"name": name, **_resolve_nlm_params(spec, path)}
    # bridge: exactly one transport.
    _no_extras(spec, path, {"name", "command", "host", "port", "timeout"})
    out = {"name": name, "timeout": _number(_pick(spec, "timeout", path, 30.0), f"{path}.timeout", lo=0, lo_open=True)}
    has_cmd = "command" in spec
    has_tcp = "host" in spec or "port" in spec
    if has_cmd == has_tcp:
        raise ConfigError(f"{path}: bridge needs either 'command' or 'host'+'port'")
    if has_cmd:
        cmd = spec["command"]
        if isinstance(cmd, list):
            out["command"] = [_string(c, f"{path}.command[{i}]") for i, c in enumerate(cmd)]
        else:
            out["command"] = _string(cmd, f"{path}.command")
    else:
        out["host"] = _string(_pick(spec, "host", path), f"{path}.host")
        out["port"] = _integer(_pick(spec, "port", path), f"{path}.port", lo=1)
    return out


def _resolve_viscosity(spec, path: str) -> dict:
    spec = _want_dict(spec, path)
    name = _string(_pick(spec, "name", path, "nlm"), f"{path}.name", {"nlm", "scaled_identity"})
    if name == "scaled_identity":
        _no_extras(spec, path, {"name", "beta"})
        return {"name": name, "beta": _number(_pick(spec, "beta", path), f"{path}.beta", lo=0, hi=1)}
    _no_extras(spec, path, {"name", "rho", "window_radius", "patch_radius", "h"})
    rho = _number(_pick(spec, "rho", path, 1.9), f"{path}.rho", lo=0, lo_open=True)
    if rho >= 2.0:
        raise ConfigError(f"{path}.rho: must be in (0, 2), got {rho}")
    return {"name": name, "rho": rho, **_resolve_nlm_params(spec, path)}


def _resolve_method(spec, path: str) -> dict:
    spec = _want_dict(spec, path)
    name = _string(_pick(spec, "name", path, "vanilla"), f"{path}.name", {"vanilla", "equivariant", "vista"})
    if name == "vanilla":
        _no_extras(spec, path, {"name"})
        return {"name": name}
    if name == "equivariant":
        _no_extras(spec, path, {"name", "mode"})
        mode = _string(_pick(spec, "mode", path, "averaged"), f"{path}.mode", {"averaged", "sampled"})
        return {"name": name, "mode": mode}
    _no_extras(
        spec, path,
        {"name", "schedule", "theta_cap", "theta", "near_tol", "fp_tol", "fp_max_iter", "viscosity"},
    )
    schedule = _string(
        _pick(spec, "schedule", path, "adaptive"), f"{path}.schedule",
        {"adaptive", "constant", "reciprocal"},
    )
    out = {
        "name": name,
        "schedule": schedule,
        "theta_cap": _number(_pick(spec, "theta_cap", path, 0.2), f"{path}.theta_cap", lo=0, lo_open=True, hi=1),
        "near_tol": _number(_pick(spec, "near_tol", path, 1e-3), f"{path}.near_tol", lo=0, lo_open=True),
        "fp_tol": _number(_pick(spec, "fp_tol", path, 1e-3), f"{path}.fp_tol", lo=0, lo_open=True),
        "fp_max_iter": _integer(_pick(spec, "fp_max_iter", path, 50), f"{path}.fp_max_iter", lo=1),
        "viscosity": _resolve_viscosity(spec.get("viscosity", {}), f"{path}.viscosity"),
    }
    if schedule == "constant":
        out["theta"] = _number(_pick(spec, "theta", path), f"{path}.theta", lo=0, hi=1)
    elif "theta" in spec:
        raise ConfigError(f"{path}.theta: only meaningful for the constant schedule")
    return out


_TOP_KEYS = {
    "label", "image", "images", "task", "noise_sigma", "seed", "algorithm",
    "denoiser", "method", "iters", "asymptotic_at", "guard", "output_dir",
}


def resolve_config(cfg: dict) -> dict:
    """Validate a raw config dict and fill in defaults.

    Returns a new, fully explicit dict (the form written to
    ``config.json``); raises :class:`ConfigError` naming the bad field.
    ``noise_sigma`` has deliberately no default — every experiment must
    state it.
    """
    cfg = _want_dict(cfg, "config")
    _no_extras(cfg, "config", _TOP_KEYS)
    if "image" in cfg and "images" in cfg:
        raise ConfigError("config: give either 'image' or 'images', not both")
    if "images" in cfg:
        if not isinstance(cfg["images"], list) or not cfg["images"]:
            raise ConfigError("config.images: expected a non-empty list")
        images = [_resolve_image(s, f"config.images[{i}]") for i, s in enumerate(cfg["images"])]
    else:
        images = [_resolve_image(cfg.get("image", {}), "config.image")]
    out = {
        "label": _string(_pick(cfg, "label", "config", ""), "config.label"),
        "images": images,
        "task": _resolve_task(_pick(cfg, "task", "config"), "config.task"),
        "noise_sigma": _number(_pick(cfg, "noise_sigma", "config"), "config.noise_sigma", lo=0),
        "seed": _integer(_pick(cfg, "seed", "config", 0), "config.seed", lo=0),
        "algorithm": _resolve_algorithm(_pick(cfg, "algorithm", "config"), "config.algorithm"),
        "denoiser": _resolve_denoiser(_pick(cfg, "denoiser", "config"), "config.denoiser"),
        "method": _resolve_method(cfg.get("method", {}), "config.method"),
        "iters": _integer(_pick(cfg, "iters", "config", 500), "config.iters", lo=0),
        "asymptotic_at": _integer(_pick(cfg, "asymptotic_at", "config", 500), "config.asymptotic_at", lo=0),
        "guard": _number(_pick(cfg, "guard", "config", DEFAULT_GUARD), "config.guard", lo=0, lo_open=True),
        "output_dir": _string(_pick(cfg, "output_dir", "config", "vistapnp_out"), "config.output_dir"),
    }
    return out


def set_override(cfg: dict, dotted: str, raw: str) -> None:
    """Apply one ``--a.b.c value`` override onto a raw config dict."""
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = dotted.split(".")
    node = cfg
    for key in keys[:-1]:
        nxt = node.get(key)
        if not isinstance(nxt, dict):
            nxt = {}
            node[key] = nxt
        node = nxt
    node[keys[-1]] = value


def config_hash(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def problem_hash(resolved: dict) -> str:
    """Hash of the parts that define the inverse problem (not the solver),
    so solver variants on one problem share a table key."""
    part = {k: resolved[k] for k in ("images", "task", "noise_sigma", "seed")}
    blob = json.dumps(part, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Builders.


def _load_ground_truth(image_spec: dict) -> np.ndarray:
    if "path" in image_spec:
        return load_image(image_spec["path"])
    return phantom(image_spec["phantom"], image_spec["size"], image_spec["channels"])


def _task_kernel(task: dict):
    if task["name"] == "gaussian_deblur":
        spec = task["kernel"]
        if "path" in spec:
            return load_kernel(spec["path"])
        return gaussian_kernel(spec["size"], spec["sigma"])
    if task["name"] == "motion_deblur":
        spec = task["kernel"]
        if "path" in spec:
            return load_kernel(spec["path"])
        return motion_kernel(spec["length"], spec["angle"])
    spec = task["antialias"]
    if "path" in spec:
        return load_kernel(spec["path"])
    return gaussian_kernel(spec["size"], spec["sigma"])


def build_problem(cfg: dict, ground_truth, rng: np.random.Generator):
    """Synthesize the observation for a resolved config.

    Returns ``(problem, x0)``: the observation is the blurred (and for
    superresolution, subsampled) ground truth plus Gaussian noise; the
    starting iterate is the observation itself for full-size tasks and its
    bicubic upsample for superresolution.
    """
    gt = as_image(ground_truth, dtype=np.float32)
    h, w = gt.shape[:2]
    task = cfg["task"]
    name = task["name"]
    if name == "identity":
        model = Identity((h, w))
    elif name in ("gaussian_deblur", "motion_deblur"):
        model = CircularConvolution(_task_kernel(task), (h, w))
    else:
        factor = task["factor"]
        if h % factor or w % factor:
            raise ConfigError(
                f"config.task.factor: image dims {h}x{w} not divisible by {factor}"
            )
        model = DownsampledConvolution(_task_kernel(task), factor, (h, w))
    y = add_gaussian_noise(model.apply(gt), cfg["noise_sigma"], rng)
    x0 = bicubic_upsample(y, task["factor"]) if name == "superres" else y.copy()
    return Problem(model, y), x0


def _build_denoiser(spec: dict, x0) -> Denoiser:
    name = spec["name"]
    if name == "gaussian":
        return gaussian_smoother(spec["sigma"])
    if name == "scaled_identity":
        return scaled_identity(spec["beta"])
    if name == "unsharp_expansive":
        return unsharp_expansive(spec["lam"], spec["base_sigma"])
    if name == "nlm":
        return nlm_denoiser(spec["window_radius"], spec["patch_radius"], spec["h"])
    if name == "dsg_nlm":
        # Guide image frozen at the initialization, so the weights are fixed
        # for the whole run.
        weights = build_dsg_weights(x0, spec["window_radius"], spec["patch_radius"], spec["h"])
        return dsg_nlm_denoiser(weights)
    return bridge_denoiser(
        command=spec.get("command"),
        host=spec.get("host"),
        port=spec.get("port"),
        timeout=spec["timeout"],
    )


def _build_viscosity(spec: dict, problem: Problem, x0) -> Denoiser:
    if spec["name"] == "scaled_identity":
        return scaled_identity(spec["beta"])
    return nlm_viscosity_operator(
        problem,
        x0,
        rho=spec["rho"],
        window_radius=spec["window_radius"],
        patch_radius=spec["patch_radius"],
        h=spec["h"],
    )


def _algorithm_kwargs(alg: dict) -> dict:
    if alg["name"] == "pgd":
        return {"param": alg["gamma"]}
    key = "mu" if alg["name"] == "hqs" else "alpha"
    return {"param": alg[key], "cg_tol": alg["cg_tol"], "cg_max_iter": alg["cg_max_iter"]}


# ---------------------------------------------------------------------------
# Running.


def run_config(resolved: dict, out_dir: Path) -> dict:
    """Execute one resolved config with exactly one image; write all
    artifacts under ``out_dir``; return the summary dict."""
    if len(resolved["images"]) != 1:
        raise ConfigError("config.images: 'run' takes exactly one image; use 'compare' for sets")
    rng = np.random.default_rng([resolved["seed"], 0])
    gt = _load_ground_truth(resolved["images"][0])
    problem, x0 = build_problem(resolved, gt, rng)

    method = resolved["method"]
    denoiser = _build_denoiser(resolved["denoiser"], x0)
    client = denoiser.params.get("_client")
    try:
        if method["name"] == "equivariant":
            denoiser = equivariant_wrap(
                denoiser, method["mode"], rng=np.random.default_rng([resolved["seed"], 1])
            )
        alg = resolved["algorithm"]
        op = PnPOperator(alg["name"], problem, denoiser, **_algorithm_kwargs(alg))
        if method["name"] == "vista":
            s = _build_viscosity(method["viscosity"], problem, x0)
            vcfg = ViscosityConfig(
                theta_cap=method["theta_cap"],
                schedule=method["schedule"],
                theta=method.get("theta"),
                neighborhood_eps=method["near_tol"],
                fp_tol=method["fp_tol"],
                fp_max_iter=method["fp_max_iter"],
            )
            trace = vista_iterate(
                op, s, x0, resolved["iters"], vcfg, ground_truth=gt, guard=resolved["guard"]
            )
        else:
            trace = vanilla_iterate(
                op, x0, resolved["iters"], ground_truth=gt, guard=resolved["guard"]
            )
    finally:
        if client is not None:
            client.close()

    stats = summarize(trace, resolved["asymptotic_at"])
    summary = {
        "peak_psnr": stats.peak_psnr,
        "peak_iter": stats.peak_iter,
        "asymptotic_psnr": stats.asymptotic_psnr,
        "asymptotic_iter": stats.asymptotic_iter,
        "diverged": stats.diverged,
        "bridge_failed": trace.bridge_failed,
        "wall_seconds": trace.wall_seconds,
        "config_hash": config_hash(resolved),
    }

    out_dir.mkdir(parents=True, exist_ok=True)
    write_trace_csv(trace, out_dir / "trace.csv")
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    with open(out_dir / "config.json", "w") as fh:
        json.dump(resolved, fh, indent=2)
        fh.write("\n")
    save_image(out_dir / "initial.png", trace.x_initial)
    save_image(out_dir / "final.png", trace.x_final)
    save_image(out_dir / "peak.png", trace.x_peak if trace.x_peak is not None else trace.x_final)
    if trace.fixed_point is not None:
        save_image(out_dir / "fixed_point.png", trace.fixed_point)
    return summary


def run(cfg: dict) -> int:
    resolved = resolve_config(cfg)
    run_config(resolved, Path(resolved["output_dir"]))
    return 0


# ---------------------------------------------------------------------------
# Compare.

_COMPARE_COLUMNS = (
    "label", "problem_hash", "images",
    "peak_mean", "peak_std", "asymptotic_mean", "asymptotic_std", "diverged",
)


def compare(config_paths, out_dir: Path) -> int:
    """Run every config across its image set; tabulate mean +/- std."""
    if not config_paths:
        raise ConfigError("compare: need at least one config")
    out_dir = Path(out_dir)
    rows = []
    for path in config_paths:
        resolved = resolve_config(load_config(path))
        label = resolved["label"] or Path(path).stem
        peaks, asyms, diverged = [], [], 0
        for i, image in enumerate(resolved["images"]):
            sub = copy.deepcopy(resolved)
            sub["images"] = [image]
            summary = run_config(sub, out_dir / label / f"image_{i}")
            peaks.append(summary["peak_psnr"])
            asyms.append(summary["asymptotic_psnr"])
            diverged += bool(summary["diverged"])
        rows.append(
            {
                "label": label,
                "problem_hash": problem_hash(resolved),
                "images": len(peaks),
                # Population std: a single image reports exactly 0.
                "peak_mean": float(np.mean(peaks)),
                "peak_std": float(np.std(peaks)),
                "asymptotic_mean": float(np.mean(asyms)),
                "asymptotic_std": float(np.std(asyms)),
                "diverged": diverged,
            }
        )

    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "compare.csv", "w") as fh:
        fh.write(",".join(_COMPARE_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(str(r[c]) for c in _COMPARE_COLUMNS) + "\n")
    text = format_table(rows)
    with open(out_dir / "compare.txt", "w") as fh:
        fh.write(text + "\n")
    print(text)
    return 0


def format_table(rows) -> str:
    headers = ["label", "problem", "n", "peak [dB]", "asymptotic [dB]", "diverged"]
    body = [
        [
            r["label"],
            r["problem_hash"],
            str(r["images"]),
            f"{r['peak_mean']:.2f} +/- {r['peak_std']:.2f}",
            f"{r['asymptotic_mean']:.2f} +/- {r['asymptotic_std']:.2f}",
            f"{r['diverged']}/{r['images']}",
        ]
        for r in rows
    ]
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    lines += ["  ".join(c.ljust(w) for c, w in zip(b, widths)).rstrip() for b in body]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Entry point.


def _parse_overrides(extras) -> list[tuple[str, str]]:
    pairs = []
    i = 0
    while i < len(extras):
        flag = extras[i]
        if not flag.startswith("--"):
            raise ConfigError(f"unexpected argument {flag!r} (overrides look like --a.b.c VALUE)")
        if "=" in flag:
            dotted, raw = flag[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extras):
                raise ConfigError(f"override {flag!r} is missing a value")
            dotted, raw = flag[2:], extras[i + 1]
            i += 2
        if not dotted:
            raise ConfigError(f"override {flag!r} has an empty field path")
        pairs.append((dotted, raw))
    return pairs


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vistapnp",
        description="Plug-and-play image reconstruction with viscosity stabilization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config", help="path to a JSON config file")
    p_cmp = sub.add_parser("compare", help="run several configs and tabulate PSNR")
    p_cmp.add_argument("configs", nargs="+", help="paths to JSON config files")
    p_cmp.add_argument("--out", default="compare_out", help="output directory")

    try:
        args, extras = parser.parse_known_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0

    try:
        if args.command == "run":
            cfg = load_config(args.config)
            for dotted, raw in _parse_overrides(extras):
                set_override(cfg, dotted, raw)
            return run(cfg)
        if extras:
            raise ConfigError(f"compare does not take overrides: {extras!r}")
        return compare(args.configs, Path(args.out))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except BridgeError as e:
        print(f"bridge error: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        # Numeric-range failures raised by the owning modules are config
        # problems (bad parameter values), not crashes.
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
