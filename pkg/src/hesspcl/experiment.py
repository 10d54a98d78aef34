"""Experiment configuration, benchmark problem construction and artifact export."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import __version__
from .analysis import (
    activation_histogram,
    angle_diagnostics,
    cdf_csv,
    classify_spectrum,
    histogram_csv,
    perturbed_loss_profile,
    profile_csv,
    spectrum_csv,
    zero_ratio,
)
from .linalg import sym_eigen
from .nn import NetworkSpec, init_params, save_params
from .optim import OPTIMIZERS, TapeOracle, minimize
from .pde import (
    Grid2D,
    TriMesh,
    add_noise,
    build_dnn_only_loss,
    build_fem_poisson_loss,
    build_heat_loss,
    build_poisson_fd_loss,
    fem_kappa,
    fem_observations,
    heat_kappa,
    manufactured_heat,
    manufactured_poisson_nonlinear,
    poisson_kappa,
)
from .pde.manufactured import NOISE_DISTRIBUTIONS

PROBLEMS = ("poisson-fd", "heat", "poisson-fem", "toy-one-layer")
SWEEP_AXES = ("seed", "depth", "width", "optimizer")

# single-layer toy: one hidden tanh unit fitted to sin(pi x) at one point
TOY_POINT = 0.5


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending entry."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "poisson-fd"
    optimizer: str = "trust-region"
    seed: int = 1
    grid: int = 10  # cells per side (finite differences) or mesh divisions (FEM)
    dt: float = 0.01
    steps: int = 10
    depth: int = 3
    width: int = 20
    hidden: tuple | None = None  # explicit hidden sizes; overrides depth/width
    noise: float | None = None  # None: 0.1 for poisson-fd, noise-free data otherwise
    noise_distribution: str = "uniform01"
    noise_seed: int = 0
    max_iters: int = 5000
    eps: float = 1e-6
    probe: tuple | None = None  # activation probe; defaults to 0.5 in every input
    angles: bool = False  # cos(theta_1), cos(theta_2) per iteration (one Hessian each)
    dnn_only: bool = True  # spectrum of the matching no-PDE loss at the final point
    timed: bool = False  # fill wall_ms; makes history.csv run-dependent
    out: str = "runs/run"

    def __post_init__(self):
        if self.hidden is not None:
            object.__setattr__(self, "hidden", tuple(self.hidden))
        if self.probe is not None:
            object.__setattr__(self, "probe", tuple(float(p) for p in self.probe))
        validate(self)

    @property
    def hidden_sizes(self):
        if self.problem == "toy-one-layer":
            return (1,)
        return self.hidden if self.hidden is not None else (self.width,) * self.depth

    @property
    def noise_level(self):
        if self.noise is not None:
            return float(self.noise)
        return 0.1 if self.problem == "poisson-fd" else 0.0

    def digest(self):
        """Stable hash of everything that affects results (the output directory excluded)."""
        d = asdict(self)
        d.pop("out")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_dict(self):
        d = asdict(self)
        for k in ("hidden", "probe"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d


def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)


def validate(cfg: ExperimentConfig):
    if cfg.problem not in PROBLEMS:
        raise ConfigError("problem", f"expected one of {', '.join(PROBLEMS)}, got {cfg.problem!r}")
    if cfg.optimizer not in OPTIMIZERS:
        raise ConfigError("optimizer", f"expected one of {', '.join(OPTIMIZERS)}, got {cfg.optimizer!r}")
    for name in ("seed", "noise_seed"):
        v = getattr(cfg, name)
        if not _is_int(v) or v < 0:
            raise ConfigError(name, f"must be a nonnegative integer, got {v!r}")
    for name, low in (("grid", 2), ("steps", 1), ("depth", 1), ("width", 1), ("max_iters", 0)):
        v = getattr(cfg, name)
        if not _is_int(v) or v < low:
            raise ConfigError(name, f"must be an integer >= {low}, got {v!r}")
    for name in ("dt", "eps"):
        v = getattr(cfg, name)
        if not _is_num(v) or not v > 0 or not np.isfinite(v):
            raise ConfigError(name, f"must be a positive number, got {v!r}")
    if cfg.noise is not None and (not _is_num(cfg.noise) or not 0 <= cfg.noise < np.inf):
        raise ConfigError("noise", f"must be a nonnegative number, got {cfg.noise!r}")
    if cfg.noise_distribution not in NOISE_DISTRIBUTIONS:
        raise ConfigError("noise_distribution", f"expected one of {', '.join(NOISE_DISTRIBUTIONS)}")
    if cfg.hidden is not None and (not cfg.hidden or not all(_is_int(h) and h >= 1 for h in cfg.hidden)):
        raise ConfigError("hidden", f"must be a nonempty list of positive integers, got {list(cfg.hidden)!r}")
    for name in ("angles", "dnn_only", "timed"):
        if not isinstance(getattr(cfg, name), bool):
            raise ConfigError(name, "must be true or false")
    if not isinstance(cfg.out, str) or not cfg.out:
        raise ConfigError("out", "must be a nonempty path")
    if cfg.probe is not None and len(cfg.probe) != input_dim(cfg.problem):
        raise ConfigError("probe", f"{cfg.problem} networks take {input_dim(cfg.problem)} input(s)")


def input_dim(problem):
    return 1 if problem in ("poisson-fd", "toy-one-layer") else 2


def config_from_mapping(data, **overrides):
    """Build a config from a flat mapping; ``overrides`` that are not ``None`` win."""
    if not isinstance(data, dict):
        raise ConfigError("config", "must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(unknown[0], "unknown configuration field")
    merged = dict(data)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**merged)


def load_config(path, **overrides):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path} is not valid JSON ({exc.msg} at line {exc.lineno})") from exc
    return config_from_mapping(data, **overrides)


@dataclass
class Problem:
    tape: object
    spec: NetworkSpec
    dnn_only_tape: object = None
    probe: tuple = field(default_factory=tuple)


def build_problem(cfg: ExperimentConfig) -> Problem:
    spec = NetworkSpec(input_dim(cfg.problem), 1, cfg.hidden_sizes)
    probe = cfg.probe if cfg.probe is not None else (0.5,) * spec.input_dim
    if cfg.problem == "toy-one-layer":
        x = np.array([[TOY_POINT]])
        tape = build_dnn_only_loss(x, np.sin(np.pi * x).ravel(), spec)
        return Problem(tape, spec, None, probe)
    if cfg.problem == "poisson-fem":
        mesh = TriMesh.structured(cfg.grid)
        obs = add_noise(fem_observations(mesh), cfg.noise_level, cfg.noise_seed, cfg.noise_distribution)
        c = mesh.centroids
        dnn = build_dnn_only_loss(c, fem_kappa(c[:, 0], c[:, 1]), spec) if cfg.dnn_only else None
        return Problem(build_fem_poisson_loss(mesh, obs, spec), spec, dnn, probe)
    grid = Grid2D(cfg.grid)
    if cfg.problem == "poisson-fd":
        obs = add_noise(manufactured_poisson_nonlinear(grid), cfg.noise_level, cfg.noise_seed, cfg.noise_distribution)
        u = obs.u[grid.interior]
        dnn = build_dnn_only_loss(u, poisson_kappa(u), spec) if cfg.dnn_only else None
        return Problem(build_poisson_fd_loss(grid, obs, spec), spec, dnn, probe)
    obs = add_noise(manufactured_heat(grid, cfg.dt, cfg.steps), cfg.noise_level, cfg.noise_seed, cfg.noise_distribution)
    xy = grid.coords
    dnn = build_dnn_only_loss(xy, heat_kappa(xy[:, 0], xy[:, 1]), spec) if cfg.dnn_only else None
    return Problem(build_heat_loss(grid, obs, spec), spec, dnn, probe)


@dataclass
class RunResult:
    config: ExperimentConfig
    theta: np.ndarray
    history: object
    spectrum: object
    report: dict
    files: dict


def header_lines(cfg: ExperimentConfig, *extra):
    return (f"hesspcl {__version__}", f"config {cfg.digest()}", *extra)


PROFILE_ALPHAS = np.linspace(-0.1, 0.1, 21)


def _profile_directions(eig, spectrum):
    """Unit eigenvectors for the largest, the smallest and one near-zero eigenvalue."""
    w, v = eig.eigenvalues, eig.eigenvectors
    dirs = {"v_max": v[:, -1], "v_min": v[:, 0]}
    small = np.flatnonzero(np.abs(w) <= spectrum.threshold)
    if small.size:
        dirs["v_zero"] = v[:, small[np.argmin(np.abs(w[small]))]]
    return dirs


def execute(cfg: ExperimentConfig, write=True) -> RunResult:
    """Optimize, analyse the final point, and (optionally) write every artifact."""
    problem = build_problem(cfg)
    oracle = TapeOracle(problem.tape)
    theta0 = init_params(problem.spec, cfg.seed)

    angle_rows = []
    kw = {}
    if cfg.angles:
        def record(k, theta, p, g):
            if np.linalg.norm(p) > 0 and np.linalg.norm(g) > 0:
                a = angle_diagnostics(p, g, oracle.hessian(theta))
                angle_rows.append((k, a))

        kw["direction_callback"] = record
    theta, hist = minimize(cfg.optimizer, oracle, theta0, max_iters=cfg.max_iters, timed=cfg.timed, **kw)

    h = oracle.hessian(theta)
    eig = sym_eigen(h)
    spectrum = classify_spectrum(eig, cfg.eps)
    act = activation_histogram(problem.spec, theta, problem.probe)
    report = {
        "tool_version": __version__,
        "config_digest": cfg.digest(),
        "config": {k: v for k, v in cfg.to_dict().items() if k != "out"},
        "n_params": int(theta.size),
        "stop_reason": hist.stop_reason,
        "iterations": hist.iterations,
        "final_loss": hist.final_loss,
        "final_grad_norm": float(np.linalg.norm(oracle.gradient(theta))),
        "skipped_updates": list(hist.skipped_updates),
        "spectrum": spectrum.to_dict(),
        "effective_dofs": spectrum.effective_dofs,
        "saturation": act.saturation,
    }
    dnn_spectrum = None
    if problem.dnn_only_tape is not None:
        dnn_spectrum = classify_spectrum(TapeOracle(problem.dnn_only_tape).hessian(theta), cfg.eps)
        report["dnn_only_spectrum"] = dnn_spectrum.to_dict()

    files = {}
    if write:
        hdr = header_lines(cfg)
        files["history.csv"] = hist.to_csv(hdr)
        files["spectrum.csv"] = spectrum_csv(spectrum, hdr)
        files["weights_cdf.csv"] = cdf_csv(theta, hdr)
        files["activations.csv"] = histogram_csv(act, header_lines(cfg, f"probe {list(problem.probe)}"))
        dirs = _profile_directions(eig, spectrum)
        curves = {name: perturbed_loss_profile(oracle, theta, v, PROFILE_ALPHAS) for name, v in dirs.items()}
        files["profile.csv"] = profile_csv(PROFILE_ALPHAS, curves, hdr)
        if dnn_spectrum is not None:
            files["dnn_only_spectrum.csv"] = spectrum_csv(dnn_spectrum, hdr)
        if cfg.angles:
            files["angles.csv"] = _angles_csv(angle_rows, hdr)
        files["report.json"] = json.dumps(report, indent=2, sort_keys=True) + "\n"
        os.makedirs(cfg.out, exist_ok=True)
        for name, text in files.items():
            with open(os.path.join(cfg.out, name), "w") as fh:
                fh.write(text)
        save_params(os.path.join(cfg.out, "params.txt"), theta, cfg.seed, header_lines=hdr)
    return RunResult(cfg, theta, hist, spectrum, report, files)


def _angles_csv(rows, hdr):
    lines = [f"# {h}" for h in hdr] + ["iter,cos_gradient,cos_newton,note"]
    for k, a in rows:
        cos2 = "" if a.cos_newton is None else repr(a.cos_newton)
        lines.append(f"{k},{a.cos_gradient!r},{cos2},{a.reason}")
    return "\n".join(lines) + "\n"


SUMMARY_COLUMNS = ("axis", "value", "config_digest", "final_loss", "stop_reason", "effective_dofs", "zero_ratio", "error")


def sweep_configs(template: ExperimentConfig, axis, values):
    if axis not in SWEEP_AXES:
        raise ConfigError("axis", f"expected one of {', '.join(SWEEP_AXES)}, got {axis!r}")
    if not values:
        raise ConfigError("values", "sweep needs at least one value")
    out = []
    for v in values:
        changes = {axis: v, "out": os.path.join(template.out, f"{axis}-{v}")}
        if axis in ("depth", "width"):
            changes["hidden"] = None
        out.append(replace(template, **changes))
    return out


def sweep(template: ExperimentConfig, axis, values, write=True):
    """Run one configuration per value; failures are recorded per row, not raised."""
    import csv
    import io

    rows, results = [], []
    for v, cfg in zip(values, sweep_configs(template, axis, values)):
        try:
            res = execute(cfg, write=write)
        except Exception as exc:  # noqa: BLE001 - a failed row must not stop the sweep
            rows.append((axis, v, cfg.digest(), "", "", "", "", f"{type(exc).__name__}: {exc}"))
            results.append(None)
            continue
        results.append(res)
        s = res.spectrum
        rows.append((axis, v, cfg.digest(), repr(res.history.final_loss), res.history.stop_reason,
                     s.effective_dofs, repr(zero_ratio(s)), ""))
    buf = io.StringIO()
    for line in header_lines(template, f"sweep {axis}"):
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    w.writerows(rows)
    text = buf.getvalue()
    if write:
        os.makedirs(template.out, exist_ok=True)
        with open(os.path.join(template.out, "summary.csv"), "w") as fh:
            fh.write(text)
    return text, results
