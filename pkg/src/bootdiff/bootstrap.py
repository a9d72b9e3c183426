"""Stage 2 of the two-stage training pipeline: combiner calibration,
range-adapter fitting, variance-regularized residual training, and
combined inference.

The combined denoiser is

    D(x_t, sigma) = clamp( sum_i w_i(sigma) B_i f_i(A_i x_t, gain_i sigma)
                           + f_0(x_t, sigma), -U, U )

where w_i are per-sigma-bin scalar calibration weights, gain_i is the view
operator's noise gain (isotropic full-space noise of scale sigma appears in
view i at scale gain_i * sigma), and f_0 is the optional residual denoiser.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import BootdiffError, ConfigError, DivergenceError, NumericError
from .linops import ViewOperator, solve_least_squares
from .neural.mlp import Denoiser
from .neural.train import (Optimizer, TrainConfig, TrainingCurve,
                           train_view_denoiser)
from .rng import substream
from .schedule import DiffusionSchedule
from .synthdata import (DataSpec, Dataset, project_dataset, sample_dataset,
                        save_dataset, spec_from_json, spec_to_json)

_STREAM_CALIB = 31
_STREAM_ADAPTER = 32
_STREAM_RESIDUAL = 33
_STREAM_CAP = 34


@dataclass(eq=False)
class RangeAdapter:
    """Nonnegative piecewise-linear envelope s(sigma) over noise levels.

    Values live at the centers of `n_bins` log-spaced sigma intervals;
    evaluation interpolates linearly in log-sigma and extends constantly
    beyond the outermost centers.
    """

    centers: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ConfigError("adapter values must be finite and nonnegative")

    def __call__(self, sigma) -> np.ndarray:
        s = np.atleast_1d(np.asarray(sigma, dtype=float))
        return np.interp(np.log(s), np.log(self.centers), self.values)

    def to_json(self) -> str:
        return json.dumps({"centers": self.centers.tolist(),
                           "values": self.values.tolist()})

    @staticmethod
    def from_json(text: str) -> "RangeAdapter":
        doc = json.loads(text)
        return RangeAdapter(centers=np.array(doc["centers"]),
                            values=np.array(doc["values"]))


@dataclass(eq=False)
class ViewBranch:
    """A view operator paired with its trained (or oracle) view denoiser."""

    op: ViewOperator
    model: object  # callable (v, sigma_view) -> denoised view vector

    def predict(self, x_t: np.ndarray, sigma: float | np.ndarray) -> np.ndarray:
        v = self.op.apply_A(x_t)
        return self.op.apply_B(self.model(v, self.op.noise_gain * np.asarray(sigma)))


@dataclass(eq=False)
class ResidualDenoiser:
    """f_0 = output_scale * s(sigma) * g(x_t, sigma), with g clamped to
    [-U, U]; adapter may be None (pure penalty mode)."""

    net: Denoiser
    adapter: RangeAdapter | None = None
    output_scale: float = 1.0

    def envelope(self, sigma) -> np.ndarray:
        if self.adapter is None:
            return np.broadcast_to(self.output_scale,
                                   np.atleast_1d(np.asarray(sigma, float)).shape)
        return self.output_scale * self.adapter(sigma)

    def __call__(self, x_t: np.ndarray, sigma) -> np.ndarray:
        out = self.net.forward(x_t, sigma)
        scale = self.envelope(sigma)
        if np.ndim(out) == 1:
            return float(scale.reshape(-1)[0]) * out
        return scale[:, None] * out


@dataclass(eq=False)
class CombinedDenoiser:
    U: float
    m: int
    views: list[ViewBranch] = field(default_factory=list)
    weight_edges: np.ndarray | None = None  # (n_bins+1,) sigma bin edges
    weights: np.ndarray | None = None       # (n_bins, n_views)
    residual: ResidualDenoiser | None = None
    adapter: RangeAdapter | None = None
    calibration_warnings: list = field(default_factory=list)

    def _view_weights(self, sigma) -> np.ndarray:
        """(n, n_views) calibration weights at the given noise levels."""
        sig = np.atleast_1d(np.asarray(sigma, dtype=float))
        if self.weights is None:
            return np.ones((sig.size, len(self.views)))
        idx = np.clip(np.searchsorted(self.weight_edges, sig) - 1,
                      0, self.weights.shape[0] - 1)
        return self.weights[idx]

    def stage1(self, x_t: np.ndarray, sigma) -> np.ndarray:
        """Weighted view combination, before the residual term."""
        x = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
        out = np.zeros_like(x)
        if self.views:
            w = self._view_weights(sigma)
            for i, branch in enumerate(self.views):
                out += w[:, i:i + 1] * branch.predict(x, sigma)
        return out

    def __call__(self, x_t: np.ndarray, sigma) -> np.ndarray:
        single = np.asarray(x_t).ndim == 1
        x = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
        out = self.stage1(x, sigma)
        if self.residual is not None:
            out = out + np.atleast_2d(self.residual(x, sigma))
        out = np.clip(out, -self.U, self.U)
        return out[0] if single else out


@dataclass(frozen=True)
class ResidualTrainConfig:
    lam: float = 0.0              # Lagrange multiplier on output energy
    hard_cap: float | None = None  # cap M on sum_n ||f_0||^2 over S_0
    mode: str = "adapter"          # penalty | adapter | both
    inner: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("lambda must be nonnegative")
        if self.mode not in ("penalty", "adapter", "both"):
            raise ConfigError(f"unknown residual mode {self.mode!r}")

    @property
    def uses_adapter(self) -> bool:
        return self.mode in ("adapter", "both")


def _draw_noisy(rng, x0: np.ndarray, schedule: DiffusionSchedule):
    sig = schedule.sample_sigma(rng, x0.shape[0])
    x_t = x0 + sig[:, None] * rng.standard_normal(x0.shape)
    return x_t, sig


def calibrate_combiner(combined: CombinedDenoiser, calib_set: Dataset,
                       schedule: DiffusionSchedule, ridge: float = 1e-6,
                       n_bins: int = 10, n_rep: int = 2, seed: int = 0
                       ) -> CombinedDenoiser:
    """Fit per-sigma-bin scalar weights w_i by least squares on noisy draws
    from the calibration set. Returns a new combiner with weights folded in.
    """
    if calib_set.kind != "full" or calib_set.N == 0:
        raise ConfigError("calibration set must be nonempty full-resolution")
    edges = schedule.sigma_bins(n_bins)
    n_views = len(combined.views)
    weights = np.ones((n_bins, n_views))
    warnings = []
    rng = substream(seed, _STREAM_CALIB)
    x0 = calib_set.samples
    for b in range(n_bins):
        lo, hi = edges[b], edges[b + 1]
        preds, targets = [], []
        for _ in range(n_rep):
            sig = np.exp(rng.uniform(np.log(lo), np.log(hi), size=x0.shape[0]))
            x_t = x0 + sig[:, None] * rng.standard_normal(x0.shape)
            cols = [branch.predict(x_t, sig).reshape(-1)
                    for branch in combined.views]
            preds.append(np.stack(cols, axis=1))
            targets.append(x0.reshape(-1))
        M = np.concatenate(preds, axis=0)
        y = np.concatenate(targets)
        norms = np.linalg.norm(M, axis=0)
        if np.all(norms < 1e-12):
            warnings.append({"bin": b, "reason": "all view outputs zero"})
            continue
        try:
            weights[b] = solve_least_squares(M, y, ridge=ridge)
        except NumericError:
            warnings.append({"bin": b, "reason": "singular design"})
    return replace(combined, weight_edges=edges, weights=weights,
                   calibration_warnings=warnings)


def fit_range_adapter(combined: CombinedDenoiser, calib_set: Dataset,
                      schedule: DiffusionSchedule, n_bins: int = 100,
                      n_rep: int = 2, seed: int = 0, floor: float = 1e-8
                      ) -> RangeAdapter:
    """Per-bin, per-coordinate RMS of the stage-1 residual
    x_0 - stage1(x_t, sigma); the envelope bounds each output coordinate,
    so ||f_0|| <= s(sigma) * sqrt(m) * U."""
    if calib_set.N == 0:
        raise ConfigError("calibration set must be nonempty")
    edges = schedule.sigma_bins(n_bins)
    centers = np.sqrt(edges[:-1] * edges[1:])
    values = np.full(n_bins, np.nan)
    rng = substream(seed, _STREAM_ADAPTER)
    x0 = calib_set.samples
    for b in range(n_bins):
        acc = 0.0
        count = 0
        for _ in range(n_rep):
            sig = np.exp(rng.uniform(np.log(edges[b]), np.log(edges[b + 1]),
                                     size=x0.shape[0]))
            x_t = x0 + sig[:, None] * rng.standard_normal(x0.shape)
            r = x0 - combined.stage1(x_t, sig)
            acc += float(np.sum(r * r))
            count += r.size
        if count:
            values[b] = np.sqrt(acc / count)
    # interpolate any empty bins from neighbors
    nan = np.isnan(values)
    if np.all(nan):
        raise NumericError("no adapter bins could be estimated")
    if np.any(nan):
        values[nan] = np.interp(np.log(centers[nan]),
                                np.log(centers[~nan]), values[~nan])
    return RangeAdapter(centers=centers, values=np.maximum(values, floor))


def train_residual(combined: CombinedDenoiser, s0: Dataset,
                   schedule: DiffusionSchedule, cfg: ResidualTrainConfig
                   ) -> tuple[CombinedDenoiser, TrainingCurve]:
    """Train f_0 on the small full-resolution set against the stage-1
    residual, with the requested variance regularization. View networks are
    frozen throughout (only theta_0 is updated)."""
    if s0.kind != "full":
        raise ConfigError("residual training needs a full-resolution dataset")
    if cfg.uses_adapter:
        if combined.adapter is None:
            raise ConfigError("adapter mode requires fit_range_adapter first")
        adapter = combined.adapter
    else:
        adapter = None

    inner = cfg.inner
    data = s0.samples
    m = data.shape[1]
    sigma_data = max(float(data.std()), 1e-3)
    # Baseline reduction: with no views the "residual" is a plain denoiser.
    plain = not combined.views
    net = Denoiser.create(
        dim=m, hidden=inner.hidden, U=combined.U, sigma_data=sigma_data,
        activation=inner.activation, seed=inner.seed,
        skip_mode="edm" if plain else "none",
        out_mode="unit" if cfg.uses_adapter else "edm")
    residual = ResidualDenoiser(net=net, adapter=adapter, output_scale=1.0)

    rng = substream(inner.seed, _STREAM_RESIDUAL)
    opt = Optimizer(net.params.flat(), inner)
    curve = TrainingCurve()

    # fixed constraint batch for the hard cap (one draw per sample)
    cap_rng = substream(inner.seed, _STREAM_CAP)
    cap_xt, cap_sig = _draw_noisy(cap_rng, data, schedule)

    n = data.shape[0]
    steps_per_epoch = max(1, (n + inner.batch_size - 1) // inner.batch_size)
    total = inner.epochs * steps_per_epoch
    if inner.max_steps is not None:
        total = min(total, inner.max_steps)
    initial_loss = None
    step = 0
    while step < total:
        order = rng.permutation(n)
        for b in range(steps_per_epoch):
            if step >= total:
                break
            idx = order[b * inner.batch_size:(b + 1) * inner.batch_size]
            if idx.size == 0:
                continue
            x0 = data[idx]
            x_t, sig = _draw_noisy(rng, x0, schedule)
            resid_target = x0 - combined.stage1(x_t, sig)
            scale = residual.envelope(sig)
            safe = np.maximum(scale, 1e-12)
            grads, loss = net.backward(x_t, sig, resid_target / safe[:, None],
                                       loss_weight=safe**2,
                                       l2_output=cfg.lam)
            opt.step(grads)
            if initial_loss is None:
                initial_loss = max(loss, 1e-12)
            if loss > 1e3 * initial_loss:
                raise DivergenceError(
                    f"residual training diverged at step {step}", step=step)
            curve.record(step, loss)
            step += 1
        if cfg.hard_cap is not None:
            _project_hard_cap(residual, cap_xt, cap_sig, cfg.hard_cap)
    if cfg.hard_cap is not None:
        _project_hard_cap(residual, cap_xt, cap_sig, cfg.hard_cap)
    return replace(combined, residual=residual), curve


def _project_hard_cap(residual: ResidualDenoiser, x_t, sig, cap: float
                      ) -> None:
    """Rescale f_0 so sum_n ||f_0(x_{n,t})||^2 <= cap on the fixed batch.

    f_0 is linear in output_scale (the clamp sits inside), so the rescale
    lands exactly on the cap when it binds.
    """
    out = residual(x_t, sig)
    total = float(np.sum(out * out))
    if total > cap and total > 0:
        residual.output_scale *= float(np.sqrt(cap / total))


def residual_output_energy(residual: ResidualDenoiser, s0: Dataset,
                           schedule: DiffusionSchedule, seed: int = 0
                           ) -> float:
    """(1/N0) sum_n ||f_0(x_{n,t})||^2 on a fixed seeded draw."""
    rng = substream(seed, _STREAM_CAP)
    x_t, sig = _draw_noisy(rng, s0.samples, schedule)
    out = residual(x_t, sig)
    return float(np.mean(np.sum(out * out, axis=1)))


# ---------------------------------------------------------------------------
# full two-stage pipeline with artifact persistence


_STREAM_S0 = 1
_STREAM_CALIB_DATA = 2
_STREAM_VIEW_BASE = 100


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _array_hash(a: np.ndarray) -> str:
    return _sha256(np.ascontiguousarray(a).astype("<f8").tobytes())


class StageError(BootdiffError):
    """A pipeline stage failed; `stage` names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[stage:{stage}] {cause}")
        self.stage = stage
        self.cause = cause


def train_config_from_dict(doc: dict) -> TrainConfig:
    doc = dict(doc)
    doc["betas"] = tuple(doc["betas"])
    doc["hidden"] = tuple(doc["hidden"])
    return TrainConfig(**doc)


def residual_config_from_dict(doc: dict) -> ResidualTrainConfig:
    doc = dict(doc)
    doc["inner"] = train_config_from_dict(doc["inner"])
    return ResidualTrainConfig(**doc)


def save_combined(combined: CombinedDenoiser, out_dir: str | Path) -> dict:
    """Persist all combiner artifacts under out_dir; returns {name: sha256}."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}

    def _write(name: str, data: bytes):
        (out / name).write_bytes(data)
        files[name] = _sha256(data)

    index = {"U": combined.U, "m": combined.m,
             "n_views": len(combined.views),
             "has_residual": combined.residual is not None,
             "has_adapter": combined.adapter is not None,
             "calibration_warnings": combined.calibration_warnings}
    for i, branch in enumerate(combined.views):
        _write(f"view_{i}.op.json", branch.op.to_json().encode())
        branch.model.save(out / f"view_{i}.net.bin")
        files[f"view_{i}.net.bin"] = _sha256(
            (out / f"view_{i}.net.bin").read_bytes())
    if combined.weights is not None:
        _write("weights.json", json.dumps(
            {"edges": combined.weight_edges.tolist(),
             "weights": combined.weights.tolist()}).encode())
    if combined.adapter is not None:
        _write("adapter.json", combined.adapter.to_json().encode())
    if combined.residual is not None:
        r = combined.residual
        r.net.save(out / "residual.net.bin")
        files["residual.net.bin"] = _sha256(
            (out / "residual.net.bin").read_bytes())
        _write("residual.json", json.dumps(
            {"output_scale": r.output_scale,
             "has_adapter": r.adapter is not None}).encode())
    _write("combined.json", json.dumps(index, sort_keys=True).encode())
    return files


def load_combined(out_dir: str | Path) -> CombinedDenoiser:
    out = Path(out_dir)
    index = json.loads((out / "combined.json").read_text())
    views = []
    for i in range(index["n_views"]):
        op = ViewOperator.from_json((out / f"view_{i}.op.json").read_text())
        model = Denoiser.load(out / f"view_{i}.net.bin")
        views.append(ViewBranch(op=op, model=model))
    edges = weights = None
    if (out / "weights.json").exists():
        doc = json.loads((out / "weights.json").read_text())
        edges = np.array(doc["edges"])
        weights = np.array(doc["weights"])
    adapter = None
    if index["has_adapter"]:
        adapter = RangeAdapter.from_json((out / "adapter.json").read_text())
    residual = None
    if index["has_residual"]:
        rdoc = json.loads((out / "residual.json").read_text())
        residual = ResidualDenoiser(
            net=Denoiser.load(out / "residual.net.bin"),
            adapter=adapter if rdoc["has_adapter"] else None,
            output_scale=rdoc["output_scale"])
    return CombinedDenoiser(
        U=index["U"], m=index["m"], views=views, weight_edges=edges,
        weights=weights, residual=residual, adapter=adapter,
        calibration_warnings=index.get("calibration_warnings", []))


def run_algorithm1(spec: DataSpec, operators: list[ViewOperator],
                   view_sizes: list[int], n0: int,
                   schedule: DiffusionSchedule, view_cfg: TrainConfig,
                   residual_cfg: ResidualTrainConfig,
                   out_dir: str | Path | None = None, seed: int = 0,
                   calib_size: int = 256, calibrate_on_s0: bool = False,
                   n_weight_bins: int = 10, n_adapter_bins: int = 100,
                   parallel: bool = False
                   ) -> tuple[CombinedDenoiser, dict]:
    """End-to-end two-stage pipeline.

    Generates the small full-resolution set S0 and one projected dataset per
    operator, trains each view denoiser, calibrates the combiner on held-out
    full-resolution draws (or on S0 when calibrate_on_s0), fits the range
    adapter if the residual config asks for one, trains the residual, and
    persists all artifacts plus a manifest when out_dir is given.

    parallel=True trains view networks on a thread pool; every stream is
    keyed by (seed, view index), so results are bit-identical to a serial
    run.
    """
    if len(operators) != len(view_sizes):
        raise ConfigError("need one dataset size per view operator")

    record: dict = {"config": {
        "spec": json.loads(spec_to_json(spec)),
        "operators": [json.loads(op.to_json()) for op in operators],
        "view_sizes": list(view_sizes), "n0": int(n0),
        "schedule": json.loads(schedule.to_json()),
        "view_cfg": asdict(view_cfg), "residual_cfg": asdict(residual_cfg),
        "seed": int(seed), "calib_size": int(calib_size),
        "calibrate_on_s0": bool(calibrate_on_s0),
        "n_weight_bins": int(n_weight_bins),
        "n_adapter_bins": int(n_adapter_bins),
    }, "stages": [], "hashes": {}}

    def _stage(name):
        record["stages"].append(name)
        return name

    try:
        name = _stage("datasets")
        s0 = sample_dataset(spec, n0, stream=_STREAM_S0)
        calib = s0 if calibrate_on_s0 else \
            sample_dataset(spec, calib_size, stream=_STREAM_CALIB_DATA)
        view_sets = []
        for i, (op, n_i) in enumerate(zip(operators, view_sizes)):
            full = sample_dataset(spec, n_i, stream=_STREAM_VIEW_BASE + i)
            view_sets.append(project_dataset(full, op))
        record["hashes"]["s0"] = _array_hash(s0.samples)
        for i, ds in enumerate(view_sets):
            record["hashes"][f"view_data_{i}"] = _array_hash(ds.samples)

        name = _stage("train_views")

        def _train_one(i: int):
            op, ds = operators[i], view_sets[i]
            return train_view_denoiser(
                ds, schedule.scaled(op.noise_gain), view_cfg, U=spec.U,
                stream=i)

        if parallel and operators:
            with ThreadPoolExecutor(max_workers=len(operators)) as pool:
                trained = list(pool.map(_train_one, range(len(operators))))
        else:
            trained = [_train_one(i) for i in range(len(operators))]
        views = [ViewBranch(op=op, model=model)
                 for op, (model, _) in zip(operators, trained)]
        record["view_curves"] = [
            {"final_loss": curve.losses[-1] if curve.losses else None,
             "steps": len(curve.steps)} for _, curve in trained]
        combined = CombinedDenoiser(U=spec.U, m=spec.m, views=views)
        for i, branch in enumerate(views):
            record["hashes"][f"view_net_{i}"] = branch.model.param_hash()

        if views:
            name = _stage("calibrate")
            combined = calibrate_combiner(combined, calib, schedule,
                                          n_bins=n_weight_bins, seed=seed)
            record["hashes"]["weights"] = _array_hash(combined.weights)

        if residual_cfg.uses_adapter:
            name = _stage("adapter")
            adapter = fit_range_adapter(combined, calib, schedule,
                                        n_bins=n_adapter_bins, seed=seed)
            combined = replace(combined, adapter=adapter)
            record["hashes"]["adapter"] = _array_hash(adapter.values)

        name = _stage("train_residual")
        combined, curve = train_residual(combined, s0, schedule, residual_cfg)
        record["residual_curve"] = {
            "final_loss": curve.losses[-1] if curve.losses else None,
            "steps": len(curve.steps)}
        record["hashes"]["residual_net"] = combined.residual.net.param_hash()
        record["hashes"]["residual_scale"] = _sha256(
            repr(float(combined.residual.output_scale)).encode())
    except BootdiffError as e:
        raise StageError(name, e) from e

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_dataset(s0, out / "s0.bdl")
        for i, ds in enumerate(view_sets):
            save_dataset(ds, out / f"view_data_{i}.bdl")
        files = save_combined(combined, out)
        files["s0.bdl"] = _sha256((out / "s0.bdl").read_bytes())
        for i in range(len(view_sets)):
            fname = f"view_data_{i}.bdl"
            files[fname] = _sha256((out / fname).read_bytes())
        record["files"] = files
        (out / "manifest.json").write_text(
            json.dumps(record, sort_keys=True, indent=1))
    return combined, record


def run_from_manifest(manifest: dict | str | Path,
                      out_dir: str | Path | None = None, parallel: bool = False
                      ) -> tuple[CombinedDenoiser, dict]:
    """Re-execute run_algorithm1 from a manifest's embedded config."""
    if not isinstance(manifest, dict):
        manifest = json.loads(Path(manifest).read_text())
    cfg = manifest["config"]
    return run_algorithm1(
        spec=spec_from_json(json.dumps(cfg["spec"])),
        operators=[ViewOperator.from_json(json.dumps(d))
                   for d in cfg["operators"]],
        view_sizes=cfg["view_sizes"], n0=cfg["n0"],
        schedule=DiffusionSchedule(**cfg["schedule"]),
        view_cfg=train_config_from_dict(cfg["view_cfg"]),
        residual_cfg=residual_config_from_dict(cfg["residual_cfg"]),
        out_dir=out_dir, seed=cfg["seed"], calib_size=cfg["calib_size"],
        calibrate_on_s0=cfg["calibrate_on_s0"],
        n_weight_bins=cfg["n_weight_bins"],
        n_adapter_bins=cfg["n_adapter_bins"], parallel=parallel)
