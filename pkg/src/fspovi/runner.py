"""Config-driven experiment runner.

A run reads a JSON config (validated against ``CONFIG_SCHEMA``; unknown
keys are rejected), trains or samples, and writes into its output
directory:

* ``config.json``: the resolved config (defaults filled in)
* ``metrics.csv``: per-iteration / per-epoch / per-round metrics
* ``checkpoint.bin``: final particles (see ``fspovi.checkpoint``)
* ``summary.json``: final numbers, machine readable
* ``bands.csv``: credible bands on a grid (``toy1d`` and ``hmc-ref``)

All CSVs are UTF-8 with a header row and ``%.17g`` floats.
"""
from __future__ import annotations

import copy
import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import bandit as bd
from . import data as dt
from . import metrics as mt
from . import nn, oracles
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .function_space import (METHODS, Adam, ComposedBatch, ParticleEnsemble, Sgd, TrainSettings,
                             fpovi_step, train_step)
from .kernels import BANDWIDTH_RULES
from .oracles import NumericalError, mvn_fit, mvn_kl
from .priors import FixedGaussian, GaussianWeightPrior, InferredGaussian

EXPERIMENTS = ("toy1d", "exact-gp", "uci", "bandit", "hmc-ref")


class ConfigError(ValueError):
    pass


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int1 = {"type": "integer", "minimum": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "additionalProperties": False,
            "required": list(required)}


CONFIG_SCHEMA = _obj({
    "experiment": {"enum": list(EXPERIMENTS)},
    "method": {"enum": list(METHODS)},
    "kernel_choice": {"enum": ["rbf_on_weights", "function_value", "activation"]},
    "bandwidth": {"enum": list(BANDWIDTH_RULES)},
    "network": _obj({"hidden": {"type": "array", "items": _int1},
                     "activation": {"enum": ["relu"]}}),
    "n_particles": _int1,
    "optimizer": _obj({"kind": {"enum": ["constant", "adam"]}, "lr": _pos}),
    "batch_size": _int1,
    "prior_batch": _int1,
    "k_draws": {"type": "integer", "minimum": 2},
    "iterations": {"type": "integer", "minimum": 0},
    "epochs": {"type": "integer", "minimum": 0},
    "eval_every": _int1,
    "seed": {"type": "integer", "minimum": 0},
    "splits": _int1,
    "test_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    "dataset": {"type": "string"},
    "target_column": {"type": ["integer", "string"]},
    "prior": _obj({"sigma_w": {"type": "number", "minimum": 0},
                   "sigma_b": {"type": "number", "minimum": 0}}),
    "noise": _obj({"kind": {"enum": ["fixed", "inferred"]}, "variance": _pos,
                   "alpha": _pos, "beta": _pos, "init_variance": _pos}),
    "grid": _obj({"lo": _num, "hi": _num, "n": {"type": "integer", "minimum": 2}}),
    "band_level": {"type": "number", "minimum": 0, "maximum": 1},
    "bandit": _obj({
        "env": {"enum": ["wheel", "mushroom"]},
        "agent": {"enum": ["particle", "uniform", "oracle"]},
        "horizon": {"type": "integer", "minimum": 0},
        "delta": _pos, "mu1": _num, "mu2": _num, "mu3": _num,
        "sigma_r": {"type": "number", "minimum": 0},
        "retrain_every": _int1, "steps_per_retrain": {"type": "integer", "minimum": 0},
        "mushroom_csv": {"type": "string"},
    }),
    "exact_gp": _obj({
        "variants": {"type": "array", "items": {"enum": ["exact", "parametric", "minibatch"]},
                     "minItems": 1, "uniqueItems": True},
        "init": {"enum": ["prior", "isotropic"]}, "init_scale": _pos, "exact_step": _pos,
        "minibatch_size": _int1,
        "lengthscale": _pos, "noise_std": _pos, "nugget": {"type": "number", "minimum": 0},
    }),
    "hmc": _obj({"step": _pos, "n_leapfrog": _int1, "n_samples": _int1,
                 "burn_in": {"type": "integer", "minimum": 0}, "chains": _int1, "thin": _int1}),
    "out": {"type": "string"},
}, required=["experiment"])

_COMMON = {
    "method": "fsvgd", "kernel_choice": "rbf_on_weights", "bandwidth": "median_log",
    "network": {"hidden": [50, 50], "activation": "relu"},
    "optimizer": {"kind": "adam", "lr": 0.004},
    "batch_size": 100, "prior_batch": 4, "k_draws": 40,
    "seed": 0, "prior": {"sigma_w": 1.0, "sigma_b": 1.0},
    "noise": {"kind": "inferred", "variance": 0.01, "alpha": 1.0, "beta": 0.1, "init_variance": 0.1},
    "band_level": 0.95,
}

# the toy model: known data-noise variance and a prior broad enough to fit the data
_TOY_MODEL = {"noise": {"kind": "fixed", "variance": 0.0009}, "prior": {"sigma_w": 2.0, "sigma_b": 2.0}}

DEFAULTS = {
    "toy1d": {"n_particles": 50, "iterations": 3000, "eval_every": 100,
              "grid": {"lo": -0.25, "hi": 1.25, "n": 151}, **_TOY_MODEL},
    # step tuned by hand for ~80% acceptance under the toy model
    "hmc-ref": {"n_particles": 1, "grid": {"lo": -0.25, "hi": 1.25, "n": 151}, **_TOY_MODEL,
                "hmc": {"step": 3e-4, "n_leapfrog": 30, "n_samples": 1000, "burn_in": 3000,
                        "chains": 4, "thin": 10}},
    "exact-gp": {"n_particles": 200, "iterations": 5000, "eval_every": 1,
                 "optimizer": {"kind": "adam", "lr": 1e-3},
                 "exact_gp": {"variants": ["exact", "parametric", "minibatch"], "init": "isotropic",
                              "init_scale": 0.1, "exact_step": 1e-3,
                              "minibatch_size": 5, "lengthscale": 0.5, "noise_std": 0.1,
                              "nugget": 1e-3}},
    "uci": {"n_particles": 20, "epochs": 500, "eval_every": 50, "splits": 5, "test_fraction": 0.1,
            "dataset": "boston", "target_column": -1,
            "network": {"hidden": [50], "activation": "relu"}},
    "bandit": {"n_particles": 20, "network": {"hidden": [100, 100], "activation": "relu"},
               "optimizer": {"kind": "adam", "lr": 1e-3}, "batch_size": 64,
               # a fixed unit noise keeps the rare 50-rewards from being explained away as noise
               "noise": {"kind": "fixed", "variance": 1.0},
               "bandit": {"env": "wheel", "agent": "particle", "horizon": 5000, "delta": 0.95,
                          "mu1": 1.2, "mu2": 1.0, "mu3": 50.0, "sigma_r": 0.01,
                          "retrain_every": 50, "steps_per_retrain": 100}},
}

FIXTURES = {"boston": "boston_housing.csv"}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate_config(cfg: dict) -> None:
    v = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    errors = sorted(v.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {e.message}")


def resolve_config(cfg: dict, seed: int | None = None, out: str | None = None) -> dict:
    """Validate ``cfg`` and fill in the defaults for its experiment kind."""
    validate_config(cfg)
    full = _merge(_merge(_COMMON, DEFAULTS[cfg["experiment"]]), cfg)
    if seed is not None:
        full["seed"] = int(seed)
    if out is not None:
        full["out"] = str(out)
    full.setdefault("out", f"runs/{full['experiment']}-{full['seed']}")
    validate_config(full)
    if full["experiment"] == "bandit" and full["bandit"]["env"] == "mushroom" \
            and "mushroom_csv" not in full["bandit"]:
        raise ConfigError("config error at bandit/mushroom_csv: required for the mushroom bandit")
    return full


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None


# --- output helpers --------------------------------------------------------------------

def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


class CsvWriter:
    """Row-at-a-time CSV writer; each row is flushed so partial runs keep their output."""

    def __init__(self, path, header):
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(header)

    def write(self, row):
        self._w.writerow([fmt(v) for v in row])
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_csv(path, header, rows):
    with CsvWriter(path, header) as w:
        for r in rows:
            w.write(r)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- building blocks ---------------------------------------------------------------------

def make_optimizer(cfg):
    o = cfg["optimizer"]
    return Adam(o["lr"]) if o["kind"] == "adam" else Sgd(o["lr"])


def make_noise(cfg):
    nz = cfg["noise"]
    if nz["kind"] == "fixed":
        return FixedGaussian(nz["variance"])
    return InferredGaussian(alpha=nz["alpha"], beta=nz["beta"],
                            init_log_var=float(np.log(nz["init_variance"])))


def make_prior(cfg):
    return GaussianWeightPrior(cfg["prior"]["sigma_w"], cfg["prior"]["sigma_b"])


def make_spec(cfg, d_in, d_out):
    net = cfg["network"]
    return nn.NetworkSpec((d_in, *net["hidden"], d_out), net["activation"])


def make_settings(cfg):
    return TrainSettings(method=cfg["method"], batch_size=cfg["batch_size"],
                         prior_batch=cfg["prior_batch"], k_draws=cfg["k_draws"],
                         kernel_choice=cfg["kernel_choice"], bandwidth=cfg["bandwidth"])


def noise_record(noise) -> dict:
    if isinstance(noise, FixedGaussian):
        return {"kind": "fixed", "variance": noise.variance}
    if isinstance(noise, InferredGaussian):
        return {"kind": "inferred", "alpha": noise.alpha, "beta": noise.beta}
    return {"kind": "none"}


def ensemble_noise_var(ens: ParticleEnsemble, noise):
    v = ens.noise_var(noise)
    return 0.0 if v is None else v


def streams(seed: int, k: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(k)]


@dataclass
class RunResult:
    status: int
    out: Path
    summary: dict = field(default_factory=dict)
    error: str | None = None


# --- experiments ---------------------------------------------------------------------------

def _bands(means, noise_var, level, rng):
    mlo, mhi = mt.credible_band(means, level=level, mode="mean")
    plo, phi = mt.credible_band(means, noise_var, level=level, mode="predictive", rng=rng)
    return mlo, mhi, plo, phi


def _grid(cfg):
    g = cfg["grid"]
    return np.linspace(g["lo"], g["hi"], g["n"])


GAP = (0.6, 0.8)


def write_bands(path, x, means, noise_var, level, rng):
    mlo, mhi, plo, phi = _bands(means, noise_var, level, rng)
    mean = means.mean(axis=0)
    write_csv(path, ["x", "mean", "mean_lo", "mean_hi", "pred_lo", "pred_hi"],
              zip(x, mean, mlo, mhi, plo, phi))
    gap = (x > GAP[0]) & (x < GAP[1])
    return {"gap_mean_band_width": float(np.mean((mhi - mlo)[gap])) if gap.any() else None,
            "mean_band_width": float(np.mean(mhi - mlo))}


def run_toy1d(cfg, out: Path, mw: CsvWriter | None):
    r_data, r_init, r_train, r_band, r_test = streams(cfg["seed"], 5)
    ds = dt.gen_synthetic_1d(r_data)
    spec = make_spec(cfg, 1, 1)
    prior, noise, opt = make_prior(cfg), make_noise(cfg), make_optimizer(cfg)
    settings = make_settings(cfg)
    ens = ParticleEnsemble.from_prior(spec, cfg["n_particles"], prior, r_init, noise)
    nu = dt.KdeSampler.silverman(ds.X)
    x = _grid(cfg)
    gap = (x > GAP[0]) & (x < GAP[1])
    ckpt_state = {"ens": ens}
    try:
        for it in range(1, cfg["iterations"] + 1):
            ens = train_step(ens, ds, nu, settings, prior, noise, opt, r_train)
            ckpt_state["ens"] = ens
            if it % cfg["eval_every"] == 0 or it == cfg["iterations"]:
                f_tr = ens.predict(ds.X)[..., 0]
                var = ensemble_noise_var(ens, noise)
                f_g = ens.predict(x[:, None])[..., 0]
                lo, hi = mt.credible_band(f_g, level=cfg["band_level"])
                mw.write([it, mt.rmse(f_tr, ds.Y), mt.mixture_nll(f_tr, var, ds.Y),
                          float(np.mean((hi - lo)[gap])), float(np.mean(var))])
    finally:
        _save(out, ckpt_state["ens"], noise, cfg)
    var = ensemble_noise_var(ens, noise)
    means = ens.predict(x[:, None])[..., 0]
    summ = write_bands(out / "bands.csv", x, means, var, cfg["band_level"], r_band)
    f_tr = ens.predict(ds.X)[..., 0]
    test = toy_test_set(r_test)
    f_te = ens.predict(test.X)[..., 0]
    summ.update(train_rmse=mt.rmse(f_tr, ds.Y), train_nll=mt.mixture_nll(f_tr, var, ds.Y),
                test_rmse=mt.rmse(f_te, test.Y), test_nll=mt.mixture_nll(f_te, var, test.Y),
                noise_var=float(np.mean(var)))
    return summ


def toy_test_set(rng, draws: int = 10) -> dt.Dataset:
    """Held-out points from the toy generating process (``20 * draws`` rows)."""
    parts = [dt.gen_synthetic_1d(rng) for _ in range(draws)]
    return dt.Dataset(np.concatenate([p.X for p in parts]), np.concatenate([p.Y for p in parts]))


def _save(out, ens, noise, cfg, extra=None):
    save_checkpoint(Checkpoint(ens, noise_record(noise), cfg, cfg["seed"], extra or {}),
                    out / "checkpoint.bin")


def toy_log_posterior(spec, prior: GaussianWeightPrior, noise, X, Y):
    """Log density and gradient over ``z = [theta, log sigma^2]`` (or ``theta`` for fixed noise)."""
    var_w = prior.variances(spec)
    y = np.asarray(Y, dtype=np.float64).reshape(-1)
    inferred = isinstance(noise, InferredGaussian)
    D = spec.n_params

    def split(z):
        z = np.atleast_2d(z)
        if inferred:
            return z[:, :D], z[:, D]
        return z, np.full(len(z), np.log(noise.variance))

    def logp(z):
        th, s = split(z)
        f = nn.forward(th, spec, X)[..., 0]
        r = y - f
        ll = -0.5 * len(y) * (np.log(2 * np.pi) + s) - 0.5 * np.sum(r ** 2, axis=1) / np.exp(s)
        lp = -0.5 * np.sum(th ** 2 / var_w, axis=1)
        if inferred:
            lp = lp - noise.alpha * s - noise.beta * np.exp(-s)
        return ll + lp

    def grad(z):
        th, s = split(z)
        f = nn.forward(th, spec, X)[..., 0]
        r = y - f
        g = nn.backprop_top_signal(th, spec, X, (r / np.exp(s)[:, None])[..., None]) - th / var_w
        if not inferred:
            return g
        gs = -0.5 * len(y) + 0.5 * np.sum(r ** 2, axis=1) / np.exp(s) - noise.alpha \
            + noise.beta * np.exp(-s)
        return np.column_stack([g, gs])

    return logp, grad


def run_hmc_ref(cfg, out: Path, mw: CsvWriter):
    r_data, r_init, r_hmc, r_band = streams(cfg["seed"], 4)
    ds = dt.gen_synthetic_1d(r_data)
    spec = make_spec(cfg, 1, 1)
    prior, noise = make_prior(cfg), make_noise(cfg)
    h = cfg["hmc"]
    logp, grad = toy_log_posterior(spec, prior, noise, ds.X, ds.Y)
    th0 = prior.sample(spec, h["chains"], r_init)
    inferred = isinstance(noise, InferredGaussian)
    x0 = np.column_stack([th0, np.full(h["chains"], noise.init_log_var)]) if inferred else th0
    try:
        res = oracles.hmc_sample(logp, grad, x0, step=h["step"], n_leapfrog=h["n_leapfrog"],
                                 n_samples=h["n_samples"], burn_in=h["burn_in"], rng=r_hmc,
                                 thin=h["thin"])
    except oracles.ConfigurationError as e:
        raise ConfigError(f"config error at hmc/step: {e}") from None
    S = res.samples.reshape(-1, x0.shape[1])
    acc = np.atleast_1d(res.acceptance_rate)
    for c, a in enumerate(acc):
        mw.write([c, float(a)])
    th = S[:, :spec.n_params]
    log_noise = S[:, spec.n_params] if inferred else None
    ens = ParticleEnsemble(th, spec, log_noise)
    _save(out, ens, noise, cfg)
    x = _grid(cfg)
    means = ens.predict(x[:, None])[..., 0]
    var = ensemble_noise_var(ens, noise)
    summ = write_bands(out / "bands.csv", x, means, var, cfg["band_level"], r_band)
    summ.update(acceptance=float(acc.mean()), n_samples=int(len(S)))
    return summ


def run_exact_gp(cfg, out: Path, mw: CsvWriter):
    r_data, r_exact, r_init, r_mb_init, r_mb = streams(cfg["seed"], 5)
    eg = cfg["exact_gp"]
    prob = oracles.finite_gp_problem(r_data, lengthscale=eg["lengthscale"],
                                     noise_std=eg["noise_std"], nugget=eg["nugget"])
    post = prob.posterior_test().as_gaussian()
    baseline = mvn_kl(prob.baseline_test().as_gaussian(), post)
    flow = METHODS[cfg["method"]][1]
    if flow is None or METHODS[cfg["method"]][0] != "function":
        raise ConfigError("config error at method: exact-gp needs a function-space method")
    n, iters, bw = cfg["n_particles"], cfg["iterations"], cfg["bandwidth"]
    X = prob.x_all[:, None]
    tr, te = prob.train_idx, prob.test_idx
    y = prob.y_train[:, None]
    spec = make_spec(cfg, 1, 1)
    prior_w = make_prior(cfg)
    lik = FixedGaussian(prob.noise_var)
    variants = eg["variants"]
    state = {}
    exact_prior = prob.prior()
    if "exact" in variants:
        if eg["init"] == "prior":
            F0 = exact_prior.mean + r_exact.standard_normal((n, len(X))) @ exact_prior.chol.T
        else:
            F0 = eg["init_scale"] * r_exact.standard_normal((n, len(X)))
        # function values are the parameters here: plain Euler steps
        state["exact"] = [F0, eg["exact_step"]]
    if "parametric" in variants:
        state["parametric"] = [ParticleEnsemble.from_prior(spec, n, prior_w, r_init), make_optimizer(cfg)]
    if "minibatch" in variants:
        state["minibatch"] = [ParticleEnsemble.from_prior(spec, n, prior_w, r_mb_init), make_optimizer(cfg)]
    full_idx = np.concatenate([tr, te])
    full_prior = prob.prior(full_idx)
    b_prime = min(eg["minibatch_size"], len(tr))

    def test_values(name):
        s = state[name][0]
        return s[:, te] if name == "exact" else s.predict(X[te])[..., 0]

    try:
        for it in range(1, iters + 1):
            row = [it]
            for name in ("exact", "parametric", "minibatch"):
                if name not in state:
                    continue
                s, opt = state[name]
                if name == "exact":
                    s = oracles.exact_fpovi_step(s, flow, exact_prior, tr, prob.y_train,
                                                 prob.noise_var, opt, bw)
                elif name == "parametric":
                    batch = ComposedBatch(X[tr], y, X[te], prior_on="all", n_total=len(tr))
                    s = fpovi_step(s, batch, flow, full_prior, lik, opt, bw)
                else:
                    pick = np.sort(r_mb.choice(len(tr), size=b_prime, replace=False))
                    batch = ComposedBatch(X[tr[pick]], y[pick], X[te], prior_on="all",
                                          n_total=len(tr))
                    s = fpovi_step(s, batch, flow, prob.prior(np.concatenate([tr[pick], te])),
                                   lik, opt, bw)
                state[name][0] = s
            if it % cfg["eval_every"] == 0 or it == iters:
                for name in ("exact", "parametric", "minibatch"):
                    if name in state:
                        row.append(mvn_kl(mvn_fit(test_values(name)), post))
                mw.write(row)
    finally:
        if "parametric" in state:
            _save(out, state["parametric"][0], lik, cfg)
    summ = {"baseline_kl": baseline}
    for name in state:
        summ[f"final_kl_{name}"] = mvn_kl(mvn_fit(test_values(name)), post)
    return summ


def _dataset(cfg):
    name = cfg["dataset"]
    path = dt.bundled_path(FIXTURES[name]) if name in FIXTURES else Path(name)
    if not Path(path).exists():
        raise ConfigError(f"config error at dataset: file {path} does not exist")
    return dt.load_csv(path, cfg["target_column"])


def run_uci(cfg, out: Path, mw: CsvWriter):
    ds = _dataset(cfg)
    prior, settings = make_prior(cfg), make_settings(cfg)
    results = []
    ens = None
    noise = make_noise(cfg)
    for split in range(cfg["splits"]):
        r_split, r_init, r_train = streams(cfg["seed"] * 1000 + split, 3)
        train_raw, test_raw = dt.split(ds, cfg["test_fraction"], r_split)
        train = dt.standardize(train_raw)
        test = dt.apply_standardization(test_raw, train)
        spec = make_spec(cfg, ds.X.shape[1], 1)
        opt = make_optimizer(cfg)
        ens = ParticleEnsemble.from_prior(spec, cfg["n_particles"], prior, r_init, noise)
        nu = dt.KdeSampler.silverman(train.X)
        per_epoch = math.ceil(len(train) / min(cfg["batch_size"], len(train)))
        ys = float(train.y_std[0])
        rm = nll = float("nan")
        for epoch in range(1, cfg["epochs"] + 1):
            for _ in range(per_epoch):
                ens = train_step(ens, train, nu, settings, prior, noise, opt, r_train)
            if epoch % cfg["eval_every"] == 0 or epoch == cfg["epochs"]:
                f = ens.predict(test.X)[..., 0]
                var = ensemble_noise_var(ens, noise)
                rm = mt.rmse(train.destandardize_y(f), test_raw.Y)
                nll = mt.mixture_nll(f, var, test.Y, y_scale=ys)
                mw.write([split, epoch, rm, nll])
        results.append((rm, nll))
        extra = {"x_mean": train.x_mean, "x_std": train.x_std, "y_mean": train.y_mean,
                 "y_std": train.y_std}
        _save(out, ens, noise, cfg, _jsonable(extra))
    R = np.array(results)
    return {"rmse_per_split": R[:, 0], "nll_per_split": R[:, 1],
            "rmse_mean": float(R[:, 0].mean()), "rmse_std": float(R[:, 0].std()),
            "nll_mean": float(R[:, 1].mean()), "nll_std": float(R[:, 1].std())}


def make_bandit_env(cfg):
    b = cfg["bandit"]
    if b["env"] == "wheel":
        return bd.WheelEnv(bd.WheelConfig(b["delta"], b["mu1"], b["mu2"], b["mu3"], b["sigma_r"],
                                          b["horizon"]))
    return bd.MushroomEnv(bd.load_mushroom_csv(b["mushroom_csv"]))


def run_bandit(cfg, out: Path, mw: CsvWriter):
    r_init, r_loop = streams(cfg["seed"], 2)
    b = cfg["bandit"]
    env = make_bandit_env(cfg)
    noise = make_noise(cfg)
    if b["agent"] == "uniform":
        agent = bd.UniformAgent(env.n_actions)
    elif b["agent"] == "oracle":
        agent = bd.OracleAgent()
    else:
        spec = make_spec(cfg, env.context_dim, env.n_actions)
        agent = bd.ParticleAgent(spec, cfg["n_particles"], make_settings(cfg), r_init,
                                 make_prior(cfg), noise, cfg["optimizer"]["lr"])
        if cfg["optimizer"]["kind"] == "constant":
            agent.opt = Sgd(cfg["optimizer"]["lr"])
    cum = [0.0]

    def log_round(t, trace):
        reg = trace.optimal_means[-1] - trace.chosen_means[-1]
        cum[0] += reg
        mw.write([t + 1, trace.actions[-1], trace.rewards[-1], reg, cum[0]])

    try:
        trace = bd.thompson_loop(agent, env, b["horizon"], r_loop, b["retrain_every"],
                                 b["steps_per_retrain"], callback=log_round)
    finally:
        if isinstance(agent, bd.ParticleAgent):
            _save(out, agent.ens, noise, cfg)
    return {"cumulative_regret": bd.cumulative_regret(trace), "rounds": len(trace)}


RUNNERS = {
    "toy1d": (run_toy1d, ["iteration", "train_rmse", "train_nll", "gap_mean_band_width", "noise_var"]),
    "hmc-ref": (run_hmc_ref, ["chain", "acceptance"]),
    "exact-gp": (run_exact_gp, None),
    "uci": (run_uci, ["split", "epoch", "rmse", "nll"]),
    "bandit": (run_bandit, ["round", "action", "reward", "regret", "cumulative_regret"]),
}


def run(config: dict, seed: int | None = None, out=None) -> RunResult:
    """Run one experiment; returns status 0 on success, 3 on numerical failure."""
    cfg = resolve_config(config, seed, out)
    outdir = Path(cfg["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    _write_json(outdir / "config.json", cfg)
    fn, header = RUNNERS[cfg["experiment"]]
    if header is None:
        header = ["iteration"] + [f"kl_{v}" for v in ("exact", "parametric", "minibatch")
                                  if v in cfg["exact_gp"]["variants"]]
    t0 = time.perf_counter()
    status, err, summ = 0, None, {}
    with CsvWriter(outdir / "metrics.csv", header) as mw:
        try:
            summ = fn(cfg, outdir, mw)
        except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as e:
            status, err = 3, f"{type(e).__name__}: {e}"
    summary = {"experiment": cfg["experiment"], "status": status, "error": err,
               "seconds": time.perf_counter() - t0, "results": summ, "config": cfg}
    _write_json(outdir / "summary.json", summary)
    return RunResult(status, outdir, summ, err)


# --- prediction --------------------------------------------------------------------------

def predict(checkpoint, input_csv, out_csv, level: float = 0.95) -> Path:
    """Particle-averaged predictions for every row of ``input_csv``.

    Columns per output ``k``: ``mean``, ``std`` (epistemic), ``lo``, ``hi``
    (Gaussian-moment predictive interval); suffixed ``_k`` when the network
    has several outputs.
    """
    ck = load_checkpoint(checkpoint)
    ens = ck.ensemble
    _, X = dt.read_numeric_csv(input_csv)
    if X.shape[1] != ens.spec.input_dim:
        raise dt.DataFormatError(
            f"{input_csv}: {X.shape[1]} columns, checkpoint expects {ens.spec.input_dim}")
    ex = ck.extra or {}
    if ex.get("x_mean") is not None:
        X = (X - np.asarray(ex["x_mean"])) / np.asarray(ex["x_std"])
    F = ens.predict(X)
    if ens.log_noise is not None:
        var = np.exp(ens.log_noise).mean()
    else:
        var = ck.noise.get("variance", 0.0) if ck.noise.get("kind") == "fixed" else 0.0
    ym = np.asarray(ex.get("y_mean", 0.0), dtype=np.float64).reshape(-1)
    ys = np.asarray(ex.get("y_std", 1.0), dtype=np.float64).reshape(-1)
    n_out = F.shape[-1]
    cols, header = [], []
    for k in range(n_out):
        s = mt.summarize(F[..., k], var, level)
        scale, shift = ys[k % len(ys)], ym[k % len(ym)]
        suffix = f"_{k}" if n_out > 1 else ""
        cols += [s.mean * scale + shift, s.epistemic_std * scale,
                 s.lower * scale + shift, s.upper * scale + shift]
        header += [f"mean{suffix}", f"std{suffix}", f"lo{suffix}", f"hi{suffix}"]
    write_csv(out_csv, header, zip(*cols))
    return Path(out_csv)
