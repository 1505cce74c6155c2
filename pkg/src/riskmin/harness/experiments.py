"""One runner per experiment kind: config in, (metric map, CSV tables) out.

Metric maps hold only quantities fixed by (config, seed); wall-clock times
and other run-dependent values go to ``timing`` so replay can compare bitwise.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .. import denoise_score as ds
from .. import noisy_labels as nl
from .. import rng as rngmod
from .. import uncertainty as unc
from ..distributions import DiscreteJoint, GaussianMixture
from ..models import TableModel, TrainConfig, exact_step_size, predict, train_supervised
from ..risk import CROSS_ENTROPY, IDENTITY, L2, theorem2_gap_check, zstar_closed_form
from .config import ConfigError, ExperimentConfig


@dataclass
class RunResult:
    metrics: dict
    tables: dict[str, list[dict]] = field(default_factory=dict)
    timing: dict = field(default_factory=dict)


def _p(cfg: ExperimentConfig, key: str, default):
    return cfg.params.get(key, default)


# ---------------------------------------------------------------- exact minimisers


def fit_table_exact(joint: DiscreteJoint, loss: str, iterations: int, seed: int = 0):
    """Full-batch gradient descent on the enumerated risk with a 1/Lipschitz step."""
    head = "softmax" if loss == "cross_entropy" else "identity"
    model = TableModel(joint.n_y, joint.x_support.shape[1], head=head)
    tc = TrainConfig(loss=loss, optimizer="sgd", lr=exact_step_size(joint, loss), batch_size=0,
                     iterations=iterations, checkpoint_every=iterations, seed=seed, select="last")
    train_supervised(model, joint, tc, IDENTITY)
    return predict(model, np.arange(joint.n_y))


def run_theorem1(cfg: ExperimentConfig) -> RunResult:
    n_y, n_x = int(_p(cfg, "n_y", 5)), int(_p(cfg, "n_x", 4))
    iterations = int(_p(cfg, "iterations", 2000))
    gen = rngmod.stream(cfg.seed, "theorem1/joint")
    rows = []
    joint_l2 = DiscreteJoint.random(gen, n_y, n_x)
    joint_ce = DiscreteJoint.random(gen, n_y, n_x, x_support=np.eye(n_x))
    out = {}
    for name, joint, loss in (("l2", joint_l2, L2), ("cross_entropy", joint_ce, CROSS_ENTROPY)):
        fitted = fit_table_exact(joint, loss.kind, iterations, cfg.seed)
        exact = np.stack([zstar_closed_form(loss, joint.conditional(i), IDENTITY, joint.y_support[i], joint.x_support) for i in range(n_y)])
        if name == "l2":
            out["linf_l2"] = float(np.max(np.abs(fitted - exact)))
        else:
            out["max_tv_ce"] = float(np.max(nl.total_variation(fitted, exact)))
        for i in range(n_y):
            rows.append({"loss": name, "y": i, "fitted": fitted[i].tolist(), "closed_form": exact[i].tolist()})
    return RunResult(out, {"theorem1": rows})


# ---------------------------------------------------------------- constant gap


def run_theorem2_gap(cfg: ExperimentConfig) -> RunResult:
    n_joints = int(_p(cfg, "n_joints", 10))
    n_probes = int(_p(cfg, "n_probes", 100))
    n_y, n_x, dim = int(_p(cfg, "n_y", 6)), int(_p(cfg, "n_x", 5)), int(_p(cfg, "dim", 2))
    max_dev = max_c_err = 0.0
    rows = []
    for j in range(n_joints):
        gen = rngmod.stream(cfg.seed, "theorem2/joint", j)
        joint = DiscreteJoint.random(gen, n_y, n_x, x_support=gen.normal(size=(n_x, dim)))
        rep = theorem2_gap_check(joint, IDENTITY, n_probes, gen)
        max_dev = max(max_dev, rep.max_deviation)
        max_c_err = max(max_c_err, abs(rep.c_emp - rep.c_theory))
        rows.append({"joint": j, "c_emp": rep.c_emp, "c_theory": rep.c_theory, "c1": rep.c1, "c2": rep.c2, "max_deviation": rep.max_deviation})
    return RunResult({"max_deviation": max_dev, "max_c_error": max_c_err, "n_joints": n_joints, "n_probes": n_probes}, {"gap": rows})


# ---------------------------------------------------------------- noisy labels


def _train_override(cfg: ExperimentConfig, default: TrainConfig) -> TrainConfig:
    return cfg.train_config(default, seed=default.seed)


def run_noisy_labels(cfg: ExperimentConfig) -> RunResult:
    mode = _p(cfg, "mode", "sweep")
    if mode == "table":
        tcfg = nl.TableNoiseConfig(
            seed=cfg.seed,
            n_draws=int(_p(cfg, "n_draws", 60000)),
            beta=float(_p(cfg, "beta", 0.6)),
            iterations=int(_p(cfg, "iterations", 600)),
        )
        res = nl.run_table_noise_check(tcfg)
        metrics = {"alpha": res["alpha"], "beta": res["beta"]}
        rows = []
        for kind, v in res["kinds"].items():
            metrics[f"{kind}.max_tv"] = v["max_tv"]
            metrics[f"{kind}.ce_gap"] = v["ce_bar_f"] - v["ce_bar_q"]
            rows.append({"noise_type": kind, **v})
        return RunResult(metrics, {"table_check": rows})
    if mode != "sweep":
        raise ConfigError(f"unknown noisy-labels mode {mode!r}")

    base = nl.NoisyLabelConfig()
    source = cfg.dataset.get("source", "blobs")
    mnist = None
    if source == "mnist":
        keys = ("train_images_path", "train_labels_path", "test_images_path", "test_labels_path")
        missing = [k for k in keys if k not in cfg.dataset]
        if missing:
            raise ConfigError(f"[dataset] source=mnist needs {', '.join(missing)}")
        mnist = {k[: -len("_path")]: cfg.dataset[k] for k in keys}
    elif source != "blobs":
        raise ConfigError(f"unknown dataset source {source!r}")
    ncfg = nl.NoisyLabelConfig(
        seed=cfg.seed,
        n_classes=int(cfg.dataset.get("n_classes", base.n_classes)),
        n_per_class=int(cfg.dataset.get("n_per_class", base.n_per_class)),
        test_per_class=int(cfg.dataset.get("test_per_class", base.test_per_class)),
        spread=float(cfg.dataset.get("spread", base.spread)),
        hidden=tuple(cfg.model.get("hidden", base.hidden)),
        betas=tuple(_p(cfg, "betas", base.betas)),
        extra_biased_alphas=tuple(_p(cfg, "extra_biased_alphas", base.extra_biased_alphas)),
        train=_train_override(cfg, base.train),
        mnist=mnist,
    )
    res = nl.run_noisy_label_experiment(ncfg)
    metrics = {"reference_test_acc": res["reference_test_acc"], "dataset_digest": res["dataset_digest"]}
    for r in res["rows"]:
        tag = f"{r['noise_type']}@{r['alpha_or_beta']!r}"
        for k in ("eta", "expected_eta", "ce_bar_f", "ce_bar_q", "test_acc", "theory_acc"):
            metrics[f"{tag}.{k}"] = r[k]
    between, levels = nl.generated_between_count(res["rows"])
    metrics["generated_between"] = between
    metrics["generated_levels"] = levels
    cols = ("noise_type", "level", "alpha_or_beta", "eta", "ce_bar_f", "ce_bar_q", "test_acc", "theory_acc")
    table = [{k: r[k] for k in cols} for r in res["rows"]]
    return RunResult(metrics, {"noisy_labels": table}, {"elapsed_s": res["elapsed_s"]})


# ---------------------------------------------------------------- denoising and scores


def _prior(cfg: ExperimentConfig) -> GaussianMixture:
    if cfg.dataset.get("prior", "default") == "random":
        gen = rngmod.stream(cfg.seed, "prior")
        return GaussianMixture.random(gen, int(cfg.dataset.get("components", 3)))
    return ds.default_prior()


def run_tweedie(cfg: ExperimentConfig) -> RunResult:
    n_priors = int(_p(cfg, "n_priors", 5))
    n_grid = int(_p(cfg, "grid_points", 512))
    noise_var = float(_p(cfg, "noise_var", 0.25))
    worst = 0.0
    rows = []
    for k in range(n_priors):
        gmm = GaussianMixture.random(rngmod.stream(cfg.seed, "tweedie/prior", k), int(_p(cfg, "components", 3)))
        noisy = gmm.widen(noise_var)
        grid = ds.evaluation_grid(noisy, n_grid)
        tw = ds.tweedie_mean(grid, noise_var, noisy.score)
        exact = gmm.posterior_mean(grid, noise_var)
        dev = float(np.max(np.abs(tw - exact)))
        worst = max(worst, dev)
        rows.append({"prior": k, "max_abs_diff": dev})
    return RunResult({"max_abs_diff": worst, "n_priors": n_priors, "grid_points": n_grid}, {"tweedie": rows})


def run_score(cfg: ExperimentConfig) -> RunResult:
    base = ds.ScoreConfig()
    scfg = ds.ScoreConfig(
        seed=cfg.seed,
        noise_var=float(_p(cfg, "noise_var", base.noise_var)),
        n_samples=int(_p(cfg, "n_samples", base.n_samples)),
        hidden=tuple(cfg.model.get("hidden", base.hidden)),
        train=_train_override(cfg, base.train),
        prior=_prior(cfg),
    )
    res = ds.run_score_experiment(scfg)
    noisy = scfg.prior.widen(scfg.noise_var)
    control = ds.verify_score_identity(scfg.prior, scfg.noise_var, ds.evaluation_grid(noisy, 16), marginal_var=2 * scfg.noise_var)
    metrics = {
        "nmse_region": res["nmse_region"],
        "identity_max_dev": res["identity_max_dev"],
        "mismatch_control_dev": control,
        "selected_checkpoint": res["train"]["selected"],
    }
    g = res["grid"]
    table = [{"y": a, "model_score": b, "exact_score": c} for a, b, c in zip(g["y"], g["model_score"], g["exact_score"])]
    return RunResult(metrics, {"score_grid": table}, {"elapsed_s": res["elapsed_s"]})


def run_noise2noise(cfg: ExperimentConfig) -> RunResult:
    base = ds.Noise2NoiseConfig()
    task = ds.DenoiseTask(
        _prior(cfg),
        sigma1=float(_p(cfg, "sigma1", 0.5)),
        sigma2=float(_p(cfg, "sigma2", 0.5)),
        n_train=int(_p(cfg, "n_train", 50000)),
    )
    ncfg = ds.Noise2NoiseConfig(
        seed=cfg.seed,
        hidden=tuple(cfg.model.get("hidden", base.hidden)),
        grid_points=int(_p(cfg, "grid_points", base.grid_points)),
        train=_train_override(cfg, base.train),
        task=task,
    )
    res = ds.noise2noise_equivalence_run(task, ncfg)
    oracle = ds.discrete_noise2noise_oracle([0.0, 1.0], [0.5, 0.5], [-0.5, 0.5], [0.5, 0.5], [-1.0, 1.0], [0.5, 0.5])
    metrics = {
        "nmse_twins": res["nmse_twins"],
        "nmse_fx_exact": res["nmse_fx_exact"],
        "nmse_fs_exact": res["nmse_fs_exact"],
        "discrete_max_abs_diff": oracle.max_abs_diff,
    }
    table = [{"checkpoint": i, "nmse_twins": v} for i, v in enumerate(res["twin_trajectory"])]
    return RunResult(metrics, {"twin_trajectory": table}, {"elapsed_s": res["elapsed_s"]})


def run_uncertainty(cfg: ExperimentConfig) -> RunResult:
    base = unc.UncertaintyConfig()
    stage = unc.StageConfig(
        hidden=tuple(cfg.model.get("hidden", unc.StageConfig().hidden)),
        train=_train_override(cfg, unc.StageConfig().train),
    )
    ucfg = unc.UncertaintyConfig(
        seed=cfg.seed,
        d=int(_p(cfg, "d", base.d)),
        factor=int(_p(cfg, "factor", base.factor)),
        n_train=int(_p(cfg, "n_train", base.n_train)),
        n_test=int(_p(cfg, "n_test", base.n_test)),
        noise_var=float(_p(cfg, "noise_var", base.noise_var)),
        mc_samples=int(_p(cfg, "mc_samples", base.mc_samples)),
        mean_stage=stage,
        var_stage=stage,
    )
    res = unc.run_uncertainty_experiment(ucfg)
    metrics = {f"{r['comparison']}.{k}": r[k] for r in res["rows"] for k in ("psnr", "mse", "nmse")}
    metrics["min_var_output"] = res["min_var_output"]
    curve = [{"checkpoint": i, "var_nmse": v} for i, v in enumerate(res["var_nmse_curve"])]
    return RunResult(metrics, {"table2": res["rows"], "var_curve": curve}, {"elapsed_s": res["elapsed_s"]})


RUNNERS = {
    "theorem1": run_theorem1,
    "theorem2-gap": run_theorem2_gap,
    "noisy-labels": run_noisy_labels,
    "noise2noise": run_noise2noise,
    "score": run_score,
    "tweedie": run_tweedie,
    "uncertainty": run_uncertainty,
}


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    t0 = time.time()
    result = RUNNERS[cfg.kind](cfg)
    result.timing.setdefault("elapsed_s", time.time() - t0)
    return result
