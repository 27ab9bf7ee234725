"""Command-line driver wiring the pipeline stages under one run config.

Subcommands: sample | fit | calibrate | mcmc | diagnose | all. Options in
a YAML config file; --seed/--threads/--output override the corresponding
keys. Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

import argparse
import json
import os
import sys
import time

import numpy as np
import yaml

from autocal import containers, diagnostics
from autocal.design import DesignMatrix, ParameterSpace, lhs_sample
from autocal.exceptions import ConvergenceError, OptimizationError
from autocal.fields import (
    FieldSchema,
    StackedVector,
    load_ensemble,
    load_stacked,
    rmse_change_table,
)
from autocal.loss import CalibrationLoss, PriorConfig
from autocal.mcmc import McmcConfig, pairwise_summaries, rhat, run_chains
from autocal.optimize import (
    CalibrationResult,
    OptimizerConfig,
    compare_parameter_table,
    maximize,
    save_parameter_table,
)
from autocal.reduction import PcaReducer
from autocal.surrogate import HyperGrid, SurrogateModel, fit_surrogate
from autocal.tables import write_csv
from autocal.toy import ToyModel, ToyModelConfig, toy_generate_campaign, write_campaign
from autocal.validation import derive_seed

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


class RunConfig:
    """Typed view over the YAML run configuration."""

    def __init__(self, data=None):
        self.data = data or {}

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ValueError("run config must be a mapping")
        return cls(data)

    def get(self, *keys, default=None):
        node = self.data
        for key in keys:
            if not isinstance(node, dict) or key not in node:
                return default
            node = node[key]
        return node

    @property
    def seed(self):
        return int(self.get("seed", default=0))

    @property
    def threads(self):
        value = self.get("threads")
        return None if value is None else int(value)

    @property
    def output(self):
        return self.get("output", default="runs/out")

    def space(self):
        inline = self.get("space")
        if inline is not None:
            return ParameterSpace.from_json_dict(inline)
        path = self.get("paths", "space")
        if path:
            return ParameterSpace.load(path)
        raise ValueError("config defines no parameter space (space: or paths.space)")

    def hyper_grid(self):
        section = self.get("grid", default={})
        kwargs = {}
        if "orders" in section:
            kwargs["orders"] = tuple(section["orders"])
        if "kinds" in section:
            kwargs["kinds"] = tuple(section["kinds"])
        if "q" in section:
            kwargs["hyperbolic_q"] = float(section["q"])
        if "fit_types" in section:
            kwargs["fit_types"] = tuple(section["fit_types"])
        if "penalties" in section:
            kwargs["penalties"] = tuple(float(v) for v in section["penalties"])
        elif {"penalty_min", "penalty_max", "n_penalties"} & set(section):
            lo = float(section.get("penalty_min", 1e-8))
            hi = float(section.get("penalty_max", 1e4))
            num = int(section.get("n_penalties", 20))
            kwargs["penalties"] = tuple(np.logspace(np.log10(lo), np.log10(hi), num))
        if "folds" in section:
            kwargs["folds"] = int(section["folds"])
        return HyperGrid(**kwargs)

    def prior(self):
        section = self.get("prior", default={})
        return PriorConfig(
            alpha=float(section.get("alpha", 3.0)),
            beta=float(section.get("beta", 0.5)),
        )

    def optimizer_config(self, seed):
        section = self.get("optimizer", default={})
        return OptimizerConfig(
            memory=int(section.get("memory", 10)),
            max_iters=int(section.get("max_iters", 500)),
            grad_tol=float(section.get("grad_tol", 1e-6)),
            n_starts=int(section.get("n_starts", 50)),
            seed=seed,
        )

    def optimizer_modes(self):
        section = self.get("optimizer", default={})
        modes = section.get("modes", section.get("mode", "map"))
        if isinstance(modes, str):
            modes = [modes]
        return [m.lower() for m in modes]

    def mcmc_config(self, seed):
        section = self.get("mcmc", default={})
        return McmcConfig(
            n_chains=int(section.get("n_chains", 200)),
            n_samples_per_chain=int(section.get("n_samples_per_chain", 8000)),
            burn_in=int(section.get("burn_in", 5000)),
            thin=int(section.get("thin", 10)),
            init_split=float(section.get("init_split", 0.5)),
            seed=seed,
            target_acceptance=float(section.get("target_acceptance", 0.234)),
        )


def _require_path(cfg, *keys):
    path = cfg.get(*keys)
    if not path:
        raise FileNotFoundError(f"config key {'.'.join(keys)} is required")
    if not os.path.exists(path) and not os.path.exists(path + ".json"):
        raise FileNotFoundError(f"missing input: {path}")
    return path


def _load_inputs(cfg):
    schema = FieldSchema.load(_require_path(cfg, "paths", "schema"))
    space = cfg.space()
    design = DesignMatrix.load_csv(_require_path(cfg, "paths", "design"), space)
    ensemble = load_ensemble(_require_path(cfg, "paths", "ensemble"), schema, design=design)
    obs = load_stacked(_require_path(cfg, "paths", "obs"), schema)
    return schema, space, design, ensemble, obs


def _apply_targets(cfg, obs):
    targets = cfg.get("targets", default={}) or {}
    if not targets:
        return obs
    values = obs.values.copy()
    for key, target in targets.items():
        spec = obs.schema.spec(key)
        if not spec.grid.is_scalar:
            raise ValueError(f"target override only applies to scalar fields, got {key!r}")
        values[obs.schema.slice_of(key)] = float(target)
    return StackedVector(values=values, schema=obs.schema)


def _build_loss(cfg, model, obs):
    fixed = cfg.get("fixed_scales", default={}) or {}
    return CalibrationLoss(
        surrogate=model,
        obs=_apply_targets(cfg, obs),
        prior=cfg.prior(),
        fixed_scales={k: float(v) for k, v in fixed.items()},
    )


def cmd_sample(cfg, output):
    space = cfg.space()
    n = int(cfg.get("design", "n", default=250))
    design = lhs_sample(space, n, derive_seed(cfg.seed, "sample"))
    os.makedirs(output, exist_ok=True)
    design.save_csv(os.path.join(output, "design.csv"))
    space.save(os.path.join(output, "space.json"))
    print(f"wrote {n}x{space.dimension} design to {output}/design.csv")
    return EXIT_OK


def cmd_fit(cfg, output):
    t0 = time.perf_counter()
    _, _, _, ensemble, _ = _load_inputs(cfg)
    k = int(cfg.get("pca", "k", default=16))
    basis = PcaReducer(n_components=k).fit(ensemble)
    model = fit_surrogate(
        ensemble,
        basis,
        grid=cfg.hyper_grid(),
        seed=derive_seed(cfg.seed, "fit"),
        threads=cfg.threads,
    )
    model_dir = os.path.join(output, "model")
    model.save(model_dir)
    report = model.selection_report()
    write_csv(
        os.path.join(output, "selection_report.csv"),
        ["pc", "fit_type", "order", "kind", "penalty", "cv_rmse"],
        [[r["pc"], r["fit_type"], r["order"], r["kind"], r["penalty"], r["cv_rmse"]]
         for r in report],
    )
    diagnostics.write_variance_curve_csv(os.path.join(output, "variance_curve.csv"), basis)
    overall, _ = model.surrogate_r2(ensemble)
    elapsed = time.perf_counter() - t0
    print(f"surrogate fitted: k={k}, overall R^2={overall:.4f}, {elapsed:.1f}s")
    return EXIT_OK


def cmd_calibrate(cfg, output):
    schema, _, _, ensemble, obs = _load_inputs(cfg)
    model = SurrogateModel.load(os.path.join(output, "model"))
    loss = _build_loss(cfg, model, obs)
    seed = derive_seed(cfg.seed, "calibrate")
    references = {
        label: np.array([float(entry[name]) for name in model.space.names])
        for label, entry in (cfg.get("references", default={}) or {}).items()
    }
    for mode in cfg.optimizer_modes():
        result = maximize(loss, mode=mode, config=cfg.optimizer_config(seed))
        result.save(os.path.join(output, f"calibration_{mode}.json"))
        rows = compare_parameter_table(result, references, model.space)
        save_parameter_table(os.path.join(output, f"parameters_{mode}.csv"), rows)
        table = diagnostics.scale_table(result.s_sq_hat, schema)
        diagnostics.write_scale_table_csv(
            os.path.join(output, f"scales_{mode}.csv"), table
        )
        print(
            f"{mode} objective {result.objective:.6g} "
            f"(start {result.start_index}, converged={result.converged})"
        )
    return EXIT_OK


def cmd_mcmc(cfg, output):
    _, _, design, _, obs = _load_inputs(cfg)
    model = SurrogateModel.load(os.path.join(output, "model"))
    loss = _build_loss(cfg, model, obs)
    config = cfg.mcmc_config(derive_seed(cfg.seed, "mcmc"))
    samples = run_chains(loss, design, config)
    mdir = os.path.join(output, "mcmc")
    os.makedirs(mdir, exist_ok=True)
    containers.save_matrix(os.path.join(mdir, "draws"), samples.draws)
    containers.save_vector(
        os.path.join(mdir, "chain_ids"), samples.chain_ids.astype(float)
    )
    write_csv(
        os.path.join(mdir, "acceptance.csv"),
        ["chain", "acceptance_rate"],
        [[c, float(r)] for c, r in enumerate(samples.acceptance_rates)],
    )
    qs = samples.quantile_summary()
    write_csv(
        os.path.join(mdir, "quantiles.csv"),
        ["name", "q16", "q50", "q84"],
        [
            [samples.names[i], float(qs["q16"][i]), float(qs["q50"][i]), float(qs["q84"][i])]
            for i in range(len(samples.names))
        ],
    )
    psrf = rhat(samples)
    write_csv(
        os.path.join(mdir, "rhat.csv"),
        ["name", "rhat"],
        [[samples.names[i], float(psrf[i])] for i in range(len(samples.names))],
    )
    refs = {}
    map_path = os.path.join(output, "calibration_map.json")
    if os.path.exists(map_path):
        with open(map_path, encoding="utf-8") as fh:
            refs["map"] = np.array(json.load(fh)["theta_hat"])
    summaries = pairwise_summaries(samples, references=refs)
    svg = diagnostics.pair_plot_svg(summaries)
    with open(os.path.join(mdir, "pair_plot.svg"), "w", encoding="utf-8") as fh:
        fh.write(svg)
    print(
        f"retained {samples.draws.shape[0]} draws from {config.n_chains} chains; "
        f"max split-Rhat {float(np.max(psrf)):.3f}"
    )
    return EXIT_OK


def cmd_diagnose(cfg, output):
    schema, _, _, ensemble, obs = _load_inputs(cfg)
    model = SurrogateModel.load(os.path.join(output, "model"))
    ddir = os.path.join(output, "diagnostics")
    os.makedirs(ddir, exist_ok=True)
    overall, r2_map = model.surrogate_r2(ensemble)
    write_csv(os.path.join(ddir, "r2_overall.csv"), ["overall_r2"], [[float(overall)]])
    for spec in schema.fields:
        if spec.grid.is_scalar:
            continue
        svg = diagnostics.r2_map_svg(r2_map, spec.key, title=f"R2 {spec.key}")
        name = spec.key.replace(":", "_")
        with open(os.path.join(ddir, f"r2_{name}.svg"), "w", encoding="utf-8") as fh:
            fh.write(svg)
    diagnostics.write_variance_curve_csv(
        os.path.join(ddir, "variance_curve.csv"), model.basis
    )
    diagnostics.write_pc_scatter_csv(
        os.path.join(ddir, "pc_scatter.csv"), diagnostics.pc_scatter_data(model, ensemble)
    )
    run_a_path = cfg.get("compare", "run_a")
    run_b_path = cfg.get("compare", "run_b")
    if run_a_path and run_b_path:
        run_a = load_stacked(run_a_path, schema)
        run_b = load_stacked(run_b_path, schema)
        table = rmse_change_table(run_a, run_b, obs)
        diagnostics.write_rmse_table_csv(os.path.join(ddir, "rmse_change.csv"), table)
        stats = []
        for spec in schema.fields:
            if spec.grid.is_scalar:
                continue
            stats.append(diagnostics.taylor_stats(run_a, obs, spec.key, label="run_a"))
            stats.append(diagnostics.taylor_stats(run_b, obs, spec.key, label="run_b"))
        diagnostics.write_taylor_csv(os.path.join(ddir, "taylor_stats.csv"), stats)
        background = []
        for i in range(ensemble.n):
            member = ensemble.member(i)
            for spec in schema.fields:
                if spec.grid.is_scalar:
                    continue
                background.append(
                    diagnostics.taylor_stats(member, obs, spec.key, label=f"member{i}")
                )
        svg = diagnostics.taylor_diagram_svg(stats, background=background)
        with open(os.path.join(ddir, "taylor_diagram.svg"), "w", encoding="utf-8") as fh:
            fh.write(svg)
    print(f"diagnostics written to {ddir}")
    return EXIT_OK


def cmd_all(cfg, output):
    """Tutorial-scale end-to-end run on the bundled synthetic simulator."""
    toy_section = cfg.get("toy", default={}) or {}
    toy_cfg = ToyModelConfig(
        n_modes=int(toy_section.get("n_modes", 4)),
        noise_sd=float(toy_section.get("noise_sd", 0.01)),
        seed=derive_seed(cfg.seed, "toy"),
        hard_mode=bool(toy_section.get("hard_mode", False)),
    )
    n = int(toy_section.get("n", 64))
    ensemble, obs = toy_generate_campaign(toy_cfg, n)
    inputs_dir = os.path.join(output, "inputs")
    write_campaign(inputs_dir, ensemble, obs)

    data = dict(cfg.data)
    data.setdefault("paths", {})
    data["paths"] = {
        "ensemble": os.path.join(inputs_dir, "ensemble"),
        "obs": os.path.join(inputs_dir, "obs"),
        "schema": os.path.join(inputs_dir, "schema.json"),
        "design": os.path.join(inputs_dir, "design.csv"),
        "space": os.path.join(inputs_dir, "space.json"),
    }
    data.setdefault("pca", {"k": int(toy_section.get("k", 8))})
    data.setdefault(
        "grid",
        {"orders": list(range(1, int(toy_section.get("max_order", 4)) + 1))},
    )
    data.setdefault("optimizer", {"n_starts": 8})
    data.setdefault(
        "mcmc",
        {"n_chains": 8, "n_samples_per_chain": 1500, "burn_in": 500, "thin": 2},
    )
    data.setdefault(
        "compare",
        {
            "run_a": os.path.join(inputs_dir, "run_control"),
            "run_b": os.path.join(inputs_dir, "run_calibrated"),
        },
    )
    run_cfg = RunConfig(data)

    rc = cmd_fit(run_cfg, output)
    if rc != EXIT_OK:
        return rc
    rc = cmd_calibrate(run_cfg, output)
    if rc != EXIT_OK:
        return rc

    # comparison runs through the true simulator: midpoint control versus
    # the calibrated parameters
    toy = ToyModel(toy_cfg)
    with open(os.path.join(output, "calibration_map.json"), encoding="utf-8") as fh:
        theta_map = np.array(json.load(fh)["theta_hat"])
    control = 0.5 * (toy.space.lower + toy.space.upper)
    containers.save_vector(
        os.path.join(inputs_dir, "run_control"), toy.evaluate_values(control)
    )
    containers.save_vector(
        os.path.join(inputs_dir, "run_calibrated"), toy.evaluate_values(theta_map)
    )

    rc = cmd_mcmc(run_cfg, output)
    if rc != EXIT_OK:
        return rc
    return cmd_diagnose(run_cfg, output)


COMMANDS = {
    "sample": cmd_sample,
    "fit": cmd_fit,
    "calibrate": cmd_calibrate,
    "mcmc": cmd_mcmc,
    "diagnose": cmd_diagnose,
    "all": cmd_all,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="autocal",
        description="Surrogate-based automatic calibration pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--threads", type=int, default=None, help="worker cap")
        p.add_argument("--output", default=None, help="output directory override")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.data["seed"] = args.seed
        if args.threads is not None:
            cfg.data["threads"] = args.threads
        output = args.output or cfg.output
        os.makedirs(output, exist_ok=True)
        return COMMANDS[args.command](cfg, output)
    except (FileNotFoundError, KeyError, ValueError, yaml.YAMLError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OptimizationError, ConvergenceError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
