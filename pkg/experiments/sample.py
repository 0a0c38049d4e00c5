"""Monte Carlo sampling of the TAMD, plain, inertial or limiting dynamics"""

from dataclasses import replace

import numpy as np

from experiments._base import ExperimentTask, trailer
from helpers.task import task_to_list
from tamdlab import fpgrid
from tamdlab.estimators import (density_check, export_stats, ks_critical,
                                pooled_stats, slope_fit, z_score)
from tamdlab.freenergy import free_energy_profile
from tamdlab.observables import ObservableRegistry, projected
from tamdlab.sde import ensemble, export_trajectory


class Task(ExperimentTask):
    """Ensemble sampling with batch-means statistics and a grid cross-check"""

    tasklist = []
    outputs = {
        "_traj<k>": ["t", "z", "q_<i> (with --include-q)", "obs_<name>"],
        "_stats": ["observable", "mean", "se", "batch_variance", "iat", "n_effective"],
        "_grid": ["observable", "mc_mean", "se", "grid_mean", "z_score"],
        "_density": ["ks_distance", "ks_critical_1pct", "l2_w", "n_samples"],
        "_bias": ["dt", "mc_mean", "se", "grid_mean", "bias"],
    }

    @property
    def dynamics(self):
        return self.config.experiment["dynamics"]

    @property
    def observables(self):
        """Sampled observables; the limiting dynamics only sees their q average."""
        names = self.config.observables
        if self.dynamics != "limiting":
            return ObservableRegistry.resolve_all(names)
        n_q = self.config.grid.n_q
        return [projected(n, self.params.beta, n_q) for n in names]

    def run_ensemble(self, params):
        inertial = self.dynamics == "inertial"
        profile = self.profile if self.dynamics == "limiting" else None
        return ensemble(
            self.initial_states(inertial), self.dynamics, self.pot, params,
            self.observables, threads=self.threads, profile=profile,
        )

    def grid_reference(self):
        """Generators and density of the law each dynamics should sample."""
        params, profile = self.params, self.profile
        if self.dynamics == "plain":
            params = params.plain()
            grid = self.config.grid
            profile = free_energy_profile(
                self.pot, params.beta, params.beta_bar, grid.n_q, grid.n_z
            )
        gens = fpgrid.build_generators(self.pot, profile, params, self.config.grid)
        if self.dynamics in ("overdamped", "plain"):
            h = fpgrid.stationary_density(gens.Ldelta).h_delta
        else:
            h = np.ones(gens.L0.n)
        return gens, h

    def grid_means(self, gens, h):
        means = {}
        for obs in self.observables:
            values = fpgrid.node_values(self.pot, gens.L0, obs)
            means[obs.name] = fpgrid.grid_expectation(h, gens.L0.weights, values)
        return means

    @task_to_list(tasklist)
    def simulate(self):
        """Integrate every replica and export the trajectories."""
        self.trajectories = self.run_ensemble(self.params)
        for k, traj in enumerate(self.trajectories):
            path = export_trajectory(traj, self.path(f"_traj{k}"), self.include_q)
            self.written.append(path)
        return {
            "replicas": len(self.trajectories),
            "recorded": len(self.trajectories[0]),
            "dynamics": self.dynamics,
        }

    @task_to_list(tasklist)
    def statistics(self):
        """Batch-means statistics pooled over replicas."""
        exp = self.config.experiment
        self.stats = pooled_stats(
            self.trajectories, exp["burn_in"], exp["n_batches"], self.pot.domain
        )
        self.written.append(export_stats(self.stats, self.path("_stats")))
        return {name: f"{m:.6g} +- {self.stats.se[name]:.2g}"
                for name, m in self.stats.mean.items()}

    @task_to_list(tasklist)
    def grid_comparison(self):
        """Ergodic means and the sampled law against the grid solution (d = 1)."""
        if self.pot.domain.d != 1:
            return {"skipped": "grid solves need d = 1"}
        gens, h = self.grid_reference()
        means = self.grid_means(gens, h)
        rows, worst = [], 0.0
        for name, grid_mean in means.items():
            mc, se = self.stats.mean[name], self.stats.se[name]
            score = z_score(mc, se, grid_mean)
            worst = max(worst, score)
            rows.append([name, mc, se, grid_mean, score])
        self.write("_grid", rows)

        target = (gens.L0.weights * h).reshape(gens.L0.weight_grid().shape)
        if self.dynamics == "limiting":
            target = target.sum(axis=1)
        check = density_check(
            self.trajectories, target, self.pot.domain, self.config.experiment["burn_in"]
        )
        critical = ks_critical(check.n_samples, 0.01)
        self.write("_density", [[check.ks_distance, critical, check.l2_w, check.n_samples]])
        return {
            "max_z_score": worst,
            "ks_distance": check.ks_distance,
            "ks_critical_1pct": critical,
            "l2_w": check.l2_w,
        }

    @task_to_list(tasklist)
    def weak_order(self):
        """Stationary bias of the first observable against dt (dt_list)."""
        if not self.config.dt_list or self.pot.domain.d != 1:
            return {}
        name = self.observables[0].name
        gens, h = self.grid_reference()
        grid_mean = self.grid_means(gens, h)[name]
        horizon = self.params.n_steps * self.params.dt
        exp = self.config.experiment
        rows, dts, biases = [], [], []
        for dt in self.config.dt_list:
            params = replace(self.params, dt=dt, n_steps=int(round(horizon / dt)))
            stats = pooled_stats(self.run_ensemble(params), exp["burn_in"], exp["n_batches"])
            bias = abs(stats.mean[name] - grid_mean)
            rows.append([dt, stats.mean[name], stats.se[name], grid_mean, bias])
            dts.append(dt)
            biases.append(bias)
        fit = slope_fit(dts, biases) if len(dts) >= 3 else None
        if fit is not None:
            rows += trailer("bias", fit, len(self.outputs["_bias"]))
        self.write("_bias", rows)
        return {"order": fit.value if fit else "n/a", "r2": fit.r2 if fit else "n/a"}
