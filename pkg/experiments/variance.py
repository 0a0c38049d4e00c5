"""Asymptotic variance: grid Poisson solve against batch means"""

from experiments._base import ExperimentTask
from helpers.task import task_to_list
from tamdlab import fpgrid
from tamdlab.estimators import pooled_stats
from tamdlab.observables import ObservableRegistry, projected
from tamdlab.sde import ensemble


class Task(ExperimentTask):
    """Grid and Monte Carlo asymptotic variances of phi for TAMD and the limit"""

    tasklist = []
    outputs = {
        "": ["source", "mean", "grid_mean", "se", "variance", "grid_variance", "rel_err"],
    }

    @task_to_list(tasklist)
    def grid_variances(self):
        """sigma^2 at delta from the Poisson equation and the reference sigma^2."""
        self.gens = gens = self.generators()
        self.phi = ObservableRegistry.resolve(self.config.experiment["phi"])
        values = fpgrid.node_values(self.pot, gens.L0, self.phi)
        w = gens.L0.weights
        h = fpgrid.stationary_density(gens.Ldelta).h_delta
        _, self.var_delta = fpgrid.poisson_solve(gens.Ldelta, h, values)
        self.var_ref = fpgrid.reference_variance(gens.A_op, values, gens.L0.weight_grid())
        self.mean_delta = fpgrid.grid_expectation(h, w, values)
        self.projected = fpgrid.project_z(values, gens.L0.weight_grid())
        self.mean_ref = fpgrid.weighted_inner(self.projected, 1.0, gens.A_op.weights)
        return {"var_delta": self.var_delta, "var_ref": self.var_ref}

    def sample(self, kind, observable, profile=None):
        exp = self.config.experiment
        trajs = ensemble(
            self.initial_states(), kind, self.pot, self.params, [observable],
            threads=self.threads, profile=profile,
        )
        return pooled_stats(trajs, exp["burn_in"], exp["n_batches"])

    @task_to_list(tasklist)
    def monte_carlo(self):
        """Batch-means variance of phi along TAMD and of Pi_z phi along the limit."""
        stats = self.sample("overdamped", self.phi)
        name = self.phi.name
        limit_obs = projected(self.phi, self.params.beta, self.config.grid.n_q)
        limit = self.sample("limiting", limit_obs, self.profile)
        rows = []
        for source, st, obs, mean, var in (
            ("tamd", stats, name, self.mean_delta, self.var_delta),
            ("limiting", limit, limit_obs.name, self.mean_ref, self.var_ref),
        ):
            rel = abs(st.batch_variance[obs] - var) / var if var > 0 else float("nan")
            rows.append([source, st.mean[obs], mean, st.se[obs], st.batch_variance[obs],
                         var, rel])
        self.write("", rows)
        return {"tamd_rel_err": rows[0][-1], "limiting_rel_err": rows[1][-1]}
