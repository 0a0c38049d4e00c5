"""Sweep over delta: density expansion, variance closeness and spectral gap"""

from concurrent.futures import ThreadPoolExecutor

from experiments._base import ExperimentTask, trailer
from helpers.config import DEFAULT_DELTAS, parse_floats
from helpers.task import task_to_list
from tamdlab import fpgrid
from tamdlab.estimators import slope_fit
from tamdlab.freenergy import fluctuation_field
from tamdlab.observables import ObservableRegistry

EXACT_FLOOR = 1e-10


class Task(ExperimentTask):
    """Grid quantities over delta_list with log-log slope fits"""

    tasklist = []
    outputs = {
        "": ["delta", "gap", "lambda_ref", "h_err", "var_delta", "var_ref"],
        "_poisson": ["delta", "phi_err"],
    }

    @property
    def deltas(self):
        return self.config.delta_list or parse_floats("params", "delta_list", DEFAULT_DELTAS)

    @task_to_list(tasklist)
    def prepare(self):
        """Delta-independent pieces: generators, corrections, reference variance."""
        self.gens = self.generators()
        gens = self.gens
        field = fluctuation_field(self.pot, self.profile, self.params)
        self.fields = fpgrid.correction_fields(gens.L0, gens.L1, gens.A_op, field)
        phi = ObservableRegistry.resolve(self.config.experiment["phi"])
        self.phi = fpgrid.node_values(self.pot, gens.L0, phi)
        self.var_ref = fpgrid.reference_variance(gens.A_op, self.phi, gens.L0.weight_grid())
        self.Psi, self.psi = fpgrid.approx_poisson(gens.A_op, gens.L0, gens.L1, self.phi)
        return {"deltas": list(self.deltas), "var_ref": self.var_ref,
                "construction_gap": self.fields.construction_gap}

    def job(self, delta):
        gens = self.gens
        Ldelta = fpgrid.combine(gens.L0, gens.L1, delta)
        h = fpgrid.stationary_density(Ldelta).h_delta
        report = fpgrid.spectral_report(Ldelta, gens.A_op, self.params.beta_bar)
        Phi, var_delta = fpgrid.poisson_solve(Ldelta, h, self.phi)
        w = gens.L0.weights
        n_q = self.config.grid.n_q
        return {
            "delta": delta,
            "gap": report.gap,
            "lambda_ref": report.lambda_ref,
            "h_err": fpgrid.weighted_norm(h - 1.0 - delta * self.fields.h_frak, w),
            "var_delta": var_delta,
            "phi_err": fpgrid.weighted_norm(Phi - fpgrid.lift(self.Psi, n_q), w),
        }

    @task_to_list(tasklist)
    def sweep(self):
        """Solve every delta, concurrently when threads allow."""
        with ThreadPoolExecutor(max_workers=max(1, self.threads)) as pool:
            self.rows = list(pool.map(self.job, self.deltas))
        return {"solved": len(self.rows)}

    @task_to_list(tasklist)
    def fits(self):
        """Log-log slopes of the density and variance errors, written as trailers."""
        deltas = [r["delta"] for r in self.rows]
        width = len(self.outputs[""])
        rows = [[r["delta"], r["gap"], r["lambda_ref"], r["h_err"], r["var_delta"],
                 self.var_ref] for r in self.rows]
        poisson = [[r["delta"], r["phi_err"]] for r in self.rows]
        series = {
            "h_err": [r["h_err"] for r in self.rows],
            "var_err": [abs(r["var_delta"] - self.var_ref) for r in self.rows],
            "phi_err": [r["phi_err"] for r in self.rows],
        }
        summary = {}
        for column, ys in series.items():
            # exact cases (separable, beta_bar = beta) leave nothing to fit
            if len(ys) < 3 or min(ys) <= EXACT_FLOOR:
                summary[f"{column}_slope"] = "n/a"
                continue
            fit = slope_fit(deltas, ys)
            summary[f"{column}_slope"] = fit.value
            summary[f"{column}_r2"] = fit.r2
            if column == "phi_err":
                poisson += trailer(column, fit, 2)
            else:
                rows += trailer(column, fit, width)
        self.write("", rows)
        self.write("_poisson", poisson)
        return summary
