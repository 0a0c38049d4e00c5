"""Relaxation of the Fokker-Planck flow and its fitted exponential rate"""

import numpy as np

from experiments._base import ExperimentTask, trailer
from helpers.task import task_to_list
from tamdlab import fpgrid
from tamdlab.estimators import rate_fit
from tamdlab.observables import ObservableRegistry

PERTURBATION = 0.5
TAIL = 0.5
FLOOR = 1e-12


class Task(ExperimentTask):
    """Decay of ||f(t) - h_delta|| against the spectral gap"""

    tasklist = []
    outputs = {"": ["t", "distance"]}

    @task_to_list(tasklist)
    def spectrum(self):
        """Stationary density and gap of L_delta*."""
        self.gens = gens = self.generators()
        self.h = fpgrid.stationary_density(gens.Ldelta).h_delta
        self.report = fpgrid.spectral_report(gens.Ldelta, gens.A_op, self.params.beta_bar)
        return {"gap": self.report.gap, "lambda_ref": self.report.lambda_ref}

    @task_to_list(tasklist)
    def relax(self):
        """Crank-Nicolson from a perturbation of the reference density along phi."""
        gens = self.gens
        w = gens.L0.weights
        phi = ObservableRegistry.resolve(self.config.experiment["phi"])
        values = fpgrid.node_values(self.pot, gens.L0, phi)
        centered = values - fpgrid.weighted_inner(values, np.ones_like(values), w)
        scale = np.abs(centered).max()
        f0 = 1.0 + PERTURBATION * centered / scale if scale > 0 else np.ones_like(values)
        exp = self.config.experiment
        self.series = fpgrid.propagate(gens.Ldelta, f0, exp["t_final"], exp["dt_pde"], self.h)
        return {"steps": len(self.series.times) - 1,
                "final_distance": float(self.series.distances[-1])}

    @task_to_list(tasklist)
    def fit(self):
        """Fit the decay rate on the tail of the curve."""
        ts, ds = self.series
        keep = (ts >= TAIL * ts[-1]) & (ds > FLOOR * max(ds[0], FLOOR))
        rows = [[t, d] for t, d in zip(ts, ds)]
        summary = {"gap": self.report.gap}
        if keep.sum() >= 3:
            fit = rate_fit(ts[keep], ds[keep])
            rows += trailer("distance", fit, 2, label="rate")
            rel = abs(fit.value - self.report.gap) / self.report.gap
            summary.update(rate=fit.value, r2=fit.r2, rel_err=rel)
        rows.append(["gap", self.report.gap])
        self.write("", rows)
        return summary
