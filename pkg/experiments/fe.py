"""Free energy profile by quadrature, with a thermodynamic-integration check"""

import numpy as np

from experiments._base import ExperimentTask
from helpers.task import task_to_list
from tamdlab.estimators import mean_force_estimate, z_score
from tamdlab.freenergy import export_profile, spectral_derivative


class Task(ExperimentTask):
    """Free energy A(z), mean force A'(z) and curvature A''(z) by quadrature"""

    tasklist = []
    outputs = {
        "": ["z", "A", "A1", "A2", "Z"],
        "_ti": ["z", "estimate", "se", "A1"],
    }

    @task_to_list(tasklist)
    def compute_profile(self):
        """Tabulate the profile and write it out."""
        profile = self.profile
        self.written.append(export_profile(profile, self.path()))
        return {
            "n_z": profile.n_z,
            "shift": profile.shift,
            "normalization": profile.normalization(),
        }

    @task_to_list(tasklist)
    def check_consistency(self):
        """Compare A1 and A2 with spectral derivatives of A."""
        profile = self.profile
        lz = self.pot.domain.lz
        d1 = spectral_derivative(profile.A, lz, 1)
        d2 = spectral_derivative(profile.A, lz, 2)
        return {
            "max_err_A1": float(np.abs(d1 - profile.A1).max()),
            "max_err_A2": float(np.abs(d2 - profile.A2).max()),
        }

    @task_to_list(tasklist)
    def thermodynamic_integration(self):
        """Time averages of dz U at frozen z against the quadrature mean force."""
        points = self.config.floats("mean_force_points")
        if not points:
            return {}
        exp = self.config.experiment
        rows, scores = [], []
        for z in points:
            est, se = mean_force_estimate(
                self.pot, self.params, z, burn_in=exp["burn_in"],
                n_batches=exp["n_batches"],
            )
            exact = float(self.profile.mean_force(self.pot.domain.wrap_z(z)))
            rows.append([z, est, se, exact])
            scores.append(z_score(est, se, exact))
        self.write("_ti", rows)
        return {"points": len(rows), "max_z_score": max(scores)}
