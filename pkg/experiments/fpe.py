"""Grid Fokker-Planck solution: stationary density, spectrum and corrections"""

from experiments._base import ExperimentTask
from helpers.task import task_to_list
from tamdlab import fpgrid
from tamdlab.freenergy import fluctuation_field


class Task(ExperimentTask):
    """Invariant density, spectral gap and first-order density corrections"""

    tasklist = []
    outputs = {
        "_h": ["q", "z", "value"],
        "_report": ["gap", "lambda_ref", "R2_marginal", "eigen_count",
                    "zero_multiplicity", "h_err", "residual"],
        "_spectrum": ["re", "im"],
        "_hfrak": ["q", "z", "value"],
        "_htilde": ["q", "z", "value"],
        "_hbar": ["z", "value"],
    }

    @task_to_list(tasklist)
    def assemble(self):
        """Build the generators on the grid."""
        self.gens = self.generators()
        grid = self.config.grid
        return {"n_q": grid.n_q, "n_z": grid.n_z, "scheme": grid.scheme,
                "dimension": grid.size}

    @task_to_list(tasklist)
    def stationary(self):
        """Solve L_delta* h = 0 for the density against the reference measure."""
        self.solution = fpgrid.stationary_density(self.gens.Ldelta)
        self.written.append(
            fpgrid.export_field(self.path("_h"), self.gens.L0, self.solution.h_delta)
        )
        return {
            "residual": self.solution.residual_norm,
            "normalization": self.solution.normalization,
            "iterations": self.solution.iterations,
        }

    @task_to_list(tasklist)
    def spectrum(self):
        """Dense spectrum of L_delta* and the Poincare rate of the limiting dynamics."""
        self.report = fpgrid.spectral_report(
            self.gens.Ldelta, self.gens.A_op, self.params.beta_bar
        )
        self.written.append(fpgrid.export_spectrum(self.path("_spectrum"), self.report))
        return {
            "gap": self.report.gap,
            "lambda_ref": self.report.lambda_ref,
            "zero_multiplicity": self.report.zero_multiplicity,
        }

    @task_to_list(tasklist)
    def corrections(self):
        """First and second order corrections and the residual identity."""
        gens = self.gens
        field = fluctuation_field(self.pot, self.profile, self.params)
        fields = fpgrid.correction_fields(gens.L0, gens.L1, gens.A_op, field)
        delta = self.params.delta
        residual = fpgrid.asymptotic_residual(gens.Ldelta, gens.L1, fields, delta)
        h_err = fpgrid.weighted_norm(
            self.solution.h_delta - 1.0 - delta * fields.h_frak, gens.L0.weights
        )
        for suffix, values in (("_hfrak", fields.h_frak), ("_htilde", fields.h_tilde),
                               ("_hbar", fields.h_bar)):
            self.written.append(fpgrid.export_field(self.path(suffix), gens.L0, values))
        report = self.report
        self.write("_report", [[report.gap, report.lambda_ref, report.R2_marginal,
                                report.eigen_count, report.zero_multiplicity, h_err,
                                residual]])
        return {
            "h_err": h_err,
            "residual": residual,
            "construction_gap": fields.construction_gap,
        }
