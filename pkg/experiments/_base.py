"""shared plumbing for the experiment tasks"""

import os
from functools import cached_property

import numpy as np

from helpers.csvio import write_csv
from helpers.task import TaskBase
from tamdlab import fpgrid
from tamdlab.freenergy import free_energy_profile
from tamdlab.model import State


def trailer(column, fit, width, label="slope"):
    """Rows <label>:<column> and r2:<column> appended below a table."""
    pad = [""] * (width - 2)
    return [[f"{label}:{column}", fit.value] + pad, [f"r2:{column}", fit.r2] + pad]


class ExperimentTask(TaskBase):
    """Base class for experiment tasks; subclasses declare tasklist and outputs."""

    tasklist = []
    outputs = {}

    def __init__(self, config, output_dir=".", include_q=False, threads=1,
                 output=True) -> None:
        self.config = config
        self.output_dir = output_dir
        self.include_q = include_q
        self.threads = threads
        self.written = []
        super().__init__(config.kind, output)

    @property
    def pot(self):
        return self.config.potential

    @property
    def params(self):
        return self.config.params

    def path(self, suffix=""):
        return os.path.join(self.output_dir, f"{self.config.output}{suffix}.csv")

    def write(self, suffix, rows):
        """Write rows under the header declared in outputs[suffix]."""
        path = write_csv(self.path(suffix), self.outputs[suffix], rows)
        self.written.append(path)
        return path

    @cached_property
    def profile(self):
        grid = self.config.grid
        return free_energy_profile(
            self.pot, self.params.beta, self.params.beta_bar, grid.n_q, grid.n_z
        )

    def generators(self, delta=None):
        params = self.params if delta is None else self.params.with_delta(delta)
        return fpgrid.build_generators(self.pot, self.profile, params, self.config.grid)

    def initial_states(self, inertial=False, z0=None):
        """Replica k starts at q = Lq/2 and z spread evenly, or at z0 if given."""
        domain = self.pot.domain
        n = self.config.replicas
        zs = (np.arange(n) + 0.5) * domain.lz / n if z0 is None else np.full(n, z0)
        p = np.zeros(domain.d) if inertial else None
        return [State(np.full(domain.d, 0.5 * domain.lq), z, p) for z in zs]
