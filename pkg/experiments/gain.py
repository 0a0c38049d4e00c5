"""Escape-time benchmark of TAMD against plain Langevin over barrier heights"""

from dataclasses import replace

import numpy as np

from experiments._base import ExperimentTask
from helpers.task import task_to_list
from tamdlab.model import ZBiased
from tamdlab.sde import escape_times

START = 0.25
TARGET = 0.75
WINDOW = 0.05


class Task(ExperimentTask):
    """Mean steps to cross a double-well barrier in z, plain against TAMD"""

    tasklist = []
    outputs = {"": ["barrier", "plain_steps", "tamd_steps", "ratio"]}

    def target(self, z):
        lz = self.pot.domain.lz
        gap = np.abs(np.asarray(z) - TARGET * lz)
        return np.minimum(gap, lz - gap) <= WINDOW * lz

    def mean_steps(self, kind, pot, params):
        initials = self.initial_states(z0=START * pot.domain.lz)
        steps = escape_times(
            initials, kind, pot, params, self.target, self.config.experiment["max_steps"]
        )
        censored = int(np.isnan(steps).sum())
        if censored:
            self.log(f"{kind}: {censored} replica(s) did not escape")
        if censored == len(steps):
            return float("nan")
        return float(np.nanmean(steps))

    @task_to_list(tasklist)
    def benchmark(self):
        """Escape steps per barrier with the q step held fixed."""
        # plain Langevin takes the TAMD fast step dt/delta for every coordinate
        plain = replace(self.params, dt=self.params.dt / self.params.delta)
        rows = []
        for barrier in self.config.floats("barriers"):
            pot = ZBiased(self.pot, [(2, 0.5 * barrier, 0.0)])
            self.log(f"barrier {barrier:g}: {pot.describe()}")
            plain_steps = self.mean_steps("plain", pot, plain)
            tamd_steps = self.mean_steps("overdamped", pot, self.params)
            rows.append([barrier, plain_steps, tamd_steps, plain_steps / tamd_steps])
        self.write("", rows)
        ratios = [r[-1] for r in rows]
        increasing = bool(np.all(np.diff(ratios) > 0)) if len(ratios) > 1 else True
        return {"ratios": [round(r, 4) for r in ratios], "increasing": increasing}
