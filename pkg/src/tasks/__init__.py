"""Experiment execution for StratBoot."""

from src.tasks.experiment_runner import ExperimentResult, run_experiment, run_grid

__all__ = ['ExperimentResult', 'run_experiment', 'run_grid']
