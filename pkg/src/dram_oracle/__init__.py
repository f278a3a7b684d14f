"""Workload-aware DRAM error prediction: traces, features, a retention-error simulator and regressors."""

__version__ = "0.1.0"
