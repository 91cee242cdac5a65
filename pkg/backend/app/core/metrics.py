"""
Prometheus metrics.
"""
from prometheus_client import Counter, Histogram

RUNS_TOTAL = Counter("delight_runs_total", "Experiment runs completed", ["testbed"])
CHECKS_TOTAL = Counter("delight_checks_total", "Verification checks evaluated", ["outcome"])
RUN_DURATION = Histogram("delight_run_duration_seconds", "Wall time of one experiment run")
