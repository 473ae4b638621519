"""Experiment harness: configuration, runs, sweeps, plot data and canned tables."""

from .config import MODEL_KINDS, ExperimentConfig, dumps, load_config, loads, save_config
from .plotdata import emit_plotdata
from .reproduce import TABLES, reproduce, table_studies
from .runner import (AXES, ExperimentRecord, ReplicationResult, load_record, run_experiment,
                     sweep, write_record)

__all__ = ["ExperimentConfig", "MODEL_KINDS", "dumps", "loads", "load_config", "save_config",
           "ExperimentRecord", "ReplicationResult", "run_experiment", "sweep", "write_record",
           "load_record", "emit_plotdata", "reproduce", "table_studies", "TABLES", "AXES"]
