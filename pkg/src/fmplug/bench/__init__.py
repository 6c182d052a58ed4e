from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .datasets import make_mixture_dataset, make_smooth_dataset, read_grid_file, write_grid_file
from .experiment import run_experiment, summarize
