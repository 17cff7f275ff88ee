"""HDMba: hyperspectral dehazing with window-partitioned selective state-space blocks."""
from .cube import HsiCube, read_cube, write_cube
from .haze import HazeSpec, Recipe, apply_haze, build_dataset, generate_clean_scene, generate_thickness_map
from .network import HDMba, ModelConfig, dehaze, full_config, loss_fn, parameter_count, parameter_report
from .tensor import Parameter, Tensor, no_grad
from .trainer import TrainConfig, train

__version__ = "0.1.0"
