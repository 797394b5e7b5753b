"""Grid-association superpixel segmentation.

A small numpy/numba package: a tape-based autodiff engine, the pixel-to-cell
association framework with its reconstruction losses, the cell-implantation
module, a boundary-perceiving loss, patch-jitter augmentation, an
encoder-decoder model with binary checkpoints, ASA/BR/BP evaluation with
proposal merging, and a CLI.
"""

from .assoc import (
    AssociationMap,
    aggregate_superpixel_property,
    reconstruct_pixel_property,
    task_loss,
    task_loss_parts,
)
from .autodiff import AdamState, Graph, Tensor, adam_step, backward
from .augment import AugmentConfig, patch_shuffle, random_shift
from .bploss import (
    BoundaryPatch,
    GroupPartition,
    boundary_loss,
    boundary_mask,
    group_mean,
    make_partition,
    patch_loss,
    sample_patches,
    sim,
)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import SampleRecord, gen_synthetic, load_dataset, save_dataset
from .errors import SpixelError
from .grid import GridSpec, grid_init, neighbor_cells
from .implant import ImplantWindows, ai_fuse, compress_channels, implant
from .labels import LabelMap, SuperpixelSegmentation
from .metrics import MetricReport, ProposalSet, asa, boundary_metrics, merge_proposals
from .model import DESK_CONFIG, PAPER_CONFIG, Model, ModelConfig, build, forward
from .segment import enforce_connectivity, grid_segmentation, hard_assign
from .train import TrainConfig, assemble_batch, lr_at, train

__version__ = "0.1.0"
