from .model import (
    CLASSIFICATION,
    REGRESSION,
    DEFAULT_ARCH,
    LossBreakdown,
    MissingLabel,
    NetworkParams,
    ShapeMismatch,
    TaskHead,
    backward,
    calibrate_scales,
    encode,
    forward,
    init_params,
    loss,
    loss_and_grad,
    predict,
)
from .train import EmptyDataset, TrainConfig, TrainTrace, lr_at_epoch, train
from .checkpoint import load_checkpoint, save_checkpoint, dump_checkpoint, parse_checkpoint
