from .database import TargetStore
from .checkpoints import FORMAT_VERSION, load_checkpoint, save_checkpoint

__all__ = ["TargetStore", "FORMAT_VERSION", "load_checkpoint", "save_checkpoint"]
