from .checkpoint import (
    CheckpointError,
    architecture_signature,
    load_checkpoint,
    save_checkpoint,
)
from .config import RunConfig
from .pgm import (
    atomic_write_bytes,
    encode_pgm,
    load_dataset,
    read_pgm,
    sample_sheet,
    save_dataset,
    write_pgm,
)

__all__ = [
    "CheckpointError",
    "architecture_signature",
    "load_checkpoint",
    "save_checkpoint",
    "RunConfig",
    "atomic_write_bytes",
    "encode_pgm",
    "load_dataset",
    "read_pgm",
    "sample_sheet",
    "save_dataset",
    "write_pgm",
]
