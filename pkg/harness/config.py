from dataclasses import dataclass
from typing import Optional, Union

from common.settings import DEFAULT_FRAG_K, DEFAULT_STEP, DEFAULT_WORKERS
from composite.deepfb import MODES, OVERFLOW_POLICIES, PRECISIONS
from harness.camera import Camera
from march.transfer_function import TransferFunction, load_tf_file


@dataclass
class RenderConfig:
    camera: Camera
    tf: Union[TransferFunction, str]
    scene: Optional[str] = None                 # manifest path; tests pass clusters directly
    ranks: int = 1
    step: float = DEFAULT_STEP
    frag_mode: str = "two-pass"
    frag_k: int = DEFAULT_FRAG_K
    overflow: str = "drop"
    precision: str = "float"
    field: int = 0
    timestep: int = 0
    compacted: bool = True
    verify_reconstruction: bool = False
    share_edges: bool = True                   # off: count left tests face by face
    repeat: int = 1
    workers: int = DEFAULT_WORKERS             # pixel worker processes per rank
    timeout: float = 300.0
    out: Optional[str] = None
    oracle_out: Optional[str] = None
    diff_out: Optional[str] = None
    heatmaps_dir: Optional[str] = None
    baseline_out: Optional[str] = None
    stats_out: Optional[str] = None

    def __post_init__(self):
        if self.ranks < 1:
            raise ValueError(f"ranks must be >= 1, got {self.ranks}")
        if not self.step > 0:
            raise ValueError(f"step must be > 0, got {self.step}")
        if self.frag_mode not in MODES:
            raise ValueError(f"frag mode must be one of {MODES}, got {self.frag_mode!r}")
        if self.overflow not in OVERFLOW_POLICIES:
            raise ValueError(f"overflow must be one of {OVERFLOW_POLICIES}, got {self.overflow!r}")
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {PRECISIONS}, got {self.precision!r}")
        if self.repeat < 1:
            raise ValueError(f"repeat must be >= 1, got {self.repeat}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")

    def transfer_function(self) -> TransferFunction:
        if isinstance(self.tf, str):
            self.tf = load_tf_file(self.tf)
        return self.tf
