"""Staged stochastic inversion over diffuse-ellipse (blob) spatial models.

The library discovers compact 2D and 3D models that explain observed
data: grayscale pictures, or response vectors produced by a forward
model over a resistivity mesh.  The search runs in stages — greedy
priming, covariance-matrix-adaptation evolutionary search, culling of
unhelpful blobs, and cell-division splitting of the most significant
ones.
"""

from .cmaes import CmaConfig, CmaEs, optimize
from .evolve import SearchConfig, contribution, cull, search, split, split_blob
from .model import (
    Blob,
    Model,
    adjusted_strengths,
    combined_value,
    combined_values,
    decode,
    encode,
    load_model,
    local_intensity,
    save_model,
    transform_point,
)
from .objective import (
    EvaluationError,
    Evaluator,
    ExternalForward,
    FieldData,
    SyntheticForward,
    picture_error,
    rms_error,
    station_grid,
)
from .prime import PrimeConfig, adjust_background, half_interval_refine, prime, scan_place
from .raster import (
    Image2D,
    Mesh3D,
    rasterize_2d,
    read_image,
    read_mesh,
    read_pgm,
    sample_mesh,
    write_mesh,
    write_pgm,
)
from .stats import RankSumResult, rank_sum_test
from .trace import RunTrace, split_recoveries

__version__ = "0.1.0"
