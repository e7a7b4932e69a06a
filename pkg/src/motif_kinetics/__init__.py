"""Unsupervised motility phenotyping from 2-D object trajectories.

Trajectories are split around a stimulus event, each segment is summarised by
the transition matrices of a vector autoregressive model, and segments are
grouped by spectral clustering of an RBF affinity over those features.
"""

__version__ = "0.1.0"

from .ar import ArConfig, ArParameters, FeatureMatrix, FeatureVector, featurize, featurize_corpus, fit_ar, predict
from .errors import (
    ConfigError,
    DataError,
    MotifKineticsError,
    NumericalError,
    ParseError,
    PreconditionError,
    SplitError,
    StorageError,
)
from .similarity import KernelConfig, KernelMatrix, kernel_stats, rbf_kernel
from .spectral import (
    ClusterAssignment,
    ClusterConfig,
    SpectralEmbedding,
    eigen_embed,
    kmeans,
    normalized_laplacian,
    spectral_cluster,
)
from .synth import LabeledCorpus, MotifSpec, adjusted_rand_index, generate
from .trajectory import (
    SegmentedCorpus,
    Trajectory,
    TrajectoryCorpus,
    TrajectoryPoint,
    filter_min_length,
    load_corpus,
    segment_corpus,
    split_at_event,
    truncate_uniform,
    write_corpus,
)
from .pipeline import PipelineConfig, RunManifest, run_pipeline  # noqa: E402
