"""Compact image vectors from multiple visual vocabularies.

Local descriptors are quantized against several diverse vocabularies, the
per-vocabulary BOW histograms are power-law normalized and concatenated, and
the result is jointly PCA-reduced and whitened to a short unit vector that is
searched by inner product.
"""

from .bow import (
    BowMatrix, BowVector, VocabularyBundle, compute_idf, concat_bundle, encode_bow,
    encode_image, load_bow_matrix, quantization_complexity, save_bow_matrix, ssr,
    unique_assignment_curve, unique_assignments,
)
from .descriptors import (
    ChannelManifest, DescriptorMatrix, DescriptorProjection, load_descriptors,
    load_projection, power_law_descriptors, project_descriptors, read_manifest,
    save_descriptors, save_projection, train_descriptor_pca,
)
from .errors import ConfigError, CorruptionError, DataError, FormatError, ParameterError
from .reduction import (
    ReductionModel, ShortVector, load_reduction, reduce, reduce_matrix, save_reduction,
    train_reduction, whitening_check,
)
from .search import GroundTruthQuery, Index, average_precision, mean_ap, query
from .synth import SynthSpec, generate_synthetic
from .vocabulary import (
    Assignment, Vocabulary, kmeans_objective, kmeans_train, load_vocabulary, quantize,
    save_vocabulary,
)

__version__ = "0.1.0"
