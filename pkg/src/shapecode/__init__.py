"""View-based 3D shape retrieval: depth-buffer views, DBN-pretrained deep autoencoders,
mean-of-minima set matching, bag-of-features fusion and PSB retrieval statistics.
"""

from .autoencoder import AutoencoderNet, DeepAutoencoder, FinetuneConfig, encode, finetune, unfold
from .bof import BagOfFeatures, Vocabulary, bof_distance, build_vocabulary, extract_descriptors, quantize
from .dbn import DBN, DbnStack, pretrain, propagate_up
from .evaluation import ClassLabels, RetrievalReport, evaluate, load_cla, rank_queries, score
from .exceptions import (
    ClassificationParseError,
    DegenerateGeometryError,
    DimensionError,
    MeshParseError,
    ShapeCodeError,
    StaleArtifactError,
    TrainingDivergedError,
)
from .fusion import FusionWeights, fuse
from .match import CodeSet, DistanceMatrix, distance_matrix, set_distance
from .mesh import TriangleMesh, load_mesh, normalize_pose, save_mesh
from .projection import CameraRig, DepthImage, ViewSet, make_rig, render_depth
from .rbm import RBM, CdConfig, RbmLayer, cd1_update

__version__ = "0.1.0"
