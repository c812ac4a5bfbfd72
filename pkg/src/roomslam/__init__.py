"""roomslam: topological semantic SLAM on precomputed open-vocabulary
embeddings.

The library builds a distance-gated pose graph from odometry, labels each
keyframe against a text prompt bank by cosine similarity, refines labels with
a neighbor majority vote, clusters nodes into room instances and floors,
closes loops inside same-label rooms with PnP verification, optimizes the
graph with a dynamic-covariance-scaled robust loss, and answers room-to-room
path queries.
"""

from .benchmarks import square_benchmark, square_truth
from .bundle import (BadMagicError, BundleError, DanglingRowError, DatasetBundle,
                     GroundTruthData, KeyframeRecord, SizeMismatchError,
                     VersionMismatchError, load_bundle, save_bundle)
from .clustering import (RoomCluster, assign_clusters, merge_clusters,
                         segment_floors)
from .config import ConfigError, PipelineConfig, load_config, parse_config_text
from .geometry import SE3Pose, look_at_rotation, so3_exp, so3_jr_inv, so3_log
from .graph import (EdgeKind, GraphEdge, GraphSnapshot, Keyframe, LocalFeature,
                    NonMonotonicStampError, PoseGraph, all_neighbors, neighbors)
from .loopclosure import (LoopCandidate, LoopResult, MissingFeaturesError,
                          close_loops, propose, verify_pnp)
from .metrics import (AccuracyResult, RoomBox, align_rigid, ate,
                      classification_accuracy, label_from_boxes, pr_counts,
                      true_labels_from_boxes)
from .optimizer import (DcsParams, OptimizeError, OptimizeOptions, Residual,
                        dcs_scale, edge_residual, edge_residual_jacobians,
                        optimize, retract_pose)
from .pipeline import RunOutput, export_outputs, run_pipeline
from .planner import (AdjacencyGraph, UnknownLabelError, build_adjacency,
                      dijkstra, path_cost, plan)
from .pnp import (CameraIntrinsics, PnpEstimate, hamming_distance_matrix,
                  match_mutual, ransac_p3p, refine_pose_gauss_newton)
from .semantics import (EmbeddingBank, PromptBank, PromptEntry, STAIRS_LABEL,
                        classify, cosine_similarity, detect_stairs,
                        normalize_label, refine_pass)
from .simulate import (BUILTIN_SCENES, NoiseSpec, RoomSpec, SceneSpec,
                       SimulationError, four_room_scene, home_scene,
                       multifloor_scene, simulate_scene)

__version__ = "0.1.0"
