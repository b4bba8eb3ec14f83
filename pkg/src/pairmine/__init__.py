"""Curate multi-view image pairs with patch-level correspondences."""

__version__ = "0.1.0"

from .config import RunConfig  # noqa: E402
from .correspondence import (CorrespondenceMap, OverlapReport, PatchGrid,  # noqa: E402
                             accept_pair, correspond_patches, directional_overlap,
                             symmetric_overlap)
from .dataset import (dataset_stats, read_manifest, render_correspondence_overlay,  # noqa: E402
                      write_manifest)
from .features import KeypointSet, compute_descriptors, detect_keypoints  # noqa: E402
from .geometry import apply_homography, estimate_homography_dlt, ransac_homography  # noqa: E402
from .imgcore import RasterImage, decode_image, downsample2, gaussian_blur, to_grayscale  # noqa: E402
from .matching import match_descriptors  # noqa: E402
from .mining import (PairRecord, evaluate_pair, generate_pose_script, mine_pose_lists,  # noqa: E402
                     mine_target_group, mine_video)
