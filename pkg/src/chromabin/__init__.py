"""Binary BRIEF/LATCH-style descriptors sampled across color channels.

Gray, RGB and YCbCr sampling variants share one spatial pattern per seed,
so color-vs-gray comparisons are paired. Hot loops live in a Cython
extension with a numpy fallback; see :mod:`chromabin._backend`.
"""

__version__ = "0.1.0"

from ._backend import name as backend_name  # noqa: E402
from .descriptors import (  # noqa: E402
    Descriptor,
    DescriptorConfig,
    DescriptorSet,
    Keypoint,
    binary_test,
    extract,
    load_descriptors,
    required_margin,
    save_descriptors,
    triplet_test,
)
from .detect import DetectorConfig, detect_fast  # noqa: E402
from .evaluation import (  # noqa: E402
    EvaluationReport,
    Homography,
    ImagePairTask,
    relative_improvement,
    run_pair,
    run_suite,
)
from .imagery import (  # noqa: E402
    ColorSpace,
    PlanarImage,
    SmoothingConfig,
    load_image,
    smooth,
    to_gray,
    to_ycbcr,
)
from .matching import MatchResult, hamming, match_nearest  # noqa: E402
from .patterns import (  # noqa: E402
    PairPattern,
    TripletPattern,
    generate_pair_pattern,
    generate_triplet_pattern,
    load_pattern,
    load_triplet_arrangement,
    save_pattern,
)

__all__ = [
    "ColorSpace", "Descriptor", "DescriptorConfig", "DescriptorSet", "DetectorConfig",
    "EvaluationReport", "Homography", "ImagePairTask", "Keypoint", "MatchResult",
    "PairPattern", "PlanarImage", "SmoothingConfig", "TripletPattern", "backend_name",
    "binary_test", "detect_fast", "extract", "generate_pair_pattern",
    "generate_triplet_pattern", "hamming", "load_descriptors", "load_image", "load_pattern",
    "load_triplet_arrangement", "match_nearest", "relative_improvement", "required_margin",
    "run_pair", "run_suite", "save_descriptors", "save_pattern", "smooth", "to_gray",
    "to_ycbcr", "triplet_test",
]
