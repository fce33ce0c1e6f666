"""toothlift: multi-view rendering, 2D-to-3D label lifting and graph-cut
refinement for dental-mesh segmentation, plus reference implementations of
the deformable-attention block and the segmenter training losses."""

from ._kernels import BACKEND as KERNEL_BACKEND
from ._kernels import HAVE_COMPILED

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "HAVE_COMPILED", "__version__"]
