"""Exception types shared across the pipeline stages."""


class ToothLiftError(Exception):
    """Base class for all toothlift-specific errors."""


class MeshFormatError(ToothLiftError):
    """Mesh file could not be parsed (bad OBJ/PLY/STL content)."""


class LabelAlignmentError(ToothLiftError):
    """Label array length does not match the mesh vertex count."""


class LabelError(ToothLiftError):
    """Invalid label value (unknown FDI code, class index out of range)."""


class MissingLabelsError(ToothLiftError):
    """Operation requires per-vertex labels but the mesh has none."""


class UndefinedMetricError(ToothLiftError):
    """Metric has no defined value for this input (e.g. no tooth in gt)."""


class ConfigError(ToothLiftError):
    """Invalid pipeline configuration (unknown key or out-of-range value)."""
