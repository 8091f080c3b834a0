class HybridKPError(Exception):
    """Base class for library errors."""


class DegenerateConfigurationError(HybridKPError, ValueError):
    """Point configuration does not determine the requested quantity."""

    def __init__(self, message, rank=None):
        super().__init__(message if rank is None else f"{message} (rank {rank})")
        self.rank = rank


class InsufficientKeypointsError(HybridKPError, ValueError):
    def __init__(self, count, required=3):
        super().__init__(f"need at least {required} keypoints, got {count}")
        self.count = count
        self.required = required


class ConvergenceError(HybridKPError, RuntimeError):
    """Iterative solver hit its iteration cap.

    ``transform`` and ``residual`` hold the last iterate so callers may still
    use it.
    """

    def __init__(self, message, residual, transform=None, iterations=None):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual
        self.transform = transform
        self.iterations = iterations


class OutOfBoundsKeypointError(HybridKPError, ValueError):
    def __init__(self, index, u, v, height, width):
        super().__init__(f"keypoint {index} at (u={u}, v={v}) lies outside the {width}x{height} grid")
        self.index = index
