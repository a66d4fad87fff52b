class MeshError(ValueError):
    pass


class NonManifoldError(MeshError):
    def __init__(self, key: tuple, owners: list):
        self.key = key
        self.owners = owners
        super().__init__(f"Non-manifold face {key}: shared by {len(owners)} element faces {owners}")


class DegenerateElementError(MeshError):
    pass


class ClusterFormatError(MeshError):
    pass


class PartitionError(ValueError):
    pass


class CompactionCorruptionError(ValueError):
    pass


class HandleOverflowError(OverflowError):
    pass


class MarchFailure(RuntimeError):
    pass


class FragmentContractError(RuntimeError):
    pass


class TransportError(RuntimeError):
    pass


class ProtocolError(RuntimeError):
    def __init__(self, rank: int, step: int, message: str):
        self.rank = rank
        self.step = step
        super().__init__(f"rank {rank}, step {step}: {message}")


class ImageShapeError(ValueError):
    pass
