"""Exception hierarchy. Every domain failure derives from ReGraphError so the
CLI can map it to exit code 1."""


class ReGraphError(Exception):
    pass


class ConfigError(ReGraphError):
    pass


class IoFailure(ReGraphError):
    pass


# graph-core
class MalformedFile(ReGraphError):
    pass


class EmptyExport(ReGraphError):
    pass


class DanglingEdge(MalformedFile):
    def __init__(self, node_id, function_name=""):
        self.node_id = node_id
        where = f" in function {function_name!r}" if function_name else ""
        super().__init__(f"edge references missing node {node_id}{where}")


class InvalidGraph(ReGraphError):
    pass


# pipeline
class EmptyRoot(ReGraphError):
    pass


class ToolFailure(ReGraphError):
    def __init__(self, message, stderr=""):
        self.stderr = stderr
        super().__init__(f"{message}\n{stderr}".rstrip())


class StageTimeout(ReGraphError):
    pass


class MissingFixture(ReGraphError):
    pass


class StageOrderError(ReGraphError):
    pass


class AllJobsFailed(ReGraphError):
    pass


# vectorizer
class EmptyCorpus(ReGraphError):
    pass


class Oversized(ReGraphError):
    pass


class VersionMismatch(ReGraphError):
    pass


class MalformedLine(ReGraphError):
    pass


# model
class DimensionMismatch(ReGraphError):
    pass


class ZeroVariance(ReGraphError):
    pass


class NoPositivePairs(ReGraphError):
    pass


class NonFiniteLoss(ReGraphError):
    pass


class VersionUnknown(ReGraphError):
    pass


class CorruptFile(ReGraphError):
    pass


# matcher / eval
class VocabModelMismatch(ReGraphError):
    pass


class MissingTruth(ReGraphError):
    pass


class EmptyDataset(ReGraphError):
    pass


class EmptyCell(ReGraphError):
    pass
