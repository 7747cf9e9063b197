"""
Hierarquia de erros do toolkit.

Código de biblioteca levanta estes erros; os comandos de gerenciamento convertem
qualquer RoaPlanError em CommandError.
"""


class RoaPlanError(Exception):
    """Erro base do toolkit"""


class ConfigError(RoaPlanError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class ShapeError(RoaPlanError):
    pass


class NonFiniteError(RoaPlanError):
    def __init__(self, primitive, message=None):
        self.primitive = primitive
        super().__init__(message or f"non-finite value produced by '{primitive}'")


class InvalidDynamicsError(RoaPlanError):
    pass


class LowSpeedSingularityError(InvalidDynamicsError):
    pass


class SingularLegError(InvalidDynamicsError):
    pass


class TrainingDivergedError(RoaPlanError):
    def __init__(self, message, checkpoint_path=None):
        self.checkpoint_path = checkpoint_path
        if checkpoint_path:
            message = f"{message} (diagnostic checkpoint: {checkpoint_path})"
        super().__init__(message)


class CertificateDefectError(RoaPlanError):
    pass


class PlannerFailureError(RoaPlanError):
    pass


class PremiseViolationError(RoaPlanError):
    pass


class InfeasibleGaitError(RoaPlanError):
    pass


class RiccatiError(RoaPlanError):
    pass


class MissingArtifactError(RoaPlanError):
    def __init__(self, path, what="artifact"):
        self.path = str(path)
        super().__init__(f"missing {what}: {self.path}")
