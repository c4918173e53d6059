"""Exceptions du simulateur ToF."""


class TofSimError(Exception):
    """Erreur de base de tofsim."""


class ConfigError(TofSimError, ValueError):
    pass


class SignalError(TofSimError, ValueError):
    pass


class DemodulationError(TofSimError, ValueError):
    pass


class SpectrumError(TofSimError, ValueError):
    pass


class RadiometryError(TofSimError, ValueError):
    pass


class SimulationError(TofSimError, ValueError):
    pass


class SceneError(TofSimError, ValueError):
    pass


class RecordError(TofSimError, ValueError):
    """Ligne invalide dans un fichier de capteurs (numéro de ligne en attribut)."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"ligne {line} : {message}"
        super().__init__(message)
