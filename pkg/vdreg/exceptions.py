class VDRegError(Exception):
    def __init__(self, error, msg=''):
        if isinstance(error, Exception):
            super().__init__('{}\n{}'.format(error.__class__.__name__, msg).strip())
        else:
            super().__init__(str(error) if not msg else '{}: {}'.format(error, msg))

class ConfigError(VDRegError):
    """Raised for invalid or inconsistent configuration values"""

class DataError(VDRegError):
    """Raised when a data or query file cannot be ingested"""

class FitError(VDRegError):
    """Raised when a method fails to produce predictions for a replicate"""
