__version__ = '1.0.0'

__all__ = ['model', 'riccati', 'maxdet', 'synthesis', 'simulate', 'oracle', 'spacecraft',
        'artifacts', 'errors', 'cli']

from . import errors
from . import model
from . import riccati
from . import maxdet
from . import synthesis
from . import simulate
from . import oracle
from . import spacecraft
from . import artifacts
from . import cli
