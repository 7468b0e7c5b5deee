"""Pattern spotting in document images."""

from ._docspot import *  # noqa: F401,F403
from ._docspot import __doc__  # noqa: F401
