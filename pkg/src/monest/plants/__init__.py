from . import brake, neuro, sine  # noqa: F401
