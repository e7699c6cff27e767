from pcosync import config  # noqa: F401
