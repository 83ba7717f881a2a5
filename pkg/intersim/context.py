import threading
from contextlib import contextmanager


class RunContext(threading.local):
    """Thread-local stack of scoped attributes.

    The simulator pushes the run label and current slot, so errors raised deep
    inside the planner can report where they happened.
    """

    def __init__(self):
        self._scopes = [{}]

    def __getattr__(self, name):
        for scope in reversed(self._scopes):
            if name in scope:
                return scope[name]
        raise AttributeError(name)

    def get(self, name, default=None):
        try:
            return getattr(self, name)
        except AttributeError:
            return default

    def snapshot(self):
        merged = {}
        for scope in self._scopes:
            merged.update(scope)
        return merged

    @contextmanager
    def __call__(self, **attrs):
        self._scopes.append(attrs)
        try:
            yield
        finally:
            popped = self._scopes.pop()
            assert popped is attrs


context = RunContext()
