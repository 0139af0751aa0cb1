"""A simple flock based lock on a run directory"""

import os
from fcntl import LOCK_EX, LOCK_NB, LOCK_UN, flock


class LockError(Exception):
    """Raised when an error is encountered during a lock operation"""

    def __init__(self, message, exc=None):
        Exception.__init__(self, message, exc)
        self.message = message
        self.exc = exc


class Lock(object):
    """Advisory exclusive lock on a file or directory path"""

    def __init__(self, path):
        self.path = path
        self.fd = None

    def acquire(self):
        """Acquire the lock without blocking

        :raises: LockError if another process holds it
        """
        if self.is_locked():
            return None
        try:
            self.fd = os.open(self.path, os.O_RDONLY)
            flock(self.fd, LOCK_EX | LOCK_NB)
        except (IOError, OSError) as exc:
            if self.fd is not None:
                os.close(self.fd)
            self.fd = None
            raise LockError("Could not lock %s: %s" % (self.path, exc), exc)
        return True

    def is_locked(self):
        """Check for lock"""
        return self.fd is not None

    def release(self):
        """Release a currently held lock"""
        if self.fd is None:
            raise LockError("No lock acquired to release")
        try:
            flock(self.fd, LOCK_UN)
        finally:
            os.close(self.fd)
            self.fd = None
        return True

    def __enter__(self):
        self.acquire()
        return self

    def __exit__(self, *exc):
        if self.is_locked():
            self.release()
        return False
