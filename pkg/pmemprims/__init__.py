"""pmemprims: failure-atomic logging and page flushing on persistent memory

Device model with crash-image enumeration, four write-ahead log layouts,
copy-on-write and micro-log page flushing, and a benchmark harness.
"""

__version__ = "0.1.0"
__license__ = "MIT"
