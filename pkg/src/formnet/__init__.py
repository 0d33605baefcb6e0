"""Formation control over packet-dropping links.

Rigidity tests, MSTs over healthy links, leader-anchored BLUE from relative
measurements, consensus formation control and loss-compensation strategies.
"""

__version__ = "0.1.0"
