__version__ = "0.1.0"

from bmlab._LAB import LAB
