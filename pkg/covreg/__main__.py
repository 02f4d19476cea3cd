"""
Allow covreg to be run as a module: python -m covreg
"""

from main import covreg_main

if __name__ == "__main__":
    covreg_main()
