"""Allow running as: python -m smolin_qss"""
from .cli import main

main()
