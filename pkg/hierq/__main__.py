#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Package entry point."""
from hierq.interfaces.cli import cli


if __name__ == '__main__':
    cli()
