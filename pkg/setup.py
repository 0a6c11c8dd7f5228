#!/usr/bin/env python3

from setuptools import find_packages, setup

if __name__ == "__main__":
    setup(
        packages=find_packages(include=["src", "src.*"]),
        package_data={"src.helpers": ["py.typed"]},
    )
