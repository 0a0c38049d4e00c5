from setuptools import find_packages, setup

setup(
    name="tamdlab",
    version="1.0",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    install_requires=["numpy", "scipy"],
)
