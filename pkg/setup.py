"""Setup configuration for pmemprims"""

from setuptools import setup, find_packages
from pathlib import Path

readme_file = Path(__file__).parent / "README.md"
long_description = readme_file.read_text() if readme_file.exists() else "Failure-atomic logging and page flushing on persistent memory"

setup(
    name="pmemprims",
    version="0.1.0",
    description="Persistent-memory logging and page-flush primitives with a crash-consistency checker",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=['tests', 'tests.*']),
    package_data={"pmemprims": ["data/*.yaml", "data/*.csv"]},
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Developers",
        "Intended Audience :: Science/Research",
        "Topic :: Database :: Database Engines/Servers",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Operating System :: POSIX",
    ],
    python_requires=">=3.10",
    install_requires=[
        "click>=8.1.0",
        "numpy>=1.24",
        "pyyaml>=6.0",
        "rich>=13.0.0",
    ],
    extras_require={
        "test": ["pytest>=7.4"],
    },
    entry_points={
        "console_scripts": [
            "pmemprims=pmemprims.cli:main",
        ],
    },
    include_package_data=True,
    zip_safe=False,
)
