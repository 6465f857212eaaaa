from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="brwlab",
    version="0.1.0",
    author="jomof",
    author_email="",
    description="Extinction, growth rates and survival of branching random walks on graphs",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(include=["brwlab", "brwlab.*"]),
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Intended Audience :: Education",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Operating System :: OS Independent",
    ],
    keywords="branching random walk extinction galton-watson perron-frobenius monte-carlo",
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.9",
        "networkx>=2.8",
    ],
    extras_require={
        "dev": [
            "pytest>=7.0.0",
            "pytest-cov>=4.0.0",
            "mypy>=1.0.0",
        ],
    },
    entry_points={
        "console_scripts": [
            "brwlab=brwlab.cli:main",
        ],
    },
    include_package_data=False,
    zip_safe=False,
)
