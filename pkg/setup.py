import setuptools

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setuptools.setup(
    name="pyalphaspectra",
    version="0.1.0",
    description="Spectral density approximation with Alpha divergences under filter-bank covariance constraints",
    long_description=long_description,
    long_description_content_type="text/markdown",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Topic :: Scientific/Engineering :: Information Analysis",
        "Programming Language :: Python :: 3",
        "Operating System :: OS Independent",
    ],
    packages = ["pyalphaspectra"],
    python_requires=">=3.7",
    package_data= {
        "" : ['*.json']
    },
    install_requires=[
        "numpy",
        "scipy>=1.4.0",
    ],
    entry_points={
        "console_scripts": ["pyalphaspectra=pyalphaspectra.cli:main"],
    },
    keywords="spectral estimation alpha divergence covariance extension convex duality newton",
)
