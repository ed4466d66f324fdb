import setuptools

# reading long description from file
with open("README.md") as file:
    long_description = file.read()


# specify requirements of your package here
REQUIREMENTS = [
    "numpy",
    "pandas",
    "psutil",
    "pyarrow",
    "scipy",
    "tqdm",
]

# some more details
CLASSIFIERS = [
    "License :: OSI Approved :: MIT License",
    "Programming Language :: Python :: 3.9",
    "Development Status :: 4 - Beta",
]

# calling the setup function
setuptools.setup(
    name="privrec",
    version="0.1.0",
    description="differentially private social recommendations",
    long_description=long_description,
    license="MIT",
    packages=setuptools.find_packages(include=["privrec", "privrec.*"]),
    py_modules=["privrec_cli"],
    classifiers=CLASSIFIERS,
    install_requires=REQUIREMENTS,
    extras_require={"test": ["pytest"]},
    entry_points={"console_scripts": ["privrec=privrec.cli:main"]},
    keywords="differential privacy, recommendation, social graph, exponential mechanism",
)
