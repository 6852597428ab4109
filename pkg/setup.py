"""Setup"""
import io

from setuptools import find_packages, setup

# Get setup packages from requirements_setup.txt
with io.open("requirements_setup.txt", encoding="utf-8") as f:
    requirements_setup = f.read().splitlines()

# Get packages from requirements.txt
with io.open("requirements.txt", encoding="utf-8") as f:
    requirements = f.read().splitlines()

# Get test packages from requirements_test.txt
with io.open("requirements_test.txt", encoding="utf-8") as f:
    requirements_test = f.read().splitlines()


setup(
    name="sparklingmri",
    description="SPARKLING k-space trajectory design and evaluation",
    keywords="mri k-space trajectory compressed-sensing",
    license="MIT",
    packages=find_packages(exclude=["tests", "generator"]),
    python_requires=">=3.11",
    install_requires=requirements,
    setup_requires=requirements_setup,
    extras_require={"test": requirements_test},
    entry_points={"console_scripts": ["sparklingmri=sparklingmri.cli:entrypoint"]},
    use_incremental=True,
)
