from setuptools import find_packages
from setuptools import setup


with open("README.md") as fd:
    long_description = fd.read()

setup(
    name="meter_profiles",
    provides=["meter_profiles"],
    use_scm_version={"write_to": "src/meter_profiles/_version.py", "fallback_version": "0.1.0"},
    setup_requires=["setuptools_scm"],
    python_requires=">=3.10",
    install_requires=[
        "attrs",
        "click",
        "numpy",
        "pandas",
        "python-dotenv",
        "pyyaml",
        "scikit-learn",
    ],
    extras_require={
        "dev": [
            "pre-commit",
            "pytest",
            "pytest-datadir",
            "pytest-mock",
        ]
    },
    entry_points={"console_scripts": ["meter_profiles=meter_profiles.cli:meter_profiles"]},
    packages=find_packages("src"),
    package_dir={
        "": "src",
    },
    license="MIT",
    description="Complete 12-month consumption records from smart-meter exports: ToU profiles, back-filling and tariff comparison.",
    long_description=long_description,
    long_description_content_type="text/markdown",
    keywords="smart meter electricity load profile clustering time-of-use tariff",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3.10",
        "Topic :: Scientific/Engineering",
    ],
)
