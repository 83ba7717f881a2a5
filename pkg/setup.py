import re
from setuptools import find_packages, setup

__version__ ,= re.findall('__version__ = "(.*)"', open('intersim/__init__.py').read())

setup(
    name = "intersim",
    version = __version__,
    packages = find_packages(include=['intersim', 'intersim.*']),

    requires = [],
    install_requires = ['lark>=1.1', 'runtype>=0.2.6', 'rich', 'arrow', 'numpy', 'scipy'],

    package_data = {'': ['*.lark']},

    test_suite = 'tests.__main__',

    description = "Uncertainty-aware intersection manager simulator",
    license = "MIT",
    keywords = "intersection CAV MILP Kalman",
    entry_points={'console_scripts': ['intersim=intersim.__main__:main'], },

    classifiers=[
        "Intended Audience :: Science/Research",
        "Programming Language :: Python :: 3",
        "Topic :: Scientific/Engineering",
    ],
)
