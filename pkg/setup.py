#!/usr/bin/env python
import os
from setuptools import setup

here = os.path.abspath(os.path.dirname(__file__))

PACKAGE = 'astinlay'


def get_version_and_cmdclass(package_path):
    """Load _version.py without importing the whole package."""
    from importlib.util import module_from_spec, spec_from_file_location

    spec = spec_from_file_location(
            "version", os.path.join(package_path, "_version.py")
        )
    module = module_from_spec(spec)
    spec.loader.exec_module(module)
    return module.__version__, module.cmdclass


def find_packages():
    """All directories below the package root holding an __init__.py"""
    packages = []
    for dir, subdirs, files in os.walk(PACKAGE):
        if '__init__.py' in files:
            packages.append(dir.replace(os.path.sep, '.'))
    return packages


def install_requires(req_file='requirements.txt'):
    with open(os.path.join(here, req_file), 'r') as fobj:
        return [line.strip() for line in fobj
                if line.strip() and not line.startswith('#')]


def get_readme(name='README.md'):
    r"""Return the content of the README file and its content type.

    The type is derived from the file extension, ``.md`` and ``.rst`` are
    recognized, everything else is plain text.
    """
    with open(os.path.join(here, name), 'r') as fobj:
        readme_content = fobj.read()
    if name.endswith('.md'):
        long_description_content_type = 'text/markdown'
    elif name.endswith('.rst'):
        long_description_content_type = 'text/x-rst'
    else:
        long_description_content_type = 'text/plain'

    return readme_content, long_description_content_type


version, cmdclass = get_version_and_cmdclass(PACKAGE)
long_description, long_description_content_type = get_readme()

setup(
    name='AstInLay',
    version=version,
    cmdclass=cmdclass,
    packages=find_packages(),
    package_data={PACKAGE: ['data/*.json']},
    entry_points={
        'console_scripts': ['astinlay = astinlay.cli:main'],
    },
    description='Explains the confidence of code completion models along '
                'the syntax tree of the completed code.',
    long_description=long_description,
    long_description_content_type=long_description_content_type,
    author='AstInLay developers',
    license='BSD',
    python_requires='>=3.9',
    install_requires=install_requires(),
    keywords='interpretability code-completion language-model syntax-tree '
             'tree-sitter token-probability causal-inference',
    classifiers=[
          'Intended Audience :: Science/Research',
          'Development Status :: 4 - Beta',
          'License :: OSI Approved :: BSD License',
          'Operating System :: OS Independent',
          'Programming Language :: Python :: 3.9',
          'Programming Language :: Python :: 3.10',
          'Programming Language :: Python :: 3.11',
          'Programming Language :: Python',
          'Topic :: Scientific/Engineering :: Artificial Intelligence',
          'Topic :: Software Development :: Quality Assurance'
    ],
    test_suite='tests',
)
