#!/usr/bin/env python
"""Setup.py distribution file for hfalign."""
# std imports
import os

# 3rd party
import setuptools


def _get_here(fname):
    return os.path.join(os.path.dirname(__file__), fname)


class _SetupAudit(setuptools.Command):
    # Same as 'tox -everify_hierarchy'.
    description = "Verify node counts and coherence of the full-scale M5 hierarchy"
    user_options = []

    def initialize_options(self):
        pass

    def finalize_options(self):
        pass

    def run(self):
        import sys
        import subprocess
        retcode = subprocess.Popen([
            sys.executable,
            _get_here(os.path.join('bin', 'verify-hierarchy-audit.py'))]).wait()
        assert retcode == 0, ('non-zero exit code', retcode)


def main():
    """Setup.py entry point."""
    setuptools.setup(
        name='hfalign',
        # NOTE: manually manage __version__ in hfalign/__init__.py !
        version='0.1.0',
        description=(
            "Hierarchical sales forecasting with loss-multiplier alignment"),
        long_description=open(_get_here('docs/intro.rst'), encoding='utf8').read(),
        python_requires='>=3.9',
        install_requires=[
            'numpy>=1.22',
            'pandas>=1.4',
            'torch>=1.13',
            'joblib>=1.1',
            'jinja2>=3.0',
            'docopt>=0.6.2',
            'wcwidth>=0.2.6',
            'tomli>=1.1; python_version < "3.11"',
        ],
        license='MIT',
        packages=['hfalign'],
        package_data={
            'hfalign': ['templates/*.j2'],
        },
        entry_points={
            'console_scripts': ['hfalign=hfalign.cli:main'],
        },
        zip_safe=False,
        classifiers=[
            'Intended Audience :: Science/Research',
            'Natural Language :: English',
            'Development Status :: 3 - Alpha',
            'Environment :: Console',
            'License :: OSI Approved :: MIT License',
            'Operating System :: POSIX',
            'Programming Language :: Python :: 3.9',
            'Programming Language :: Python :: 3.10',
            'Programming Language :: Python :: 3.11',
            'Programming Language :: Python :: 3.12',
            'Topic :: Scientific/Engineering :: Artificial Intelligence',
            'Topic :: Office/Business :: Financial :: Accounting',
        ],
        keywords=[
            'forecasting',
            'hierarchical',
            'gradient-boosting',
            'm5',
            'time-series',
            'wrmsse',
        ],
        cmdclass={'audit': _SetupAudit},
    )


if __name__ == '__main__':
    main()
