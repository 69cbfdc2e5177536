"""Setup for Pypi"""
import os
from setuptools import setup, find_packages


version = '0.1.0'
packages = find_packages(exclude=['test'])


def get_pkg_data(pkg_name, data_dirs, extensions):
    """Recursively get package data.

    This should be called from within setup.py's setuptools.setup() function,
    e.g. package_data={'my_package': get_pkg_data(pkg_name='my_package', ...)}

    Args:
        pkg_name (str): Name of package containing package data.
        data_dirs (list): Directories under the package root to walk.
        extensions (list): File extensions to include.

    Returns:
        list: List of glob strings where each string represents a terminal
        branch node (i.e. folder) and a glob of all files ending in designated
        extension(s).

    Examples:
        Args: get_pkg_data(pkg_name='hierq', data_dirs=['templates'],
        extensions=['j2'])

        Returns: [
        'templates/*.j2',
        'templates/default/*.j2']
    """
    pkg_root = \
        os.path.dirname(os.path.realpath(__file__)) + '/{}/'.format(pkg_name)
    pkg_data = []
    for _dir in data_dirs:
        for ext in extensions:
            for i, j, y in os.walk(pkg_root + _dir):
                pkg_data.append(i[len(pkg_root):] + '/*.' + ext)
    return pkg_data


setup(
    name='hierq',
    version=version,
    packages=packages,
    package_dir={
        'hierq': 'hierq'
    },
    package_data={
        'hierq': get_pkg_data(
            pkg_name='hierq',
            data_dirs=['templates'],
            extensions=['j2'])
    },
    license='LICENSE.txt',
    description='Simulator and analysis toolkit for hierarchical local SGD '
                'with quantized aggregation.',
    long_description=open('README.md').read(),
    long_description_content_type='text/markdown',
    python_requires='>=3.8',
    install_requires=[
        'numpy>=1.22',
        'pydantic>=2.0',
        'Jinja2>=2.10'
    ],
    entry_points={
        'console_scripts': ['hierq=hierq.interfaces.cli:cli']
    }
)
