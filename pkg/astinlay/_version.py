"""Version of the package, taken from git while developing.

Source and binary distributions get the resolved version written into
``_static_version.py`` by the `cmdclass` hooks used in ``setup.py``.
"""
import os
import subprocess
from typing import NamedTuple, Optional, Tuple

from setuptools.command.build_py import build_py as build_py_orig
from setuptools.command.sdist import sdist as sdist_orig

__all__ = []

STATIC_VERSION_FILE = '_static_version.py'
USE_GIT = '__use_git__'

package_root = os.path.dirname(os.path.realpath(__file__))
package_name = os.path.basename(package_root)
distr_root = os.path.dirname(package_root)


class Version(NamedTuple):
    release: str
    dev: Optional[str]
    labels: Tuple[str, ...]

    def pep440(self) -> str:
        text = self.release
        if self.dev:
            text += f'.dev{self.dev}'
        if self.labels:
            text += '+' + '.'.join(self.labels)
        return text


def static_version_info() -> dict:
    info = {}
    with open(os.path.join(package_root, STATIC_VERSION_FILE), 'rb') as fobj:
        exec(fobj.read(), {}, info)
    return info


def _git(*args) -> Optional[str]:
    try:
        done = subprocess.run(
            ('git',) + args, cwd=distr_root, capture_output=True, text=True)
    except OSError:
        return None
    if done.returncode != 0:
        return None
    return done.stdout.strip()


def version_from_git() -> Optional[Version]:
    toplevel = _git('rev-parse', '--show-toplevel')
    if toplevel is None or not os.path.samefile(toplevel, distr_root):
        # the distribution is not the root of a git checkout
        return None
    description = _git('describe', '--tags', '--long', '--always',
                       '--first-parent')
    if description is None:
        return None
    parts = description.lstrip('v').rsplit('-', 2)
    if len(parts) == 3:
        release, dev, commit = parts
    else:
        release, dev, commit = 'unknown', None, f'g{parts[0]}'
    labels = []
    if dev == '0':
        dev = None
    else:
        labels.append(commit)
    if _git('diff', '--quiet') is None:
        labels.append('dirty')
    return Version(release, dev, tuple(labels))


def version_from_archive(info: dict) -> Optional[Version]:
    refnames, git_hash = info.get('refnames', ''), info.get('git_hash', '')
    if not git_hash or '$Format' in git_hash or '$Format' in refnames:
        return None
    tags = sorted(r.strip()[len('tag: v'):] for r in refnames.split(',')
                  if r.strip().startswith('tag: v'))
    if tags:
        return Version(tags[0], None, ())
    return Version('unknown', None, (f'g{git_hash}',))


def get_version() -> str:
    info = static_version_info()
    if info['version'] != USE_GIT:
        return info['version']
    version = version_from_git() or version_from_archive(info) or \
        Version('unknown', None, ())
    return version.pep440()


__version__ = get_version()


def _write_version(fname: str):
    # may be a hard link into the source tree
    try:
        os.remove(fname)
    except OSError:
        pass
    with open(fname, 'w') as fobj:
        fobj.write('# This file has been created by setup.py.\n'
                   f"version = '{__version__}'\n")


class _build_py(build_py_orig):
    def run(self):
        super().run()
        _write_version(
            os.path.join(self.build_lib, package_name, STATIC_VERSION_FILE))


class _sdist(sdist_orig):
    def make_release_tree(self, base_dir, files):
        super().make_release_tree(base_dir, files)
        _write_version(
            os.path.join(base_dir, package_name, STATIC_VERSION_FILE))


cmdclass = dict(sdist=_sdist, build_py=_build_py)
