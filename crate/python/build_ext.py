#!/usr/bin/env python3
"""Build the resq_py extension module and copy it next to this script.

Usage: python3 python/build_ext.py [--release]
"""
import shutil
import subprocess
import sys
import sysconfig
from pathlib import Path

HERE = Path(__file__).resolve().parent
ROOT = HERE.parent


def main() -> None:
    release = "--release" in sys.argv[1:]
    cmd = ["cargo", "build", "-p", "resq-py"]
    if release:
        cmd.append("--release")
    subprocess.run(cmd, cwd=ROOT, check=True)

    profile = "release" if release else "debug"
    built = ROOT / "target" / profile / "libresq_py.so"
    if not built.exists():  # e.g. macOS
        built = ROOT / "target" / profile / "libresq_py.dylib"
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    dest = HERE / f"resq_py{suffix}"
    shutil.copy2(built, dest)
    print(f"copied {built} -> {dest}")


if __name__ == "__main__":
    main()
