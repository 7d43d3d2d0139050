"""Builds the extension module and exercises it from Python."""

import importlib
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module():
    subprocess.run(["cargo", "build", "--offline", "-p", "pacloud-py"], cwd=ROOT, check=True)
    built = ROOT / "target" / "debug" / "libpacloud.so"
    dest = pathlib.Path(tempfile.mkdtemp())
    shutil.copy(built, dest / "pacloud.so")
    sys.path.insert(0, str(dest))
    return importlib.import_module("pacloud")


def main():
    pc = load_module()

    assert pc.Version("6.1-r2") > pc.Version("6.1")
    assert pc.Version("1.0a") > pc.Version("1.0")
    assert pc.compare_versions("5.9-r2", "6.0") == -1
    assert pc.select_best(">=sys-libs/ncurses-6.0-r2", ["5.9-r2", "6.0-r1", "6.1-r2", "6.0"]) == "6.1-r2"

    deps = "sys-libs/zlib gpm? ( sys-libs/gpm ) !static? ( dev-libs/a )"
    assert pc.evaluate_dependencies(deps, []) == ["sys-libs/zlib", "dev-libs/a"]
    assert pc.evaluate_dependencies(deps, ["gpm", "static"]) == ["sys-libs/zlib", "sys-libs/gpm"]

    key = pc.build_key("sys-libs/ncurses", "6.1-r2", ["unicode", "gpm"])
    assert key == "sys-libs/ncurses-6.1-r2[gpm,unicode]", key
    assert pc.emerge_command(key).startswith('env USE="gpm unicode" emerge --onlydeps')

    assert abs(pc.estimate_storage_cost(20000, 2.0, 1.0) - 39.0625) < 1e-9
    ratio = pc.device_ratio("sys-devel/gcc", "Raspberry Pi 2", "c5.9xlarge")
    assert abs(ratio * 100 - 5.05) < 0.01, ratio
    assert pc.makespan(2, [("a/b-1[]", 10.0), ("a/c-1[]", 20.0), ("a/d-1[]", 5.0)]) == 20.0

    try:
        pc.Version("not-a-version")
    except ValueError:
        pass
    else:
        raise AssertionError("invalid version accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
