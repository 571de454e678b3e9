"""Smoke test for the liftctl Python module.

Builds the extension with cargo unless `import liftctl` already works
(for example after `pip install ./crates/py`).
"""

import importlib
import json
import math
import shutil
import subprocess
import sys
import sysconfig
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_module():
    try:
        return importlib.import_module("liftctl")
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "liftctl-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    target = ROOT / "target" / "release"
    built = next(p for p in (target / "libliftctl.so", target / "libliftctl.dylib") if p.exists())
    tmp = Path(tempfile.mkdtemp())
    shutil.copy(built, tmp / ("liftctl" + sysconfig.get_config_var("EXT_SUFFIX")))
    sys.path.insert(0, str(tmp))
    return importlib.import_module("liftctl")


def main():
    lc = load_module()
    assert lc.SCHEMA_VERSION == 1

    sphere = lc.System.builtin("sphere_bilinear")
    assert (sphere.dim, sphere.intrinsic_dim, sphere.channels) == (3, 2, 1)

    # half a turn about x3 carries e1 to -e1
    traj = sphere.simulate([1.0, 0.0, 0.0], [(math.pi, [0.0])])
    x = traj["states"][-1]
    assert abs(x[0] + 1.0) < 1e-8 and abs(x[1]) < 1e-8, x

    lifted = sphere.simulate([1.0, 0.0, 0.0], [(0.5, [0.3])], v0=[0.0, 1.0, 0.0])
    assert len(lifted["fibers"]) == len(lifted["states"])
    assert sphere.check_flow_formula([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [(0.5, [0.3])]) < 1e-4

    r = sphere.rank([0.0, 0.6, 0.8], depth=3)
    assert r["rank"] == 2, r

    line = lc.System.from_file(str(ROOT / "systems" / "line.json"))
    assert line.seed == 7
    chain = line.plan_chain([0.0], [0.0], [1.0], [0.0], 0.1, 0.5)
    parsed = json.loads(chain)
    assert parsed["legs"], parsed
    report = line.verify_chain(chain)
    assert report["passed"], report["failures"]

    parsed["legs"][0]["jump_target"]["v"][0] += 1.0
    assert not line.verify_chain(json.dumps(parsed))["passed"]

    d = line.distance([0.0], [0.0], [3.0], [4.0])
    assert abs(d - 5.0) < 1e-12, d

    try:
        lc.System.from_json('{"schema_version": 1, "manifold": {"kind": "flat", "dim": 1}}')
    except ValueError as e:
        assert "drift" in str(e), e
    else:
        raise AssertionError("malformed definition accepted")

    print("python smoke test passed:", repr(line))


if __name__ == "__main__":
    main()
