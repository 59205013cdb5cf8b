import hashlib
import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import jointsdf  # noqa: E402
from jointsdf import dataset as ds  # noqa: E402
from jointsdf.shapes import two_joint_arm  # noqa: E402
from jointsdf.ssdf import History, SsdfModel  # noqa: E402


class ArmSetup:
    """Reference body, partition, per-joint ground truth and datasets for the bundled arm."""

    def __init__(self, resolution):
        self.resolution = resolution
        self.rig, self.skin = two_joint_arm()
        self.ref = ds.build_reference(self.rig, self.skin, resolution)
        self.partition, self.regions, self.margin = ds.auto_partition(self.ref)
        self._gt, self._data = {}, {}

    def ground_truth(self, joint):
        if joint not in self._gt:
            self._gt[joint] = ds.JointGroundTruth.build(self.ref, self.regions, joint, self.resolution)
        return self._gt[joint]

    def dataset(self, joint, seed=0):
        if (joint, seed) not in self._data:
            self._data[joint, seed] = ds.build_dataset(self.ground_truth(joint), seed=seed)
        return self._data[joint, seed]


@pytest.fixture(scope="session")
def small_arm():
    return ArmSetup(24)


@pytest.fixture(scope="session")
def arm48():
    return ArmSetup(48)


def _source_digest():
    h = hashlib.sha256()
    for p in sorted(Path(jointsdf.__file__).parent.glob("*.py")):
        h.update(p.read_bytes())
    return h.hexdigest()


class ModelCache:
    """Trained models on disk, keyed by the package source and the training
    spec, so the long acceptance runs are paid once per code change."""

    def __init__(self, root: Path):
        self.root = root
        self.digest = _source_digest()

    def get(self, name: str, spec: dict, build):
        key = hashlib.sha256((self.digest + json.dumps(spec, sort_keys=True)).encode()).hexdigest()[:16]
        mpath, hpath = self.root / f"{name}-{key}.ssdf", self.root / f"{name}-{key}.json"
        if mpath.is_file() and hpath.is_file():
            h = json.loads(hpath.read_text())
            return SsdfModel.load(mpath), History(h["train"], h["val"], h["final_train"], h["final_val"])
        model, hist = build()
        model.save(mpath)
        hpath.write_text(json.dumps({"train": hist.train, "val": hist.val, "final_train": hist.final_train,
                                     "final_val": hist.final_val}))
        # reload so cached and fresh runs see the same float32 bundle
        return SsdfModel.load(mpath), hist


@pytest.fixture(scope="session")
def model_cache(request):
    return ModelCache(Path(request.config.cache.mkdir("jointsdf-models")))


# -- acceptance summary ----------------------------------------------------------

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    detail = dict(item.user_properties).get("detail", "")
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _CRITERIA[n] = ("PASS" if rep.passed else "FAIL", marker.args[1], detail)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n} {status}: {title}" + (f" ({detail})" if detail else ""))
