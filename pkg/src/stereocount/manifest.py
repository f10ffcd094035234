"""Dataset manifest and train/active/test partition bookkeeping.

A manifest lists every disector stack/EDF item with its mouse, section and
artifact paths (relative to the manifest's directory).  Per-mouse totals are
stored redundantly and must re-sum against the item list.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import SCHEMA_VERSION


@dataclass(frozen=True)
class MouseSpec:
    mouse_id: str
    sections: int
    stacks: int


@dataclass
class ManifestItem:
    image_id: str
    mouse_id: str
    section: int
    edf_path: str
    annotation_path: str
    stack_dir: str | None = None
    asa_mask_path: str | None = None


@dataclass
class DatasetManifest:
    mice: list[MouseSpec]
    items: list[ManifestItem]
    root: Path | None = None

    def validate(self) -> None:
        ids = [item.image_id for item in self.items]
        if len(ids) != len(set(ids)):
            raise ValueError("manifest: duplicate image ids")
        per_mouse: dict[str, int] = {}
        per_mouse_sections: dict[str, set] = {}
        for item in self.items:
            per_mouse[item.mouse_id] = per_mouse.get(item.mouse_id, 0) + 1
            per_mouse_sections.setdefault(item.mouse_id, set()).add(item.section)
        for mouse in self.mice:
            if per_mouse.get(mouse.mouse_id, 0) != mouse.stacks:
                raise ValueError(
                    f"manifest: mouse {mouse.mouse_id} lists {mouse.stacks} stacks "
                    f"but has {per_mouse.get(mouse.mouse_id, 0)} items"
                )
            if len(per_mouse_sections.get(mouse.mouse_id, set())) != mouse.sections:
                raise ValueError(
                    f"manifest: mouse {mouse.mouse_id} lists {mouse.sections} sections "
                    f"but items cover {len(per_mouse_sections.get(mouse.mouse_id, set()))}"
                )
        extras = set(per_mouse) - {m.mouse_id for m in self.mice}
        if extras:
            raise ValueError(f"manifest: items reference unlisted mice {sorted(extras)}")

    @property
    def total_stacks(self) -> int:
        return sum(m.stacks for m in self.mice)

    def mouse_items(self, mouse_id: str) -> list[ManifestItem]:
        return [item for item in self.items if item.mouse_id == mouse_id]

    def item(self, image_id: str) -> ManifestItem:
        for it in self.items:
            if it.image_id == image_id:
                return it
        raise KeyError(f"unknown image id {image_id}")

    def resolve(self, rel: str) -> Path:
        if self.root is None:
            raise ValueError("manifest has no root directory to resolve against")
        return Path(self.root) / rel

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "mice": [asdict(m) for m in self.mice],
            "items": [asdict(item) for item in self.items],
        }

    def save(self, path: str | Path) -> None:
        self.validate()
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @staticmethod
    def load(path: str | Path) -> "DatasetManifest":
        path = Path(path)
        data = json.loads(path.read_text())
        if data.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported manifest schema {data.get('schema')}")
        manifest = DatasetManifest(
            mice=[MouseSpec(**m) for m in data["mice"]],
            items=[ManifestItem(**item) for item in data["items"]],
            root=path.parent,
        )
        manifest.validate()
        return manifest


@dataclass
class Partition:
    train: list[str] = field(default_factory=list)
    active: list[str] = field(default_factory=list)
    test: list[str] = field(default_factory=list)

    def validate(self, manifest: DatasetManifest, test_mouse_id: str) -> None:
        groups = [set(self.train), set(self.active), set(self.test)]
        if groups[0] & groups[1] or groups[0] & groups[2] or groups[1] & groups[2]:
            raise ValueError("partition: train/active/test overlap")
        all_ids = {item.image_id for item in manifest.items}
        if groups[0] | groups[1] | groups[2] != all_ids:
            raise ValueError("partition: union does not cover the manifest")
        expected_test = {i.image_id for i in manifest.mouse_items(test_mouse_id)}
        if groups[2] != expected_test:
            raise ValueError(f"partition: test set must be all items of mouse {test_mouse_id}")

    def to_dict(self) -> dict:
        return {"schema": SCHEMA_VERSION, "train": sorted(self.train),
                "active": sorted(self.active), "test": sorted(self.test)}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @staticmethod
    def load(path: str | Path) -> "Partition":
        data = json.loads(Path(path).read_text())
        return Partition(train=list(data["train"]), active=list(data["active"]),
                         test=list(data["test"]))


# Reference dataset structure: mouse id -> (sections, stacks); totals 966.
REFERENCE_MICE = [
    MouseSpec("02", 8, 113),
    MouseSpec("03", 6, 121),
    MouseSpec("14", 8, 90),
    MouseSpec("17", 7, 91),
    MouseSpec("29", 8, 135),
    MouseSpec("21", 7, 102),
    MouseSpec("24", 8, 103),
    MouseSpec("67", 8, 104),
    MouseSpec("09", 6, 107),
]
REFERENCE_TEST_MOUSE = "17"


def distribute_stacks(sections: int, stacks: int) -> list[int]:
    """Split a mouse's stacks across its sections as evenly as possible."""
    base, extra = divmod(stacks, sections)
    return [base + (1 if i < extra else 0) for i in range(sections)]


def build_manifest(mice: list[MouseSpec], root: Path | None = None) -> DatasetManifest:
    """Metadata-only manifest with conventional per-item paths."""
    items = []
    for mouse in mice:
        counts = distribute_stacks(mouse.sections, mouse.stacks)
        for section, count in enumerate(counts, start=1):
            for k in range(count):
                image_id = f"m{mouse.mouse_id}_s{section:02d}_{k:03d}"
                items.append(ManifestItem(
                    image_id=image_id,
                    mouse_id=mouse.mouse_id,
                    section=section,
                    edf_path=f"edf/{image_id}.png",
                    annotation_path=f"ann/{image_id}.json",
                    stack_dir=f"stacks/{image_id}",
                    asa_mask_path=f"asa/{image_id}.png",
                ))
    manifest = DatasetManifest(mice=list(mice), items=items, root=root)
    manifest.validate()
    return manifest
