"""Directory manifests: what the sync session exchanges and compares."""

from __future__ import annotations

import hashlib
import os
import stat
from dataclasses import dataclass, field
from pathlib import Path

KIND_FILE = "file"
KIND_DIR = "dir"
KIND_SYMLINK = "symlink"


@dataclass(frozen=True)
class FileEntry:
    path: str               # relative, '/'-separated, canonical
    kind: str
    size: int
    mtime_s: int
    mtime_ns: int
    mode: int
    target: str = ""        # symlink destination
    digest: bytes = b""     # optional whole-file md5 (checksum mode)


@dataclass
class Manifest:
    entries: list[FileEntry] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def is_safe_relpath(path: str) -> bool:
    """Canonical relative path: no absolute form, no '.'/'..' segments."""
    if not path or path.startswith("/") or "\\" in path or "\x00" in path:
        return False
    return all(seg not in ("", ".", "..") for seg in path.split("/"))


def _entry_for(full: Path, rel: str, st: os.stat_result,
               with_digest: bool) -> FileEntry:
    mtime_s, mtime_ns = divmod(st.st_mtime_ns, 1_000_000_000)
    mode = stat.S_IMODE(st.st_mode)
    if stat.S_ISLNK(st.st_mode):
        return FileEntry(rel, KIND_SYMLINK, 0, mtime_s, mtime_ns, mode,
                         target=os.readlink(full))
    if stat.S_ISDIR(st.st_mode):
        return FileEntry(rel, KIND_DIR, 0, mtime_s, mtime_ns, mode)
    digest = file_digest(full) if with_digest else b""
    return FileEntry(rel, KIND_FILE, st.st_size, mtime_s, mtime_ns, mode,
                     digest=digest)


def scan_tree(root: str | Path, recursive: bool = True,
              with_digest: bool = False) -> Manifest:
    """Collect sorted entries under ``root``; symlinks recorded, not followed.

    Raises OSError when the root itself is unreadable; unreadable
    children are skipped with a warning in the manifest.
    """
    root = Path(root)
    manifest = Manifest()
    # errors on the root itself propagate; children only warn
    pending = [(root / name, name) for name in os.listdir(root)]
    while pending:
        full, rel = pending.pop()
        try:
            st = os.lstat(full)
        except OSError as exc:
            manifest.warnings.append(f"{rel}: {exc.strerror or exc}")
            continue
        if not (stat.S_ISREG(st.st_mode) or stat.S_ISDIR(st.st_mode)
                or stat.S_ISLNK(st.st_mode)):
            manifest.warnings.append(f"{rel}: special file skipped")
            continue
        try:
            entry = _entry_for(full, rel, st, with_digest)
        except OSError as exc:
            manifest.warnings.append(f"{rel}: {exc.strerror or exc}")
            continue
        manifest.entries.append(entry)
        if entry.kind == KIND_DIR and recursive:
            try:
                pending.extend((full / name, rel + "/" + name)
                               for name in os.listdir(full))
            except OSError as exc:
                manifest.warnings.append(f"{rel}: {exc.strerror or exc}")
    manifest.entries.sort(key=lambda e: e.path)
    return manifest


def manifest_for_source(path: str | Path, recursive: bool = True,
                        with_digest: bool = False) -> tuple[Path, Manifest]:
    """(root, manifest) for a sync source: a directory scans to its
    entries, a single file becomes a one-entry manifest rooted at its
    parent."""
    path = Path(path)
    st = os.lstat(path)
    if stat.S_ISDIR(st.st_mode):
        return path, scan_tree(path, recursive=recursive, with_digest=with_digest)
    manifest = Manifest()
    manifest.entries.append(_entry_for(path, path.name, st, with_digest))
    return path.parent, manifest


def file_digest(path: str | Path) -> bytes:
    h = hashlib.md5()
    with open(path, "rb") as f:
        while True:
            chunk = f.read(1 << 20)
            if not chunk:
                break
            h.update(chunk)
    return h.digest()


def tree_digests(root: str | Path) -> dict[str, tuple]:
    """Per-path comparison key for whole-tree equality checks in tests
    and verification: (kind, size, md5 | target)."""
    result = {}
    for entry in scan_tree(root, recursive=True).entries:
        if entry.kind == KIND_FILE:
            key = (entry.kind, entry.size, file_digest(Path(root) / entry.path))
        elif entry.kind == KIND_SYMLINK:
            key = (entry.kind, 0, entry.target)
        else:
            key = (entry.kind, 0, b"")
        result[entry.path] = key
    return result
