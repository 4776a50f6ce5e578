"""Corpus manifests: the JSON file that names the treebanks of a run.

A manifest maps names to files so multi-treebank commands stay declarative:

    {"entries": [
        {"name": "en_pud", "language_code": "en", "role": "test",
         "path": "corpora/en_pud-ud-test.conllu",
         "embeddings": "embeddings/en_pud.bin"}]}

"embeddings" is optional and only consulted by the file backend.
"""

import json
import os

ROLES = ("train", "dev", "test")


class ManifestError(ValueError):
    pass


class ManifestEntry:
    __slots__ = ("name", "language_code", "role", "path", "embeddings")

    def __init__(self, name, language_code, role, path, embeddings=None):
        self.name = name
        self.language_code = language_code
        self.role = role
        self.path = path
        self.embeddings = embeddings

    def to_dict(self):
        d = {"name": self.name, "language_code": self.language_code,
             "role": self.role, "path": self.path}
        if self.embeddings is not None:
            d["embeddings"] = self.embeddings
        return d


class CorpusManifest:
    def __init__(self, entries):
        self.entries = list(entries)

    def names(self):
        seen = []
        for entry in self.entries:
            if entry.name not in seen:
                seen.append(entry.name)
        return seen

    def by_role(self, name):
        """{role: [entries]} for one treebank name."""
        grouped = {}
        for entry in self.entries:
            if entry.name == name:
                grouped.setdefault(entry.role, []).append(entry)
        return grouped

    def with_role(self, role):
        return [e for e in self.entries if e.role == role]


def load_manifest(path):
    """Parse and validate a manifest; paths resolve relative to the file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            try:
                raw = json.load(handle)
            except json.JSONDecodeError as err:
                raise ManifestError("manifest %s is not valid JSON: %s"
                                    % (path, err)) from None
    except OSError as err:
        raise ManifestError("cannot read manifest %s: %s"
                            % (path, err)) from None
    if not isinstance(raw, dict) or "entries" not in raw:
        raise ManifestError("manifest %s must be an object with an "
                            "'entries' list" % path)
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    for index, item in enumerate(raw["entries"]):
        where = "manifest entry %d" % index
        if not isinstance(item, dict):
            raise ManifestError("%s is not an object" % where)
        for field in ("name", "language_code", "role", "path"):
            if field not in item or not isinstance(item[field], str) \
                    or not item[field]:
                raise ManifestError("%s is missing field %r" % (where, field))
        if item["role"] not in ROLES:
            raise ManifestError("%s has role %r, expected one of %s"
                                % (where, item["role"], ", ".join(ROLES)))
        file_path = item["path"]
        if not os.path.isabs(file_path):
            file_path = os.path.join(base, file_path)
        if not os.path.exists(file_path):
            raise ManifestError("%s: file does not exist: %s"
                                % (where, file_path))
        embeddings = item.get("embeddings")
        if embeddings is not None and not os.path.isabs(embeddings):
            embeddings = os.path.join(base, embeddings)
        entries.append(ManifestEntry(item["name"], item["language_code"],
                                     item["role"], file_path, embeddings))
    if not entries:
        raise ManifestError("manifest %s lists no entries" % path)
    return CorpusManifest(entries)
