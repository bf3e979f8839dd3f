"""Model checkpoints.

Layout: magic ``MKPT``, u32 LE version, u32 LE header length, UTF-8 JSON
header (taxonomy, MFC config, architecture tag, tensor names), then for
every tensor a u32 LE name length, the name and one TSR block.
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

from pydantic import ValidationError

from toolsight.exceptions import CheckpointError, FormatError, TaxonomyMismatchError
from toolsight.models.models import ClassTaxonomy, MfcConfig
from toolsight.networks.mfcnet import MfcNetParams
from toolsight.networks.miniseg import ARCH_TAG, MiniSegParams
from toolsight.tensor.tsr import decode_tsr, encode_tsr
from toolsight.utils import atomic_write

logger = logging.getLogger(__name__)

MAGIC = b"MKPT"
VERSION = 1
SFC_PREFIX = "sfc."
MFC_PREFIX = "mfc."


@dataclass
class Checkpoint:
    """A loaded model: MiniSeg weights and, for MFC checkpoints, MFCNet weights."""

    taxonomy: ClassTaxonomy
    sfc: MiniSegParams
    mfc: Optional[MfcNetParams] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def mfc_config(self) -> Optional[MfcConfig]:
        return self.mfc.cfg if self.mfc else None

    @property
    def arch(self) -> str:
        if self.mfc is None:
            return ARCH_TAG
        return f"{ARCH_TAG}+mfcnet-{self.mfc.cfg.variant}"


def save_checkpoint(path: Union[str, Path], checkpoint: Checkpoint) -> None:
    """Serialize a checkpoint; the bytes depend only on the weights and metadata."""
    tensors = {SFC_PREFIX + k: v for k, v in checkpoint.sfc.named_tensors().items()}
    if checkpoint.mfc is not None:
        tensors.update({MFC_PREFIX + k: v for k, v in checkpoint.mfc.named_tensors().items()})
    header = {
        "arch": checkpoint.arch,
        "taxonomy": checkpoint.taxonomy.model_dump(mode="json"),
        "mfc": checkpoint.mfc_config.model_dump(mode="json") if checkpoint.mfc else None,
        "tensors": list(tensors),
        "meta": checkpoint.meta,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<II", VERSION, len(header_bytes)), header_bytes]
    for name, array in tensors.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)) + encoded)
        chunks.append(encode_tsr(array))
    atomic_write(path, b"".join(chunks))
    logger.debug(f"Saved {checkpoint.arch} checkpoint to {path}")


def load_checkpoint(path: Union[str, Path], taxonomy: Optional[ClassTaxonomy] = None) -> Checkpoint:
    """
    Load a checkpoint written by ``save_checkpoint``.

    Args:
        path: Checkpoint file
        taxonomy: When given, must equal the taxonomy stored in the checkpoint

    Returns:
        The checkpoint with freshly allocated parameters

    Raises:
        CheckpointError: On a bad magic, unknown version, malformed header or
            missing/mis-shaped tensors
        TaxonomyMismatchError: If ``taxonomy`` differs from the stored one
    """
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError as e:
        raise CheckpointError(f"checkpoint not found: {path}") from e
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (magic {raw[:4]!r}, expected {MAGIC!r})")
    try:
        version, header_length = struct.unpack_from("<II", raw, 4)
        header = json.loads(raw[12 : 12 + header_length].decode("utf-8"))
        stored_taxonomy = ClassTaxonomy.model_validate(header["taxonomy"])
        mfc_cfg = MfcConfig.model_validate(header["mfc"]) if header.get("mfc") else None
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError, KeyError, ValidationError) as e:
        raise CheckpointError(f"malformed checkpoint header in {path}", detail=str(e)) from e
    if version != VERSION:
        raise CheckpointError(f"checkpoint version {version} is not supported (expected {VERSION})")
    if taxonomy is not None and taxonomy != stored_taxonomy:
        raise TaxonomyMismatchError(
            "checkpoint was trained on a different taxonomy",
            path=str(path),
            detail=f"checkpoint classes: {stored_taxonomy.classes}\nexpected: {taxonomy.classes}",
        )

    tensors = {}
    offset = 12 + header_length
    try:
        for expected in header["tensors"]:
            (name_length,) = struct.unpack_from("<I", raw, offset)
            name = raw[offset + 4 : offset + 4 + name_length].decode("utf-8")
            if name != expected:
                raise CheckpointError(f"tensor {name} found where {expected} was expected in {path}")
            tensors[name], offset = decode_tsr(raw, offset + 4 + name_length, source=str(path))
    except (struct.error, FormatError) as e:
        raise CheckpointError(f"truncated checkpoint {path}", detail=str(e)) from e

    sfc = MiniSegParams.init(stored_taxonomy.num_classes)
    sfc.load_named(tensors, prefix=SFC_PREFIX)
    mfc = None
    if mfc_cfg is not None:
        mfc = MfcNetParams.init(mfc_cfg)
        mfc.load_named(tensors, prefix=MFC_PREFIX)
    logger.info(f"Loaded {header.get('arch')} checkpoint from {path}")
    return Checkpoint(taxonomy=stored_taxonomy, sfc=sfc, mfc=mfc, meta=header.get("meta", {}))
