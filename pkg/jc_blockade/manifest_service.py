import hashlib
import json
import logging
import threading
from pathlib import Path
from types import MappingProxyType
from typing import Any

logger = logging.getLogger("jc_blockade")


class ManifestService:
    """产物清单服务，所有输出文件都经由它串行写出并登记内容哈希。"""

    MANIFEST_SUFFIX = "_manifest.json"

    def __init__(self, prefix: str | Path):
        """初始化清单服务。

        Args:
            prefix: 输出路径前缀，例如 ``jc_out/run``；产物写为 ``<prefix>_<suffix>``
        """
        self._prefix = Path(prefix)
        self._out_dir = self._prefix.parent
        self._lock = threading.Lock()
        self._artifacts: dict[str, dict[str, Any]] = {}

    @property
    def prefix(self) -> Path:
        return self._prefix

    @property
    def manifest_path(self) -> Path:
        return self._out_dir / f"{self._prefix.name}{self.MANIFEST_SUFFIX}"

    def path_for(self, suffix: str) -> Path:
        return self._out_dir / f"{self._prefix.name}_{suffix}"

    @staticmethod
    def compute_hash(data: str | bytes) -> str:
        """计算数据的 SHA-256 哈希。

        Args:
            data: 文本（按 UTF-8 编码）或字节

        Returns:
            十六进制摘要
        """
        if isinstance(data, str):
            data = data.encode("utf-8")
        return hashlib.sha256(data).hexdigest()

    def write_text(self, suffix: str, text: str, kind: str) -> Path:
        """写出一个产物并登记到清单。

        Args:
            suffix: 文件名后缀（含扩展名）
            text: 文件内容
            kind: 产物类型，例如 series、record、wigner

        Returns:
            写出的路径
        """
        data = text.encode("utf-8")
        path = self.path_for(suffix)
        with self._lock:
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_bytes(data)
            except OSError as e:
                logger.error(f"写出 {path} 失败: {e}", exc_info=True)
                raise
            self._artifacts[path.name] = {"kind": kind, "sha256": self.compute_hash(data), "bytes": len(data)}
        logger.info(f"已写出 {path} ({len(data)} 字节)")
        return path

    def get_artifacts(self) -> MappingProxyType:
        """返回产物表的只读视图。"""
        return MappingProxyType(self._artifacts)

    def manifest_text(self) -> str:
        # 不含时间戳，相同场景的清单逐字节一致
        with self._lock:
            payload = {"artifacts": dict(self._artifacts)}
        return json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n"

    def save_manifest(self) -> Path:
        """把清单持久化为 ``<prefix>_manifest.json``。"""
        text = self.manifest_text()
        path = self.manifest_path
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        logger.info(f"清单已保存: {path}，共 {len(self._artifacts)} 个产物")
        return path

    @staticmethod
    def load_manifest(path: str | Path) -> dict[str, dict[str, Any]]:
        with open(path, encoding="utf-8") as f:
            return json.load(f)["artifacts"]

    @classmethod
    def verify(cls, path: str | Path) -> list[str]:
        """重新计算清单中每个产物的哈希，返回不匹配或缺失的文件名。"""
        path = Path(path)
        mismatched = []
        for name, entry in sorted(cls.load_manifest(path).items()):
            artifact = path.parent / name
            if not artifact.exists() or cls.compute_hash(artifact.read_bytes()) != entry["sha256"]:
                mismatched.append(name)
        if mismatched:
            logger.warning(f"清单校验失败: {mismatched}")
        return mismatched
