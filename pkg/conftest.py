# 让 tests/ 在仓库根目录下直接导入 jc_blockade
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
