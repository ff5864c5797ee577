import csv
import json
import math
from dataclasses import dataclass
from typing import Any, Dict, List, TextIO, Tuple

import numpy as np

VALID_FORMATS = ("json", "csv", "text")


@dataclass(frozen=True)
class ValueReport:
    """一组具名标量，例如熵、CMI 或恢复残差。"""

    values: Dict[str, float]
    title: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.values)

    def table(self) -> Tuple[List[str], List[List[Any]]]:
        return ["quantity", "value"], [[k, v] for k, v in self.values.items()]

    def summary(self) -> List[str]:
        return [self.title] if self.title else []


def _plain(value: Any) -> Any:
    # JSON 不支持 NaN/Inf，统一写成 null
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def format_number(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "yes" if value else "no"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


class Renderer:
    def render(self, report: Any, output: TextIO):
        raise NotImplementedError


class JSONRenderer(Renderer):
    def render(self, report: Any, output: TextIO):
        # float 的 repr 保证 binary64 往返
        json.dump(_plain(report.to_dict()), output, indent=2, ensure_ascii=False)
        output.write("\n")


class CSVRenderer(Renderer):
    def render(self, report: Any, output: TextIO):
        header, rows = report.table()
        writer = csv.writer(output, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_plain(v) if isinstance(v, np.generic) else v for v in row])


class TextRenderer(Renderer):
    def render(self, report: Any, output: TextIO):
        for line in report.summary():
            output.write(f"{line}\n")

        header, rows = report.table()
        if not rows:
            return
        cells = [[format_number(v) for v in row] for row in rows]
        widths = [
            max(len(str(h)), *(len(row[i]) for row in cells)) for i, h in enumerate(header)
        ]
        output.write("\n")
        output.write("  ".join(str(h).ljust(w) for h, w in zip(header, widths)).rstrip() + "\n")
        output.write("  ".join("-" * w for w in widths) + "\n")
        for row in cells:
            output.write("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() + "\n")


def get_renderer(format_name: str) -> Renderer:
    if format_name == "json":
        return JSONRenderer()
    elif format_name == "csv":
        return CSVRenderer()
    elif format_name == "text":
        return TextRenderer()
    raise ValueError(f"不支持的输出格式: '{format_name}'，可选: {', '.join(VALID_FORMATS)}")
