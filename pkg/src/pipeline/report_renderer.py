"""
PDF 报告渲染
指标表格、NPR 曲线、特征值图与 t-score 图，直接用 reportlab 画布绘制
"""

from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np
from reportlab.lib.colors import CMYKColor, Color
from reportlab.lib.pagesizes import A4
from reportlab.lib.units import mm
from reportlab.pdfgen import canvas

from src.data.types import ImageStack
from src.utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)

BLACK = CMYKColor(0, 0, 0, 1)
CURVE_COLORS = {"stm": CMYKColor(1, 0.3, 0, 0), "psf": CMYKColor(0, 0.8, 0.9, 0)}


class ReportRenderer:
    """PDF 报告渲染器"""

    def __init__(self):
        """初始化页面参数"""
        self.page_size = A4
        self.margin = 15 * mm
        self.font_name = "Helvetica"
        self.font_size = 9

    # ==================== 通用绘制方法 ====================

    def draw_title(self, c, text: str, y: float, font_size: int = 14) -> float:
        """绘制居中标题，返回下一行的 y"""
        width = self.page_size[0]
        c.setFont(self.font_name + "-Bold", font_size)
        c.drawCentredString(width / 2, y, text)
        return y - font_size * 1.6

    def draw_table(self, c, rows: List[Sequence[str]], x: float, y: float,
                   col_widths: Sequence[float], row_height: float = 6 * mm) -> float:
        """
        绘制带边框的表格

        Args:
            c: canvas对象
            rows: 行数据，第一行为表头
            x, y: 表格左上角
            col_widths: 各列宽度
            row_height: 行高

        Returns:
            表格下边缘的 y
        """
        table_width = sum(col_widths)
        table_height = row_height * len(rows)
        c.setStrokeColor(BLACK)
        c.setLineWidth(0.6)
        c.rect(x, y - table_height, table_width, table_height)
        for i in range(1, len(rows)):
            c.line(x, y - i * row_height, x + table_width, y - i * row_height)
        col_x = x
        for w in col_widths[:-1]:
            col_x += w
            c.line(col_x, y, col_x, y - table_height)

        for i, row in enumerate(rows):
            c.setFont(self.font_name + ("-Bold" if i == 0 else ""), self.font_size)
            text_y = y - (i + 1) * row_height + row_height * 0.3
            cell_x = x
            for text, w in zip(row, col_widths):
                c.drawCentredString(cell_x + w / 2, text_y, str(text))
                cell_x += w
        return y - table_height

    def draw_curves(self, c, curves: Dict[str, Dict[str, float]], x: float, y: float,
                    width: float, height: float, title: str) -> float:
        """绘制折线图（横轴为整数 L，纵轴从 0 到最大值）"""
        c.setStrokeColor(BLACK)
        c.setLineWidth(0.6)
        c.rect(x, y - height, width, height)
        c.setFont(self.font_name, self.font_size)
        c.drawString(x, y + 2 * mm, title)

        points = [(int(k), float(v)) for curve in curves.values() for k, v in curve.items()]
        if not points:
            return y - height
        ks = [p[0] for p in points]
        k_min, k_max = min(ks), max(ks)
        v_max = max(max(p[1] for p in points), 1e-12)

        def to_xy(k, v):
            fx = 0.5 if k_max == k_min else (k - k_min) / (k_max - k_min)
            return x + 5 * mm + fx * (width - 10 * mm), y - height + 5 * mm + v / v_max * (height - 10 * mm)

        for row, (name, curve) in enumerate(curves.items()):
            color = CURVE_COLORS.get(name, BLACK)
            c.setStrokeColor(color)
            c.setFillColor(color)
            coords = [to_xy(int(k), float(v)) for k, v in sorted(curve.items(), key=lambda kv: int(kv[0]))]
            for (x0, y0), (x1, y1) in zip(coords, coords[1:]):
                c.line(x0, y0, x1, y1)
            for px, py in coords:
                c.circle(px, py, 0.8 * mm, stroke=0, fill=1)
            c.drawString(x + width - 25 * mm, y - 5 * mm - row * 4 * mm, name)
        c.setFillColor(BLACK)
        c.drawString(x, y - height - 4 * mm, f"max = {v_max:.4g}, L = {k_min}..{k_max}")
        return y - height - 6 * mm

    def draw_image(self, c, image: np.ndarray, x: float, y: float, size: float, label: str):
        """以灰度像素矩形绘制二维图像（左上角为 (x, y)）"""
        image = np.asarray(image, dtype=float)
        lo, hi = float(np.min(image)), float(np.max(image))
        span = hi - lo if hi > lo else 1.0
        rows, cols = image.shape
        pixel = size / max(rows, cols)
        for i in range(rows):
            for j in range(cols):
                level = (image[i, j] - lo) / span
                c.setFillColor(Color(level, level, level))
                c.rect(x + j * pixel, y - (i + 1) * pixel, pixel, pixel, stroke=0, fill=1)
        c.setFillColor(BLACK)
        c.setFont(self.font_name, 7)
        c.drawString(x, y - rows * pixel - 3 * mm, label)

    # ==================== 报告页面 ====================

    def _metric_rows(self, report: Dict[str, Any]) -> List[Tuple[str, str, str]]:
        rows = [("method", "NRMSE", "lambda")]
        for method, entry in sorted(report.get("recon", {}).items()):
            lam = entry.get("lambda")
            rows.append((method, f"{entry['nrmse']:.4f}", "-" if lam is None else f"{lam:.3g}"))
        return rows

    def _summary_rows(self, report: Dict[str, Any]) -> List[Tuple[str, str]]:
        rows = [("item", "value")]
        acq = report.get("acquisition", {})
        ns = report.get("nullspace", {})
        if acq:
            rows.append(("acceleration R", f"{acq['acceleration']:.4f}"))
            rows.append(("coils", str(acq["coils"])))
        if ns:
            rows.append(("nullspace method", ns["method"]))
            rows.append(("rank r_C", str(ns["rank"])))
            rows.append(("filters R", str(ns["filters"])))
            rows.append(("annihilation residual", f"{ns['residual']:.3e}"))
        return rows

    def render(self, report: Dict[str, Any], stacks: Dict[str, ImageStack],
               path: Union[str, Path]) -> Path:
        """
        渲染完整报告

        Args:
            report: 流水线报告
            stacks: 图像堆栈（eigvals、tscore）
            path: 输出 PDF 路径

        Returns:
            PDF 路径
        """
        path = Path(path)
        width, height = self.page_size
        c = canvas.Canvas(str(path), pagesize=self.page_size)
        y = self.draw_title(c, f"stmrecon report: {report.get('name', '')}", height - self.margin)

        y = self.draw_table(c, self._summary_rows(report), self.margin, y,
                            [60 * mm, 40 * mm]) - 8 * mm
        y = self.draw_table(c, self._metric_rows(report), self.margin, y,
                            [50 * mm, 35 * mm, 35 * mm]) - 12 * mm

        npr_curves = report.get("metrics", {}).get("npr", {})
        if npr_curves:
            self.draw_curves(c, npr_curves, self.margin, y, width - 2 * self.margin, 60 * mm, "NPR(L)")
        c.showPage()

        y = self.draw_title(c, "image stacks (central slice)", height - self.margin)
        size = 40 * mm
        x = self.margin
        for name, stack in stacks.items():
            z = stack.values.shape[2] // 2
            for k in range(stack.values.shape[3]):
                if x + size > width - self.margin:
                    x = self.margin
                    y -= size + 10 * mm
                if y - size < self.margin:
                    c.showPage()
                    y = height - self.margin
                label = stack.labels[k] if k < len(stack.labels) else f"{name}[{k}]"
                self.draw_image(c, stack.values[:, :, z, k], x, y, size, f"{name}: {label}")
                x += size + 5 * mm
            x = self.margin
            y -= size + 10 * mm
        c.save()
        logger.info("PDF 报告已生成: %s", path)
        return path


# 全局渲染器实例
report_renderer = ReportRenderer()


def render_report_pdf(report: Dict[str, Any], stacks: Dict[str, ImageStack],
                      path: Union[str, Path]) -> Path:
    """渲染 PDF 报告"""
    return report_renderer.render(report, stacks, path)
