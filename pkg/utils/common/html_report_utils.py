from __future__ import annotations

import html as html_lib
from datetime import datetime
from typing import Dict, List, Sequence


DEFAULT_COLUMNS = (
    "Image", "Design", "Description", "Demosaicking",
    "PSNR MSI [dB]", "PSNR RGB [dB]", "Runtime [s]",
)


def _best_per_image(map_list: List[Dict[str, str]], column: str) -> set[int]:
    """Row indices holding the highest value of `column` within each image."""
    best: Dict[str, tuple[float, int]] = {}
    for i, row in enumerate(map_list):
        raw = row.get(column, "")
        try:
            value = float("inf") if raw == "inf" else float(raw)
        except ValueError:
            continue
        image = row.get("Image", "")
        if image not in best or value > best[image][0]:
            best[image] = (value, i)
    return {i for _, i in best.values()}


def generate_html_table(
        map_list: List[Dict[str, str]],
        report_title: str = "MSFA design comparison",
        columns: Sequence[str] = DEFAULT_COLUMNS,
) -> str:
    """
    Standalone HTML page with one table row per (image, design).
    The best PSNR per image is highlighted in each PSNR column.
    """
    page: List[str] = []
    page.append("<!DOCTYPE html><html><head><meta charset='utf-8'>")
    page.append(f"<title>{html_lib.escape(report_title)}</title>")
    page.append("<style>")
    page.append("th { background-color: #7D6655; color: #FCFCFC; text-align: center; font-family: 'Verdana'; font-size: 13px;height: 20px;font-weight: normal; }")
    page.append("td { font-family: 'Verdana'; font-size: 12px; text-align: left; }")
    page.append(".others { background-color: #E5DFD6 !important; color: #000000 !important; }")
    page.append(".best { background-color: #99CC66 !important; color: #000000 !important; text-align: center !important; }")
    page.append(".num { text-align: right !important; }")
    page.append("</style></head><body>")

    page.append("<table border='1' width='100%' style='table-layout:fixed;'>")
    page.append("<tr>")
    page.append(
        f"<td colspan='{len(columns)}' style='background-color: #505C45; color: #FFFFFF; font-family: Verdana; font-size: 14px; font-weight: bold; height: 30px;'>"
        "<div style='display: flex; justify-content: space-between; align-items: center;'>"
        f"<span style='flex: 1; text-align: center;'>{html_lib.escape(report_title)}</span>"
        f"<span style='font-size: 13px;'>Generated: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}</span>"
        "</div>"
        "</td>"
    )
    page.append("</tr>")

    if map_list:
        highlight = {c: _best_per_image(map_list, c) for c in columns if c.startswith("PSNR")}

        page.append("<tr>")
        for key in columns:
            width = " style='width: 260px;'" if key == "Description" else ""
            page.append(f"<th{width}>{html_lib.escape(key)}</th>")
        page.append("</tr>")

        for i, row in enumerate(map_list):
            page.append("<tr>")
            for key in columns:
                value = html_lib.escape(str(row.get(key, "")))
                if key in highlight and i in highlight[key]:
                    page.append(f"<td class='best'>{value}</td>")
                elif key.startswith(("PSNR", "Runtime")):
                    page.append(f"<td class='others num'>{value}</td>")
                else:
                    page.append(f"<td class='others'>{value}</td>")
            page.append("</tr>")

    page.append("</table></body></html>")
    return "".join(page)
