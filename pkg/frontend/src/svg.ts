import { ChartModel, HEIGHT, MARGIN, Pt, WIDTH } from "./chart";

const BAND_OPACITY = 0.2;

function path(points: Pt[], close: boolean): string {
  const parts = points.map(
    (p, i) => `${i === 0 ? "M" : "L"}${p.x.toFixed(2)},${p.y.toFixed(2)}`
  );
  return parts.join(" ") + (close ? " Z" : "");
}

// fixed style, no timestamps: byte-identical output for identical inputs
export function renderSvg(chart: ChartModel): string {
  const lines: string[] = [];
  lines.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${chart.width}" ` +
      `height="${chart.height}" viewBox="0 0 ${chart.width} ${chart.height}" ` +
      `font-family="sans-serif" font-size="13">`
  );
  lines.push(`<rect width="${chart.width}" height="${chart.height}" fill="white"/>`);

  const x0 = MARGIN.left;
  const x1 = WIDTH - MARGIN.right;
  const y0 = MARGIN.top;
  const y1 = HEIGHT - MARGIN.bottom;

  for (const t of chart.yTicks) {
    lines.push(
      `<line x1="${x0}" y1="${t.pos.toFixed(2)}" x2="${x1}" ` +
        `y2="${t.pos.toFixed(2)}" stroke="#dddddd"/>`
    );
    lines.push(
      `<text x="${x0 - 8}" y="${(t.pos + 4).toFixed(2)}" ` +
        `text-anchor="end">${t.label}</text>`
    );
  }
  for (const t of chart.xTicks) {
    lines.push(
      `<line x1="${t.pos.toFixed(2)}" y1="${y1}" x2="${t.pos.toFixed(2)}" ` +
        `y2="${y1 + 5}" stroke="#333333"/>`
    );
    lines.push(
      `<text x="${t.pos.toFixed(2)}" y="${y1 + 20}" ` +
        `text-anchor="middle">${t.label}</text>`
    );
  }
  lines.push(`<line x1="${x0}" y1="${y1}" x2="${x1}" y2="${y1}" stroke="#333333"/>`);
  lines.push(`<line x1="${x0}" y1="${y0}" x2="${x0}" y2="${y1}" stroke="#333333"/>`);
  lines.push(
    `<text x="${(x0 + x1) / 2}" y="${HEIGHT - 12}" text-anchor="middle">` +
      `${chart.xLabel}</text>`
  );
  lines.push(
    `<text x="18" y="${(y0 + y1) / 2}" text-anchor="middle" ` +
      `transform="rotate(-90 18 ${(y0 + y1) / 2})">${chart.yLabel}</text>`
  );

  for (const s of chart.series) {
    if (s.bandWidth > 0) {
      lines.push(
        `<path class="band" d="${path(s.band, true)}" fill="${s.color}" ` +
          `fill-opacity="${BAND_OPACITY}" stroke="none"/>`
      );
    }
    lines.push(
      `<path class="mean" d="${path(s.line, false)}" fill="none" ` +
        `stroke="${s.color}" stroke-width="2"/>`
    );
  }

  chart.series.forEach((s, i) => {
    const lx = x0 + 14;
    const ly = y0 + 16 + 20 * i;
    lines.push(
      `<line class="legend" x1="${lx}" y1="${ly - 4}" x2="${lx + 26}" ` +
        `y2="${ly - 4}" stroke="${s.color}" stroke-width="2"/>`
    );
    lines.push(`<text x="${lx + 32}" y="${ly}">${s.label}</text>`);
  });

  lines.push("</svg>");
  return lines.join("\n") + "\n";
}
