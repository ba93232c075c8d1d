import { Scale, ScaleSpec, makeScale, tickLabel } from "./scale.js";

export interface Series {
  label: string;
  x: number[];
  y: number[];
  /** indices drawn as open circles (e.g. non-converged sweep points) */
  markers?: number[];
}

export interface PanelSpec {
  title: string;
  xLabel: string;
  yLabel: string;
  xType?: "linear" | "log";
  yType?: "linear" | "log";
  yReversed?: boolean;
  series: Series[];
}

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
  "#8c564b", "#17becf", "#7f7f7f"];
const W = 560;
const H = 400;
const MARGIN = { left: 78, right: 16, top: 34, bottom: 52 };

function finitePairs(s: Series): [number, number][] {
  const out: [number, number][] = [];
  for (let i = 0; i < s.x.length; i++) {
    if (Number.isFinite(s.x[i]) && Number.isFinite(s.y[i])) out.push([s.x[i], s.y[i]]);
  }
  return out;
}

function extent(values: number[], type: "linear" | "log"): [number, number] {
  const ok = values.filter((v) => Number.isFinite(v) && (type !== "log" || v > 0));
  if (ok.length === 0) throw new Error("no drawable data points");
  let lo = Math.min(...ok);
  let hi = Math.max(...ok);
  if (lo === hi) {
    lo = type === "log" ? lo / 10 : lo - 1;
    hi = type === "log" ? hi * 10 : hi + 1;
  }
  return [lo, hi];
}

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function axisTicks(scale: Scale, isX: boolean, x0: number, y0: number): string {
  const parts: string[] = [];
  for (const t of scale.ticks()) {
    const p = scale(t);
    const label = esc(tickLabel(t, scale.spec.type));
    if (isX) {
      parts.push(`<line x1="${p.toFixed(1)}" y1="${y0}" x2="${p.toFixed(1)}" y2="${y0 + 5}" stroke="#333"/>`);
      parts.push(`<text x="${p.toFixed(1)}" y="${y0 + 18}" text-anchor="middle" font-size="11">${label}</text>`);
    } else {
      parts.push(`<line x1="${x0 - 5}" y1="${p.toFixed(1)}" x2="${x0}" y2="${p.toFixed(1)}" stroke="#333"/>`);
      parts.push(`<text x="${x0 - 8}" y="${(p + 3.5).toFixed(1)}" text-anchor="end" font-size="11">${label}</text>`);
    }
  }
  return parts.join("\n");
}

/** Render one panel into an SVG group; offsetX positions panels in a row. */
export function renderPanel(panel: PanelSpec, offsetX: number): string {
  const xType = panel.xType ?? "linear";
  const yType = panel.yType ?? "linear";
  const xs = panel.series.flatMap((s) => finitePairs(s).map((p) => p[0]));
  const ys = panel.series.flatMap((s) =>
    finitePairs(s).map((p) => p[1]).filter((v) => yType !== "log" || v > 0));
  const xScale = makeScale({
    type: xType,
    domain: extent(xs, xType),
    range: [offsetX + MARGIN.left, offsetX + W - MARGIN.right],
  });
  const yScale = makeScale({
    type: yType,
    domain: extent(ys, yType),
    range: [H - MARGIN.bottom, MARGIN.top],
    reversed: panel.yReversed ?? false,
  });

  const parts: string[] = [];
  parts.push(`<g data-panel="${esc(panel.title)}" data-x-scale="${xType}" ` +
    `data-y-scale="${yType}" data-y-reversed="${panel.yReversed ? "true" : "false"}">`);
  const x0 = offsetX + MARGIN.left;
  const x1 = offsetX + W - MARGIN.right;
  const y0 = H - MARGIN.bottom;
  parts.push(`<rect x="${x0}" y="${MARGIN.top}" width="${x1 - x0}" height="${y0 - MARGIN.top}" fill="none" stroke="#333"/>`);
  parts.push(axisTicks(xScale, true, 0, y0));
  parts.push(axisTicks(yScale, false, x0, 0));
  parts.push(`<text x="${(x0 + x1) / 2}" y="${H - 14}" text-anchor="middle" font-size="12">${esc(panel.xLabel)}</text>`);
  parts.push(`<text transform="translate(${offsetX + 16},${(MARGIN.top + y0) / 2}) rotate(-90)" text-anchor="middle" font-size="12">${esc(panel.yLabel)}</text>`);
  parts.push(`<text x="${(x0 + x1) / 2}" y="${MARGIN.top - 12}" text-anchor="middle" font-size="13" font-weight="bold">${esc(panel.title)}</text>`);

  panel.series.forEach((s, si) => {
    const color = COLORS[si % COLORS.length];
    // split the polyline at non-finite values
    const runs: string[][] = [[]];
    for (let i = 0; i < s.x.length; i++) {
      const drawable = Number.isFinite(s.x[i]) && Number.isFinite(s.y[i]) &&
        (yType !== "log" || s.y[i] > 0) && (xType !== "log" || s.x[i] > 0);
      if (!drawable) {
        if (runs[runs.length - 1].length > 0) runs.push([]);
        continue;
      }
      runs[runs.length - 1].push(`${xScale(s.x[i]).toFixed(2)},${yScale(s.y[i]).toFixed(2)}`);
    }
    for (const run of runs) {
      if (run.length === 1) {
        const [px, py] = run[0].split(",");
        parts.push(`<circle cx="${px}" cy="${py}" r="2" fill="${color}"/>`);
      } else if (run.length > 1) {
        parts.push(`<polyline points="${run.join(" ")}" fill="none" stroke="${color}" stroke-width="1.4"/>`);
      }
    }
    for (const mi of s.markers ?? []) {
      if (Number.isFinite(s.x[mi]) && Number.isFinite(s.y[mi]) && (yType !== "log" || s.y[mi] > 0)) {
        parts.push(`<circle cx="${xScale(s.x[mi]).toFixed(2)}" cy="${yScale(s.y[mi]).toFixed(2)}" r="4" fill="none" stroke="${color}" stroke-width="1.2"/>`);
      }
    }
    const ly = MARGIN.top + 14 + 15 * si;
    parts.push(`<line x1="${x1 - 150}" y1="${ly - 4}" x2="${x1 - 128}" y2="${ly - 4}" stroke="${color}" stroke-width="1.6"/>`);
    parts.push(`<text x="${x1 - 122}" y="${ly}" font-size="11">${esc(s.label)}</text>`);
  });
  parts.push("</g>");
  return parts.join("\n");
}

export function renderFigure(panels: PanelSpec[]): string {
  const width = W * panels.length;
  const body = panels.map((p, i) => renderPanel(p, i * W)).join("\n");
  return `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${H}" ` +
    `width="${width}" height="${H}" font-family="Helvetica, Arial, sans-serif">\n` +
    `<rect width="${width}" height="${H}" fill="white"/>\n${body}\n</svg>\n`;
}
