export type ScaleType = "linear" | "log";

export interface ScaleSpec {
  type: ScaleType;
  domain: [number, number];
  range: [number, number];
  /** flip the output direction (used for the reversed area-ratio axis) */
  reversed?: boolean;
}

export interface Scale {
  (value: number): number;
  spec: ScaleSpec;
  ticks(): number[];
}

function niceLinearTicks(lo: number, hi: number, target = 5): number[] {
  if (!(hi > lo)) return [lo];
  const raw = (hi - lo) / target;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const step = [1, 2, 5, 10].map((m) => m * mag).find((s) => (hi - lo) / s <= target) ?? mag * 10;
  const first = Math.ceil(lo / step) * step;
  const out: number[] = [];
  for (let v = first; v <= hi + 1e-12 * step; v += step) out.push(v);
  return out;
}

function decadeTicks(lo: number, hi: number): number[] {
  const out: number[] = [];
  let e = Math.ceil(Math.log10(lo) - 1e-12);
  const eMax = Math.floor(Math.log10(hi) + 1e-12);
  // cap the label count for very wide ranges
  const stride = Math.max(1, Math.ceil((eMax - e + 1) / 12));
  for (; e <= eMax; e += stride) out.push(Math.pow(10, e));
  return out;
}

export function makeScale(spec: ScaleSpec): Scale {
  const [d0, d1] = spec.domain;
  const [r0, r1] = spec.reversed ? [spec.range[1], spec.range[0]] : spec.range;
  let toUnit: (v: number) => number;
  if (spec.type === "log") {
    if (!(d0 > 0) || !(d1 > 0)) {
      throw new Error(`log scale needs a positive domain, got [${d0}, ${d1}]`);
    }
    const l0 = Math.log10(d0);
    const l1 = Math.log10(d1);
    toUnit = (v) => (Math.log10(v) - l0) / (l1 - l0 || 1);
  } else {
    toUnit = (v) => (v - d0) / (d1 - d0 || 1);
  }
  const fn = ((v: number) => r0 + (r1 - r0) * toUnit(v)) as Scale;
  fn.spec = spec;
  fn.ticks = () =>
    spec.type === "log" ? decadeTicks(d0, d1) : niceLinearTicks(d0, d1);
  return fn;
}

export function tickLabel(value: number, type: ScaleType): string {
  if (type === "log") {
    const e = Math.round(Math.log10(value));
    return `1e${e}`;
  }
  if (value === 0) return "0";
  const a = Math.abs(value);
  if (a >= 1e4 || a < 1e-3) return value.toExponential(1);
  return String(Math.round(value * 1e6) / 1e6);
}
