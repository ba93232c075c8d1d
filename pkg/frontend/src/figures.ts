import { basename } from "path";
import { writeFileSync } from "fs";
import { Table, loadCsv, numbers, requireColumns } from "./csv.js";
import { PanelSpec, Series, renderFigure } from "./svg.js";

export interface FigureSpec {
  id: string;
  csvPaths: string[];
  out: string;
}

interface Loaded {
  path: string;
  table: Table;
}

function stem(path: string): string {
  return basename(path).replace(/\.[^.]*$/, "");
}

function circleLabel(t: Table, path: string): string {
  const row = t.rows[0];
  const tol = row["T_tol"];
  const tolText = tol === Infinity ? "inf" : String(tol);
  return `${row["precond_kind"]}/${tolText}`;
}

function filterMethod(loaded: Loaded[], method: string): Loaded[] {
  const out = loaded
    .map(({ path, table }) => ({
      path,
      table: {
        columns: table.columns,
        rows: table.rows.filter((r) => r["method"] === method),
      },
    }))
    .filter((l) => l.table.rows.length > 0);
  if (out.length === 0) {
    throw new Error(`no rows with method "${method}" in the given CSVs`);
  }
  return out;
}

function trapezoid(x: number[], y: number[]): number {
  const pts = x
    .map((xi, i) => [xi, y[i]] as [number, number])
    .filter((p) => Number.isFinite(p[0]) && Number.isFinite(p[1]))
    .sort((a, b) => a[0] - b[0]);
  let total = 0;
  for (let i = 1; i < pts.length; i++) {
    total += 0.5 * (pts[i][1] + pts[i - 1][1]) * (pts[i][0] - pts[i - 1][0]);
  }
  return total;
}

function barSeries(loaded: Loaded[], column: string, single: boolean): Series[] {
  return loaded.map(({ path, table }) => ({
    label: single ? stem(path) : `${stem(path)} ${column}`,
    x: numbers(table, "r_over_L"),
    y: numbers(table, column),
  }));
}

const ITER_COLUMNS: [string, string][] = [
  ["n_itr_none", "no M"],
  ["n_itr_jac", "M jac"],
  ["n_itr_ilu", "M ilu"],
];

function iterationPanels(loaded: Loaded[], method: string): PanelSpec[] {
  const byMethod = filterMethod(loaded, method);
  const iterSeries: Series[] = [];
  const errSeries: Series[] = [];
  for (const { path, table } of byMethod) {
    const label = circleLabel(table, path);
    const x = numbers(table, "r");
    for (const [col, name] of ITER_COLUMNS) {
      const y = numbers(table, col);
      if (y.every((v) => !Number.isFinite(v))) continue;
      const variant = col.replace("n_itr_", "");
      const markers = table.rows
        .map((r, i) => (String(r["gmres_failed"]).split(";").includes(variant) ? i : -1))
        .filter((i) => i >= 0);
      iterSeries.push({ label: `${label} ${name}`, x, y, markers });
    }
    errSeries.push({ label, x, y: numbers(table, "e_L2") });
  }
  const panels: PanelSpec[] = [
    {
      title: `iterations (${method})`,
      xLabel: "inclusion radius",
      yLabel: "iterations to convergence",
      yType: "log",
      series: iterSeries,
    },
  ];
  if (errSeries.some((s) => s.y.some((v) => Number.isFinite(v) && v > 0))) {
    panels.push({
      title: `solution error vs direct reference (${method})`,
      xLabel: "inclusion radius",
      yLabel: "error 2-norm",
      yType: "log",
      series: errSeries.filter((s) => s.y.some((v) => Number.isFinite(v) && v > 0)),
    });
  }
  return panels;
}

export function buildPanels(id: string, loaded: Loaded[]): PanelSpec[] {
  switch (id) {
    case "fig6": {
      for (const l of loaded) {
        requireColumns(l.table, ["r_over_L", "T_focus1", "T_focus2",
          "Jtilde_diag1", "Jtilde_diag2"], l.path);
      }
      return [
        {
          title: "scaling entries of the focus DOFs",
          xLabel: "interface position / length",
          yLabel: "diagonal scaling",
          yType: "log",
          series: [...barSeries(loaded, "T_focus1", false),
            ...barSeries(loaded, "T_focus2", false)],
        },
        {
          title: "transformed Jacobian diagonal",
          xLabel: "interface position / length",
          yLabel: "diagonal entry",
          yType: "log",
          series: [...barSeries(loaded, "Jtilde_diag1", false),
            ...barSeries(loaded, "Jtilde_diag2", false)],
        },
      ];
    }
    case "fig7": {
      for (const l of loaded) requireColumns(l.table, ["r_over_L", "cond"], l.path);
      return [{
        title: "condition number vs interface position",
        xLabel: "interface position / length",
        yLabel: "condition number",
        yType: "log",
        series: barSeries(loaded, "cond", true),
      }];
    }
    case "fig8": {
      for (const l of loaded) {
        requireColumns(l.table, ["r_over_L", "uhat_focus1", "utilde_focus1",
          "uhat_focus2", "utilde_focus2"], l.path);
      }
      return [1, 2].map((slot) => ({
        title: `focus DOF ${slot}: physical and transformed values`,
        xLabel: "interface position / length",
        yLabel: "DOF value",
        series: [...barSeries(loaded, `uhat_focus${slot}`, false),
          ...barSeries(loaded, `utilde_focus${slot}`, false)],
      }));
    }
    case "fig10": {
      for (const l of loaded) requireColumns(l.table, ["r", "A_min"], l.path);
      return [{
        title: "minimum element area ratio",
        xLabel: "inclusion radius",
        yLabel: "area ratio (axis reversed)",
        yType: "log",
        yReversed: true,
        series: loaded.map(({ path, table }) => ({
          label: stem(path),
          x: numbers(table, "r"),
          y: numbers(table, "A_min"),
        })),
      }];
    }
    case "fig11": {
      for (const l of loaded) {
        requireColumns(l.table, ["r", "T_tol", "precond_kind", "cond", "e_L2"],
          l.path);
      }
      const groups = new Map<string, { tol: number; cmax: number; etot: number }[]>();
      for (const { table } of loaded) {
        const kind = String(table.rows[0]["precond_kind"]);
        const tol = Number(table.rows[0]["T_tol"]);
        if (!Number.isFinite(tol)) continue; // unconstrained runs have no x position
        const conds = numbers(table, "cond").filter(Number.isFinite);
        const entry = {
          tol,
          cmax: Math.max(...conds),
          etot: trapezoid(numbers(table, "r"), numbers(table, "e_L2")),
        };
        groups.set(kind, [...(groups.get(kind) ?? []), entry]);
      }
      if (groups.size === 0) {
        throw new Error("no finite-tolerance runs among the given CSVs");
      }
      const cSeries: Series[] = [];
      const eSeries: Series[] = [];
      for (const [kind, entries] of groups) {
        entries.sort((a, b) => a.tol - b.tol);
        cSeries.push({ label: kind, x: entries.map((e) => e.tol),
          y: entries.map((e) => e.cmax) });
        if (entries.some((e) => e.etot > 0)) {
          eSeries.push({ label: kind, x: entries.map((e) => e.tol),
            y: entries.map((e) => e.etot) });
        }
      }
      const panels: PanelSpec[] = [{
        title: "max condition number vs constraining tolerance",
        xLabel: "constraining tolerance",
        yLabel: "max condition number",
        xType: "log",
        yType: "log",
        series: cSeries,
      }];
      if (eSeries.length > 0) {
        // cond-only runs carry no solution error; skip the panel then
        panels.push({
          title: "integrated solution error vs constraining tolerance",
          xLabel: "constraining tolerance",
          yLabel: "integrated error",
          xType: "log",
          yType: "log",
          series: eSeries,
        });
      }
      return panels;
    }
    case "fig12":
    case "fig13": {
      for (const l of loaded) {
        requireColumns(l.table, ["r", "method", "precond_kind", "T_tol", "cond"],
          l.path);
      }
      const method = id === "fig12" ? "stabilized_lagrange" : "nitsche";
      const byMethod = filterMethod(loaded, method);
      return [{
        title: `condition number vs inclusion radius (${method})`,
        xLabel: "inclusion radius",
        yLabel: "condition number",
        yType: "log",
        series: byMethod.map(({ path, table }) => ({
          label: circleLabel(table, path),
          x: numbers(table, "r"),
          y: numbers(table, "cond"),
        })),
      }];
    }
    case "fig14":
    case "fig15": {
      for (const l of loaded) {
        requireColumns(l.table, ["r", "method", "e_L2", "gmres_failed",
          "n_itr_none", "n_itr_jac", "n_itr_ilu"], l.path);
      }
      const method = id === "fig14" ? "stabilized_lagrange" : "nitsche";
      return iterationPanels(loaded, method);
    }
    default:
      throw new Error(`unknown figure id "${id}"`);
  }
}

export const FIGURE_IDS = ["fig6", "fig7", "fig8", "fig10", "fig11", "fig12",
  "fig13", "fig14", "fig15"];

export function renderFigureSpec(spec: FigureSpec): string {
  const loaded = spec.csvPaths.map((path) => ({ path, table: loadCsv(path) }));
  return renderFigure(buildPanels(spec.id, loaded));
}

export function writeFigure(spec: FigureSpec): void {
  writeFileSync(spec.out, renderFigureSpec(spec), "utf-8");
}
