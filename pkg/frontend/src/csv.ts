import { readFileSync } from "fs";
import Papa from "papaparse";

export interface Table {
  columns: string[];
  rows: Record<string, number | string>[];
}

export class MissingColumnError extends Error {
  constructor(public column: string, public path: string) {
    super(`column "${column}" not found in ${path}`);
  }
}

export class EmptyCsvError extends Error {
  constructor(path: string) {
    super(`no data rows in ${path}`);
  }
}

/** Parse a numeric cell; sweep CSVs spell out "nan", "inf" and blanks. */
export function parseCell(text: string): number | string {
  const t = text.trim();
  if (t === "") return NaN;
  const low = t.toLowerCase();
  if (low === "nan") return NaN;
  if (low === "inf" || low === "+inf" || low === "infinity") return Infinity;
  if (low === "-inf" || low === "-infinity") return -Infinity;
  if (low === "true") return 1;
  if (low === "false") return 0;
  const n = Number(t);
  return Number.isNaN(n) ? t : n;
}

export function loadCsv(path: string): Table {
  const text = readFileSync(path, "utf-8");
  const parsed = Papa.parse<string[]>(text.trim(), { skipEmptyLines: true });
  if (parsed.errors.length > 0) {
    throw new Error(`cannot parse ${path}: ${parsed.errors[0].message}`);
  }
  const data = parsed.data;
  if (data.length < 2) throw new EmptyCsvError(path);
  const columns = data[0];
  const rows = data.slice(1).map((cells) => {
    const row: Record<string, number | string> = {};
    columns.forEach((c, i) => {
      row[c] = parseCell(cells[i] ?? "");
    });
    return row;
  });
  return { columns, rows };
}

export function requireColumns(table: Table, needed: string[], path: string): void {
  for (const c of needed) {
    if (!table.columns.includes(c)) throw new MissingColumnError(c, path);
  }
}

/** Numeric column accessor; non-numeric cells come back as NaN. */
export function numbers(table: Table, column: string): number[] {
  return table.rows.map((r) => {
    const v = r[column];
    return typeof v === "number" ? v : NaN;
  });
}
