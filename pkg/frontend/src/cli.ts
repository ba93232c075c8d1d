#!/usr/bin/env node
import { EmptyCsvError, MissingColumnError } from "./csv.js";
import { FIGURE_IDS, writeFigure } from "./figures.js";

function usage(): string {
  return `usage: plots <figure-id> --csv <path> [--csv <path> ...] --out <path>\n` +
    `  figure ids: ${FIGURE_IDS.join(", ")}`;
}

export function main(argv: string[]): number {
  const args = [...argv];
  const id = args.shift();
  if (!id || id === "--help" || id === "-h") {
    console.error(usage());
    return 2;
  }
  if (!FIGURE_IDS.includes(id)) {
    console.error(`unknown figure id "${id}"\n${usage()}`);
    return 2;
  }
  const csvPaths: string[] = [];
  let out: string | undefined;
  while (args.length > 0) {
    const flag = args.shift();
    if (flag === "--csv") {
      const p = args.shift();
      if (!p) { console.error("--csv needs a path"); return 2; }
      csvPaths.push(p);
    } else if (flag === "--out") {
      out = args.shift();
      if (!out) { console.error("--out needs a path"); return 2; }
    } else {
      console.error(`unknown argument "${flag}"\n${usage()}`);
      return 2;
    }
  }
  if (csvPaths.length === 0 || !out) {
    console.error(usage());
    return 2;
  }
  try {
    writeFigure({ id, csvPaths, out });
  } catch (err) {
    if (err instanceof MissingColumnError) {
      console.error(`missing column: ${err.column} (in ${err.path})`);
    } else if (err instanceof EmptyCsvError) {
      console.error(String(err.message));
    } else {
      console.error(`cannot render ${id}: ${(err as Error).message}`);
    }
    return 1;
  }
  console.log(`wrote ${out}`);
  return 0;
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
