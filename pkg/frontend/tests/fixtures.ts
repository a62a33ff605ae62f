import { readFileSync } from "node:fs";
import type { CaseResponse } from "../src/types.js";

export function loadFixture(name: string): CaseResponse {
  const url = new URL(`./fixtures/${name}.json`, import.meta.url);
  return JSON.parse(readFileSync(url, "utf8")) as CaseResponse;
}
