/**
 * Cross-process checks: the emitted file must satisfy the Python consumer's
 * strict loader and per-utterance length validation, and the built CLI must
 * behave as a standalone tool. Skipped where the counterpart is missing.
 */

import { execFileSync } from "node:child_process";
import { existsSync, mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, describe, expect, it } from "vitest";
import { exportEmbeddings } from "../src/exporter.js";
import { WordPieceTokenizer } from "../src/tokenizer.js";

const pkgRoot = fileURLToPath(new URL("..", import.meta.url));
const primarySrc = fileURLToPath(new URL("../../src", import.meta.url));
const cliPath = join(pkgRoot, "dist", "cli.js");

function havePythonConsumer(): boolean {
  try {
    execFileSync("python3", ["-c", "import cifkd.teacher"], {
      env: { ...process.env, PYTHONPATH: primarySrc },
      stdio: "pipe",
    });
    return true;
  } catch {
    return false;
  }
}

const pythonOk = havePythonConsumer();
const tmp = mkdtempSync(join(tmpdir(), "bert-exporter-"));
afterAll(() => rmSync(tmp, { recursive: true, force: true }));

describe.skipIf(!pythonOk)("python consumer", () => {
  it("loads the export with zero validation errors and aligned lengths", () => {
    const tok = new WordPieceTokenizer();
    const sentences: Record<string, string> = {
      u1: "the cat sat down",
      u2: "zq!",
      u3: "one two three .",
    };
    const tsv = Object.entries(sentences)
      .map(([id, text]) => `${id}\t${text}`)
      .join("\n");
    const outPath = join(tmp, "python-check.bin");
    writeFileSync(outPath, exportEmbeddings(tsv, { model: "seeded-base" }).bytes);

    const expected = Object.fromEntries(
      Object.entries(sentences)
        .map(([id, text]) => [id, tok.tokenize(text).length + 1]),
    );
    const script = [
      "import json, sys",
      "from cifkd.teacher import load_embedding_file, align_check",
      "path, expected = sys.argv[1], json.loads(sys.argv[2])",
      "store = load_embedding_file(path, expect_dim=768)",
      "assert len(store) == len(expected), (len(store), len(expected))",
      "for utt_id, target_len in expected.items():",
      "    seq = store.get(utt_id)",
      "    assert seq.dim == 768, seq.dim",
      "    align_check(seq, target_len)",
      "print('aligned', len(store))",
    ].join("\n");
    const out = execFileSync(
      "python3", ["-c", script, outPath, JSON.stringify(expected)],
      { env: { ...process.env, PYTHONPATH: primarySrc }, encoding: "utf-8" },
    );
    expect(out.trim()).toBe("aligned 3");
  });
});

describe.skipIf(!existsSync(cliPath))("built cli", () => {
  const run = (args: string[]) =>
    execFileSync(process.execPath, [cliPath, ...args], {
      encoding: "utf-8", stdio: "pipe",
    });

  it("exports a file end to end and reports a summary", () => {
    const input = join(tmp, "cli-input.tsv");
    const output = join(tmp, "cli-output.bin");
    writeFileSync(input, "u1\tthe cat sat down\n");
    const stdout = run(["export", "--model", "seeded-base",
                        "--input", input, "--output", output]);
    expect(stdout).toMatch(/wrote 1 record\(s\), dim 768/);
    const inProcess = exportEmbeddings("u1\tthe cat sat down\n",
                                       { model: "seeded-base" });
    expect(Buffer.from(readFileSync(output)).equals(Buffer.from(inProcess.bytes)))
      .toBe(true);
  });

  it("exits 1 on usage errors", () => {
    expect(() => run(["export", "--input", "x"])).toThrow(/status 1|missing/);
  });

  it("exits 2 on unreadable input", () => {
    const output = join(tmp, "never-written.bin");
    try {
      run(["export", "--model", "seeded-tiny",
           "--input", join(tmp, "does-not-exist.tsv"), "--output", output]);
      expect.unreachable("cli should have failed");
    } catch (err) {
      expect((err as { status?: number }).status).toBe(2);
    }
    expect(existsSync(output)).toBe(false);
  });

  it("exits 2 on malformed data naming the line", () => {
    const input = join(tmp, "bad.tsv");
    writeFileSync(input, "u1\tcat\nno tab\n");
    try {
      run(["export", "--model", "seeded-tiny",
           "--input", input, "--output", join(tmp, "bad.bin")]);
      expect.unreachable("cli should have failed");
    } catch (err) {
      const e = err as { status?: number; stderr?: string };
      expect(e.status).toBe(2);
      expect(String(e.stderr)).toMatch(/line 2/);
    }
  });
});
