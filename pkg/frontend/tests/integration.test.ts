// Drives the real annotation service (spawned `pheno annotate`) end to end.
import { type ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import contract from "../../src/phenopipe/contracts/label_enums.json";
import { AnnotationApi, ApiError } from "../src/api";
import { AppController } from "../src/controller";
import { makePng } from "./png";

const REPO_SRC = resolve(__dirname, "../../src");

let proc: ChildProcess;
let baseUrl: string;
let storePath: string;

function startService(cropsDir: string, store: string): Promise<string> {
    return new Promise((resolvePort, reject) => {
        proc = spawn(
            "python3",
            ["-m", "phenopipe.cli", "annotate", "--crops", cropsDir, "--store", store, "--port", "0"],
            { env: { ...process.env, PYTHONPATH: REPO_SRC } },
        );
        let buffer = "";
        const timer = setTimeout(() => reject(new Error(`service did not start: ${buffer}`)), 20_000);
        proc.stdout!.on("data", (data: Buffer) => {
            buffer += data.toString();
            const match = buffer.match(/listening on (http:\/\/[\d.]+:\d+)/);
            if (match) {
                clearTimeout(timer);
                resolvePort(match[1]);
            }
        });
        proc.stderr!.on("data", (data: Buffer) => {
            buffer += data.toString();
        });
        proc.on("exit", (code) => reject(new Error(`service exited early (${code}): ${buffer}`)));
    });
}

beforeAll(async () => {
    const dir = mkdtempSync(join(tmpdir(), "annotation-ui-"));
    const cropsDir = join(dir, "crops");
    const { mkdirSync } = await import("node:fs");
    mkdirSync(cropsDir);
    for (let i = 0; i < 12; i++) {
        writeFileSync(join(cropsDir, `crop_${String(i).padStart(2, "0")}.png`), makePng(8, 6, [40, 160, 50]));
    }
    storePath = join(dir, "labels.jsonl");
    baseUrl = await startService(cropsDir, storePath);
});

afterAll(() => {
    proc?.kill();
});

function storeRecords(): { crop_id: string; task: string; labels: Record<string, unknown> }[] {
    let text = "";
    try {
        text = readFileSync(storePath, "utf-8");
    } catch {
        return [];
    }
    return text
        .split("\n")
        .filter((line) => line.trim().length > 0)
        .map((line) => JSON.parse(line));
}

describe("annotation round-trip against the live service", () => {
    it("labels 10 crops across both tasks and lands exactly 10 records", async () => {
        const api = new AnnotationApi(baseUrl);
        const controller = new AppController(api);
        const submitted: { crop_id: string; task: string }[] = [];

        await controller.start("suitability");
        for (let i = 0; i < 5; i++) {
            const state = controller.state;
            expect(state.phase).toBe("labeling");
            if (state.phase !== "labeling") throw new Error("unreachable");
            submitted.push({ crop_id: state.cropId, task: "suitability" });
            controller.chooseSuitability(i % 2 === 0);
            await controller.submit();
        }

        await controller.start("morphology");
        for (let i = 0; i < 5; i++) {
            const state = controller.state;
            expect(state.phase).toBe("labeling");
            if (state.phase !== "labeling") throw new Error("unreachable");
            submitted.push({ crop_id: state.cropId, task: "morphology" });
            controller.choose("color", contract.color[i % 4]);
            controller.choose("shape", contract.shape[(i + 1) % 4]);
            controller.choose("splotches", contract.splotches[(i + 2) % 4]);
            await controller.submit();
        }

        const records = storeRecords();
        expect(records).toHaveLength(10);
        expect(
            records.map((r) => ({ crop_id: r.crop_id, task: r.task })).sort(byKey),
        ).toEqual([...submitted].sort(byKey));
        for (const record of records) {
            if (record.task === "suitability") {
                expect(typeof record.labels.good).toBe("boolean");
            } else {
                expect(contract.color).toContain(record.labels.color);
                expect(contract.shape).toContain(record.labels.shape);
                expect(contract.splotches).toContain(record.labels.splotches);
            }
        }
    });

    it("rejects an illegal enum value without touching the store", async () => {
        const api = new AnnotationApi(baseUrl);
        const before = storeRecords().length;
        let failure: ApiError | null = null;
        try {
            await api.submit("crop_11", "morphology", {
                color: "red",
                shape: "ovate",
                splotches: "low",
            });
        } catch (error) {
            failure = error as ApiError;
        }
        expect(failure).toBeInstanceOf(ApiError);
        expect(failure!.status).toBe(422);
        expect(storeRecords()).toHaveLength(before);
    });

    it("rejects duplicate submissions with a conflict", async () => {
        const api = new AnnotationApi(baseUrl);
        const existing = storeRecords().find((r) => r.task === "suitability")!;
        let failure: ApiError | null = null;
        try {
            await api.submit(existing.crop_id, "suitability", { good: true });
        } catch (error) {
            failure = error as ApiError;
        }
        expect(failure!.status).toBe(409);
    });

    it("serves the same contract the bundle was built from", async () => {
        const response = await fetch(`${baseUrl}/api/contract`);
        expect(await response.json()).toEqual(contract);
    });
});

function byKey(a: { crop_id: string; task: string }, b: { crop_id: string; task: string }): number {
    return (a.crop_id + a.task).localeCompare(b.crop_id + b.task);
}
